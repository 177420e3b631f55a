use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neighbors::knn_indices;
use crate::nn::{cosine_lr, AdamW, Mlp, Mode, Trainable};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

use super::inn::Inn;
use super::model::{ProjectionModel, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub projection: f64,
    pub reconstruction: f64,
}

/// InfoNCE over a batch of `2b` projected points where row `i` and row
/// `i + b` form a positive pair and every other row is a negative.
/// Similarity is the negative squared Euclidean distance.
///
/// Returns the mean loss and its gradient w.r.t. `y`.
pub fn contrastive_loss<T: Scalar>(y: &Dense2D<T>, b: usize, tau: T) -> Result<(T, Dense2D<T>)> {
    let m = y.rows();
    if m != 2 * b || b == 0 || y.cols() != 2 {
        return Err(Error::dim("contrastive_loss", format!("{}x2", 2 * b), format!("{m}x{}", y.cols())));
    }
    let mut grad = Dense2D::zeros(m, 2);
    let mut total = T::zero();
    let scale = T::one() / T::lit(m as f64);
    let two_over_tau = T::lit(2.0) / tau;
    let mut logits = vec![T::zero(); m];
    for i in 0..m {
        let partner = (i + b) % m;
        let yi = y.row(i);
        let mut max = T::neg_infinity();
        for (t, l) in logits.iter_mut().enumerate() {
            if t == i {
                continue;
            }
            let yt = y.row(t);
            let d = (yi[0] - yt[0]) * (yi[0] - yt[0]) + (yi[1] - yt[1]) * (yi[1] - yt[1]);
            *l = -d / tau;
            max = max.max(*l);
        }
        let mut denom = T::zero();
        for (t, &l) in logits.iter().enumerate() {
            if t != i {
                denom += (l - max).exp();
            }
        }
        let lse = max + denom.ln();
        total += lse - logits[partner];
        for t in 0..m {
            if t == i {
                continue;
            }
            let mut coef = (logits[t] - lse).exp();
            if t == partner {
                coef -= T::one();
            }
            // d loss / d logit_t = coef; d logit_t / d y_i = -2 (y_i - y_t) / tau
            let c = coef * scale * two_over_tau;
            let (dx, dy) = (y[(i, 0)] - y[(t, 0)], y[(i, 1)] - y[(t, 1)]);
            grad[(i, 0)] -= c * dx;
            grad[(i, 1)] -= c * dy;
            grad[(t, 0)] += c * dx;
            grad[(t, 1)] += c * dy;
        }
    }
    Ok((total * scale, grad))
}

/// Fits a projection model; see [`train_logged`].
pub fn train<T: Scalar>(rows: &Dense2D<T>, config: &TrainConfig) -> Result<ProjectionModel<T>> {
    Ok(train_logged(rows, config)?.0)
}

/// Fits a projection model and returns the per-epoch mean losses.
///
/// Each step draws `b` anchors, pairs every anchor with a uniformly chosen
/// member of its input-space neighborhood, and minimizes the contrastive
/// loss on the 2-D outputs plus `lambda` times the mean squared
/// reconstruction error of the autoencoder.
pub fn train_logged<T: Scalar>(
    rows: &Dense2D<T>,
    config: &TrainConfig,
) -> Result<(ProjectionModel<T>, Vec<EpochLoss>)> {
    config.validate()?;
    let (n, d) = rows.shape();
    if n < 2 * config.knn_positive_k {
        return Err(Error::Argument(format!(
            "{n} rows is fewer than twice the positive neighborhood {}",
            config.knn_positive_k
        )));
    }
    if !rows.is_finite() {
        return Err(Error::Argument("training rows contain non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mean = rows.column_means();
    let scale: Vec<T> = rows
        .column_variances()
        .into_iter()
        .map(|v| {
            let s = v.sqrt();
            if s > T::lit(1e-12) {
                s
            } else {
                T::one()
            }
        })
        .collect();

    let h = config.hidden_dim;
    let latent = config.hidden_dim;
    let mut model = ProjectionModel {
        config: config.clone(),
        input_dim: d,
        latent_dim: latent,
        mean,
        std: scale,
        encoder: Mlp::new(&[d, h, h, h, latent], false, &mut rng),
        decoder: Mlp::new(&[latent, h, h, h, d], false, &mut rng),
        inn: Inn::new(latent, h, T::lit(config.clamp), &mut rng)?,
        train_embeddings: Dense2D::zeros(0, 2),
        train_aux: Dense2D::zeros(0, latent - 2),
    };
    let xs = model.standardize(rows)?;
    let k = config.knn_positive_k;
    let knn = knn_indices(&xs, k);

    let tau = T::lit(config.tau);
    let lambda = T::lit(config.lambda);
    let mut opt = AdamW::new(T::lit(config.lr), T::lit(config.weight_decay));
    let b = config.effective_batch(n);
    let n_batches = n.div_ceil(b);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        opt.lr = T::lit(cosine_lr(config.lr, epoch, config.epochs)?);
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_proj, mut sum_rec) = (0.0, 0.0, 0.0);
        let mut start = 0;
        for bi in 0..n_batches {
            let len = n / n_batches + usize::from(bi < n % n_batches);
            let anchors = &order[start..start + len];
            start += len;
            let mut idx = anchors.to_vec();
            idx.extend(anchors.iter().map(|&a| knn[a][rng.random_range(0..knn[a].len())]));
            let xb = xs.select_rows(&idx);

            model.zero_grad();
            let z = model.encoder.forward(&xb, Mode::Train)?;
            let out = model.inn.forward_train(&z, Mode::Train)?;
            let (proj, gy) = contrastive_loss(&out.col_range(0, 2), len, tau)?;
            let mut g_out = Dense2D::zeros(out.rows(), latent);
            for i in 0..out.rows() {
                g_out.row_mut(i)[..2].copy_from_slice(gy.row(i));
            }
            let mut gz = model.inn.backward(&g_out)?;

            let mut recon = T::zero();
            if config.lambda > 0.0 {
                let xhat = model.decoder.forward(&z, Mode::Train)?;
                let diff = xhat.sub(&xb)?;
                let count = T::lit(diff.as_slice().len() as f64);
                recon = diff.as_slice().iter().map(|&v| v * v).sum::<T>() / count;
                let g = diff.map(|v| v * T::lit(2.0) * lambda / count);
                gz.add_assign(&model.decoder.backward(&g)?)?;
            }
            model.encoder.backward(&gz)?;

            let total = proj + lambda * recon;
            if !total.is_finite() {
                return Err(Error::Training {
                    location: format!("epoch {epoch}"),
                    detail: format!("loss is {total}"),
                });
            }
            opt.step(&mut model, "")
                .map_err(|e| match e {
                    Error::Training { location, detail } => Error::Training {
                        location: format!("epoch {epoch}, {location}"),
                        detail,
                    },
                    other => other,
                })?;
            sum_total += total.as_f64();
            sum_proj += proj.as_f64();
            sum_rec += recon.as_f64();
        }
        let nb = n_batches as f64;
        history.push(EpochLoss {
            epoch,
            total: sum_total / nb,
            projection: sum_proj / nb,
            reconstruction: sum_rec / nb,
        });
    }

    model.refresh_store(rows)?;
    Ok((model, history))
}
