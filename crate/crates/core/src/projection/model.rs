use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adamw_update, Mlp, Mode, Moments, ParamVisitor, Trainable};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

use super::inn::Inn;

const CHECKPOINT_FORMAT: &str = "dualproj-projection-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Width of every hidden layer; also the latent width.
    pub hidden_dim: usize,
    /// Anchors per mini-batch. `None` uses a tenth of the training set.
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight of the reconstruction term.
    pub lambda: f64,
    /// Positives are drawn from this many input-space nearest neighbors.
    pub knn_positive_k: usize,
    /// Neighbors used to estimate the auxiliary component when inverting.
    pub phi_k: usize,
    /// Bound on the coupling log-scale.
    pub clamp: f64,
    pub seed: u64,
    /// Residual corrections applied when inverting moved points.
    pub inverse_refine: usize,
    /// Gradient steps on the inputs after those corrections.
    pub preimage_steps: usize,
    pub preimage_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            batch_size: None,
            lr: 0.01,
            weight_decay: 0.01,
            epochs: 1000,
            tau: 0.15,
            lambda: 0.1,
            knn_positive_k: 10,
            phi_k: 10,
            clamp: 5.0,
            seed: 0,
            inverse_refine: 3,
            preimage_steps: 0,
            preimage_lr: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.hidden_dim < 3 {
            return bad(format!("hidden_dim {} < 3", self.hidden_dim));
        }
        if matches!(self.batch_size, Some(b) if b < 2) {
            return bad("batch_size must be at least 2".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau {} must be positive", self.tau));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if self.knn_positive_k == 0 || self.phi_k == 0 {
            return bad("neighbor counts must be at least 1".into());
        }
        if !(self.clamp > 0.0) || !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("clamp must be positive, lr and weight_decay non-negative".into());
        }
        if !(self.preimage_lr > 0.0) {
            return bad(format!("preimage_lr {} must be positive", self.preimage_lr));
        }
        Ok(())
    }

    /// Batch size actually used for `n` training rows.
    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(n / 10).clamp(2, n.max(2))
    }
}

/// Autoencoder wrapped around an invertible network. Forward: standardize,
/// encode, run the INN and keep the first two outputs. Inverse: estimate the
/// auxiliary component from stored training outputs, invert the INN, decode.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ProjectionModel<T> {
    pub config: TrainConfig,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub inn: Inn<T>,
    /// `y` of every training row (`n x 2`).
    pub train_embeddings: Dense2D<T>,
    /// `phi` of every training row (`n x (latent_dim - 2)`).
    pub train_aux: Dense2D<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct Checkpoint<T> {
    format: String,
    version: u32,
    model: ProjectionModel<T>,
}

#[derive(Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
struct CheckpointRef<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a ProjectionModel<T>,
}

impl<T: Scalar> ProjectionModel<T> {
    pub fn aux_dim(&self) -> usize {
        self.latent_dim - 2
    }

    pub fn cast<U: Scalar>(&self) -> ProjectionModel<U> {
        ProjectionModel {
            config: self.config.clone(),
            input_dim: self.input_dim,
            latent_dim: self.latent_dim,
            mean: self.mean.iter().map(|&v| v.cast()).collect(),
            std: self.std.iter().map(|&v| v.cast()).collect(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            inn: self.inn.cast(),
            train_embeddings: self.train_embeddings.cast(),
            train_aux: self.train_aux.cast(),
        }
    }

    pub fn standardize(&self, rows: &Dense2D<T>) -> Result<Dense2D<T>> {
        if rows.cols() != self.input_dim {
            return Err(Error::dim("project", self.input_dim, rows.cols()));
        }
        let mut out = rows.clone();
        for i in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn destandardize(&self, rows: &Dense2D<T>) -> Dense2D<T> {
        let mut out = rows.clone();
        for i in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }

    /// Latent codes of raw input rows.
    pub fn encode(&self, rows: &Dense2D<T>) -> Result<Dense2D<T>> {
        self.encoder.infer(&self.standardize(rows)?)
    }

    /// Raw-scale rows decoded from latent codes.
    pub fn decode(&self, latents: &Dense2D<T>) -> Result<Dense2D<T>> {
        if latents.cols() != self.latent_dim {
            return Err(Error::dim("decode", self.latent_dim, latents.cols()));
        }
        Ok(self.destandardize(&self.decoder.infer(latents)?))
    }

    /// `[y | phi]` for every input row.
    pub fn embed(&self, rows: &Dense2D<T>) -> Result<Dense2D<T>> {
        self.inn.forward(&self.encode(rows)?)
    }

    /// 2-D projection of every input row.
    pub fn project(&self, rows: &Dense2D<T>) -> Result<Dense2D<T>> {
        Ok(self.embed(rows)?.col_range(0, 2))
    }

    /// `decoder(encoder(x))` in raw scale.
    pub fn reconstruct(&self, rows: &Dense2D<T>) -> Result<Dense2D<T>> {
        self.decode(&self.encode(rows)?)
    }

    pub fn inn_forward(&self, z: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let out = self.inn.forward(&Dense2D::new(1, z.len(), z.to_vec())?)?;
        Ok((out.row(0)[..2].to_vec(), out.row(0)[2..].to_vec()))
    }

    pub fn inn_inverse(&self, y: &[T], phi: &[T]) -> Result<Vec<T>> {
        if y.len() != 2 || phi.len() != self.aux_dim() {
            return Err(Error::dim(
                "inn_inverse",
                format!("2 + {}", self.aux_dim()),
                format!("{} + {}", y.len(), phi.len()),
            ));
        }
        let mut a = y.to_vec();
        a.extend_from_slice(phi);
        Ok(self.inn.inverse(&Dense2D::new(1, a.len(), a)?)?.into_vec())
    }

    /// Inverse-distance-weighted auxiliary component from the `k` stored
    /// training outputs nearest to `y`. An exact hit returns that row's
    /// stored component unchanged.
    pub fn estimate_phi(&self, y: &[T], k: usize) -> Result<Vec<T>> {
        let n = self.train_embeddings.rows();
        if n == 0 {
            return Err(Error::State("model has no stored training outputs".into()));
        }
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if y.len() != 2 {
            return Err(Error::dim("estimate_phi", 2, y.len()));
        }
        let k = k.min(n);
        // (squared distance, index), ascending; ties keep the lower index
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        for i in 0..n {
            let r = self.train_embeddings.row(i);
            let d = (r[0] - y[0]) * (r[0] - y[0]) + (r[1] - y[1]) * (r[1] - y[1]);
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        if best[0].0 == T::zero() {
            return Ok(self.train_aux.row(best[0].1).to_vec());
        }
        let mut acc = vec![T::zero(); self.aux_dim()];
        let mut norm = T::zero();
        for &(d2, i) in &best {
            let w = T::one() / d2.sqrt();
            norm += w;
            for (a, &p) in acc.iter_mut().zip(self.train_aux.row(i)) {
                *a += w * p;
            }
        }
        acc.iter_mut().for_each(|a| *a /= norm);
        Ok(acc)
    }

    /// Rows in input space whose projections are `targets` (`n x 2`).
    pub fn inverse_project(&self, targets: &Dense2D<T>, k: usize) -> Result<Dense2D<T>> {
        if targets.cols() != 2 {
            return Err(Error::dim("inverse_project", 2, targets.cols()));
        }
        let mut a = Dense2D::zeros(targets.rows(), self.latent_dim);
        for i in 0..targets.rows() {
            let y = targets.row(i);
            let phi = self.estimate_phi(y, k)?;
            let row = a.row_mut(i);
            row[..2].copy_from_slice(y);
            row[2..].copy_from_slice(&phi);
        }
        let z = self.inn.inverse(&a)?;
        self.decode(&z)
    }

    /// `inverse_project`, then up to `steps` corrections that shift each
    /// target by the residual `project(x) - target` and invert again. Every
    /// row keeps the iterate whose projection lands closest to its target.
    /// Returns the rows and their projections.
    pub fn inverse_project_fitted(
        &self,
        targets: &Dense2D<T>,
        k: usize,
        steps: usize,
    ) -> Result<(Dense2D<T>, Dense2D<T>)> {
        let mut best = self.inverse_project(targets, k)?;
        let mut best_proj = self.project(&best)?;
        if steps == 0 || targets.rows() == 0 {
            return Ok((best, best_proj));
        }
        let residual = |p: &Dense2D<T>, i: usize| -> (T, T) {
            let (a, b) = (p.row(i), targets.row(i));
            (a[0] - b[0], a[1] - b[1])
        };
        let sq = |(u, v): (T, T)| u * u + v * v;
        let mut best_err: Vec<T> = (0..targets.rows()).map(|i| sq(residual(&best_proj, i))).collect();
        let mut p = best_proj.clone();
        let mut shifted = targets.clone();
        for _ in 0..steps {
            for i in 0..targets.rows() {
                let (u, v) = residual(&p, i);
                let row = shifted.row_mut(i);
                row[0] = row[0] - u;
                row[1] = row[1] - v;
            }
            let candidate = self.inverse_project(&shifted, k)?;
            p = self.project(&candidate)?;
            for i in 0..targets.rows() {
                let e = sq(residual(&p, i));
                if e < best_err[i] {
                    best_err[i] = e;
                    best.row_mut(i).copy_from_slice(candidate.row(i));
                    best_proj.row_mut(i).copy_from_slice(p.row(i));
                }
            }
        }
        Ok((best, best_proj))
    }

    /// Gradient search for raw-scale rows whose projection lands on
    /// `targets`, started from `init`. Adam on the standardized inputs;
    /// every row keeps its best iterate.
    pub fn fit_preimage(&self, targets: &Dense2D<T>, init: &Dense2D<T>, steps: usize, lr: T) -> Result<Dense2D<T>> {
        if targets.cols() != 2 || init.rows() != targets.rows() {
            return Err(Error::dim(
                "fit_preimage",
                format!("{} x 2 targets", init.rows()),
                format!("{:?}", targets.shape()),
            ));
        }
        let n = targets.rows();
        let mut u = self.standardize(init)?;
        let mut best = u.clone();
        let mut best_err = vec![T::infinity(); n];
        let (mut encoder, mut inn) = (self.encoder.clone(), self.inn.clone());
        let mut moments = Moments::new(u.as_slice().len());
        for t in 0..=steps {
            let out = inn.forward_train(&encoder.forward(&u, Mode::Infer)?, Mode::Infer)?;
            let mut grad = Dense2D::zeros(n, self.latent_dim);
            for i in 0..n {
                let (y, target) = (out.row(i), targets.row(i));
                let (r0, r1) = (y[0] - target[0], y[1] - target[1]);
                let e = r0 * r0 + r1 * r1;
                if e < best_err[i] {
                    best_err[i] = e;
                    best.row_mut(i).copy_from_slice(u.row(i));
                }
                let g = grad.row_mut(i);
                g[0] = r0 + r0;
                g[1] = r1 + r1;
            }
            if t == steps {
                break;
            }
            let gu = encoder.backward(&inn.backward(&grad)?)?;
            let betas = (T::lit(0.9), T::lit(0.999));
            adamw_update(u.as_mut_slice(), gu.as_slice(), &mut moments, t as u64 + 1, lr, T::zero(), betas, T::lit(1e-8));
        }
        Ok(self.destandardize(&best))
    }

    /// Recomputes the stored `(y, phi)` table from the training rows.
    pub fn refresh_store(&mut self, rows: &Dense2D<T>) -> Result<()> {
        let out = self.embed(rows)?;
        self.train_embeddings = out.col_range(0, 2);
        self.train_aux = out.col_range(2, self.latent_dim);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&CheckpointRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint<T> = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut model = ck.model;
        model.inn.restore()?;
        model.check_consistency()?;
        Ok(model)
    }

    fn check_consistency(&self) -> Result<()> {
        let n = self.train_embeddings.rows();
        if self.mean.len() != self.input_dim
            || self.std.len() != self.input_dim
            || self.encoder.input_dim() != self.input_dim
            || self.decoder.output_dim() != self.input_dim
            || self.inn.width() != self.latent_dim
            || self.train_embeddings.cols() != 2
            || self.train_aux.rows() != n
            || self.train_aux.cols() != self.aux_dim()
        {
            return Err(Error::Parse("checkpoint shapes are inconsistent".into()));
        }
        Ok(())
    }

    /// Writes a JSON checkpoint atomically (temp file, then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl<T: Scalar> Trainable<T> for ProjectionModel<T> {
    fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.decoder.zero_grad();
        self.inn.zero_grad();
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        let p = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        self.encoder.visit_params(&p("encoder"), f);
        self.decoder.visit_params(&p("decoder"), f);
        self.inn.visit_params(&p("inn"), f);
    }
}
