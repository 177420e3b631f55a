//! Genomic trait prediction: PCA of the genotype matrix followed by a small
//! fully connected regressor.

use dualproj_core::baselines::Pca;
use dualproj_core::nn::{cosine_lr, AdamW, Mlp, Mode, Trainable};
use dualproj_core::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::traits::TraitTable;

/// Fewest hybrids a predictor is trained on.
pub const MIN_TRAINING_HYBRIDS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub pca_dims: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Share of the training hybrids held out to pick the best epoch.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            pca_dims: 200,
            hidden: 128,
            epochs: 400,
            lr: 3e-3,
            weight_decay: 2.0,
            validation_fraction: 0.15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraitPredictor {
    pub trait_names: Vec<String>,
    pca: Pca<f64>,
    score_scale: Vec<f64>,
    net: Mlp<f64>,
    target_mean: Vec<f64>,
    target_scale: Vec<f64>,
}

fn mean_and_scale(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mean = m.column_means();
    let scale = m
        .column_variances()
        .into_iter()
        .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

fn standardized(m: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] - mean[j]) / scale[j])
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// Fits a predictor of every trait in `traits` from genotypes.
pub fn train_trait_predictor(
    genotypes: &GenotypeMatrix,
    traits: &TraitTable,
    config: &PredictorConfig,
) -> Result<TraitPredictor> {
    let n = genotypes.n_hybrids();
    if n < MIN_TRAINING_HYBRIDS {
        return Err(Error::Argument(format!(
            "{n} hybrids; the predictor needs at least {MIN_TRAINING_HYBRIDS}"
        )));
    }
    if traits.values.rows() != n {
        return Err(Error::Data(format!("{} trait rows for {n} hybrids", traits.values.rows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).min(n - 2);
    let (val_idx, fit_idx) = order.split_at(n_val);

    let x = genotypes.to_matrix();
    let fit_x = x.select_rows(fit_idx);
    let dims = config.pca_dims.min(x.cols()).min(fit_idx.len() - 1);
    let pca = Pca::fit(&fit_x, dims)?;
    let scores = pca.transform(&fit_x)?;
    let (_, score_scale) = mean_and_scale(&scores);
    let zeros = vec![0.0; dims];
    let inputs = standardized(&scores, &zeros, &score_scale);

    let y = traits.values.select_rows(fit_idx);
    let (target_mean, target_scale) = mean_and_scale(&y);
    for (name, v) in traits.names.iter().zip(y.column_variances()) {
        if v <= 1e-24 {
            log::warn!("trait {name} is constant over the training hybrids");
        }
    }
    let targets = standardized(&y, &target_mean, &target_scale);

    let mut predictor = TraitPredictor {
        trait_names: traits.names.clone(),
        pca,
        score_scale,
        net: Mlp::new(&[dims, config.hidden, config.hidden, traits.names.len()], false, &mut rng),
        target_mean,
        target_scale,
    };
    let val_x = x.select_rows(val_idx);
    let val_y = standardized(&traits.values.select_rows(val_idx), &predictor.target_mean, &predictor.target_scale);
    let mut best = (f64::INFINITY, predictor.net.clone());
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    for epoch in 0..config.epochs {
        opt.lr = cosine_lr(config.lr, epoch, config.epochs)?;
        predictor.net.zero_grad();
        let out = predictor.net.forward(&inputs, Mode::Train)?;
        let count = out.as_slice().len() as f64;
        let grad = out.zip_map(&targets, |o, t| 2.0 * (o - t) / count);
        predictor.net.backward(&grad)?;
        opt.step(&mut predictor.net, "predictor")?;
        let score = if val_idx.is_empty() {
            mse(&predictor.net.infer(&inputs)?, &targets)
        } else {
            mse(&predictor.standardized_output(&val_x)?, &val_y)
        };
        if score < best.0 {
            best = (score, predictor.net.clone());
        }
    }
    predictor.net = best.1;
    Ok(predictor)
}

impl TraitPredictor {
    fn standardized_output(&self, x: &Matrix) -> Result<Matrix> {
        let scores = self.pca.transform(x)?;
        let zeros = vec![0.0; scores.cols()];
        Ok(self.net.infer(&standardized(&scores, &zeros, &self.score_scale))?)
    }

    /// Predicted traits (`rows x traits`) of real-valued genotype rows.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.standardized_output(x)?;
        Ok(Matrix::from_fn(z.rows(), z.cols(), |i, j| {
            z[(i, j)] * self.target_scale[j] + self.target_mean[j]
        }))
    }

    /// Predicted traits of one encoded genotype.
    pub fn predict(&self, genotype: &[u8]) -> Result<Vec<f64>> {
        let row = Matrix::new(1, genotype.len(), genotype.iter().map(|&v| v as f64).collect())?;
        Ok(self.predict_matrix(&row)?.into_vec())
    }
}

/// Coefficient of determination of `predicted` against `truth`.
pub fn r_squared(truth: &[f64], predicted: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth.iter().zip(predicted).map(|(t, p)| (t - p).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}
