use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Dense2D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub seed: u64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// `None` picks `max(n / exaggeration / 4, 50)`.
    pub learning_rate: Option<f64>,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iters: 1000,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: None,
        }
    }
}

const ENTROPY_TOL: f64 = 1e-5;

/// Row-conditional affinities `p_{j|i}` with each row's Gaussian precision
/// tuned by bisection so its Shannon entropy is `ln(perplexity)`.
pub fn conditional_probabilities(x: &Dense2D<f64>, perplexity: f64) -> Result<Dense2D<f64>> {
    let n = x.rows();
    if !(perplexity >= 5.0 && perplexity <= (n as f64 - 1.0) / 3.0) {
        return Err(Error::Argument(format!(
            "perplexity {perplexity} outside [5, (n - 1) / 3] for n = {n}"
        )));
    }
    let d2 = x.pairwise_sq_distances();
    let target = perplexity.ln();
    let mut p = Dense2D::zeros(n, n);
    for i in 0..n {
        let row = d2.row(i);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut probs = vec![0.0; n];
        for _ in 0..200 {
            // shift by the nearest distance for numerical range
            let dmin = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                probs[j] = if j == i { 0.0 } else { (-(row[j] - dmin) * beta).exp() };
                sum += probs[j];
            }
            let mut weighted = 0.0;
            for j in 0..n {
                probs[j] /= sum;
                weighted += probs[j] * (row[j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted;
            let gap = entropy - target;
            if gap.abs() < ENTROPY_TOL {
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        p.row_mut(i).copy_from_slice(&probs);
    }
    Ok(p)
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(x: &Dense2D<f64>, perplexity: f64) -> Result<Dense2D<f64>> {
    let cond = conditional_probabilities(x, perplexity)?;
    let n = x.rows();
    let scale = 1.0 / (2.0 * n as f64);
    Ok(Dense2D::from_fn(n, n, |i, j| (cond[(i, j)] + cond[(j, i)]) * scale))
}

/// Exact t-SNE to two dimensions.
pub fn tsne_project(x: &Dense2D<f64>, config: &TsneConfig) -> Result<Dense2D<f64>> {
    let n = x.rows();
    let p = joint_probabilities(x, config.perplexity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid");
    let mut y = Dense2D::from_fn(n, 2, |_, _| init.sample(&mut rng));
    let lr = config
        .learning_rate
        .unwrap_or_else(|| (n as f64 / config.early_exaggeration / 4.0).max(50.0));
    let mut velocity = Dense2D::<f64>::zeros(n, 2);
    let mut gains = Dense2D::filled(n, 2, 1.0f64);
    let mut num = Dense2D::<f64>::zeros(n, n);
    let mut grad = Dense2D::<f64>::zeros(n, 2);
    for it in 0..config.iters {
        let (exag, momentum) = if it < config.exaggeration_iters {
            (config.early_exaggeration, 0.5)
        } else {
            (1.0, 0.8)
        };
        let mut z = 0.0;
        for i in 0..n {
            let (yi0, yi1) = (y[(i, 0)], y[(i, 1)]);
            for j in 0..n {
                let v = if i == j {
                    0.0
                } else {
                    let (a, b) = (yi0 - y[(j, 0)], yi1 - y[(j, 1)]);
                    1.0 / (1.0 + a * a + b * b)
                };
                num.row_mut(i)[j] = v;
                z += v;
            }
        }
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            let (prow, nrow) = (p.row(i), num.row(i));
            for j in 0..n {
                let m = (exag * prow[j] - nrow[j] / z) * nrow[j];
                g0 += m * (y[(i, 0)] - y[(j, 0)]);
                g1 += m * (y[(i, 1)] - y[(j, 1)]);
            }
            grad.row_mut(i).copy_from_slice(&[4.0 * g0, 4.0 * g1]);
        }
        for ((g, v), gain) in grad
            .as_slice()
            .iter()
            .zip(velocity.as_mut_slice())
            .zip(gains.as_mut_slice())
        {
            *gain = if (*g > 0.0) != (*v > 0.0) { *gain + 0.2 } else { (*gain * 0.8).max(0.01) };
            *v = momentum * *v - lr * *gain * g;
        }
        for (yv, v) in y.as_mut_slice().iter_mut().zip(velocity.as_slice()) {
            *yv += v;
        }
        let mean = y.column_means();
        y.add_row_vector(&[-mean[0], -mean[1]]);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dense2D<f64> {
        Dense2D::from_fn(40, 5, |i, j| ((i * 37 + j * 11) % 23) as f64 / 5.0 + (i % 3) as f64 * 4.0)
    }

    #[test]
    fn rows_sum_to_one_and_hit_perplexity() {
        let p = conditional_probabilities(&sample(), 8.0).unwrap();
        for i in 0..40 {
            let row = p.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v: &f64| -v * v.log2()).sum();
            assert!((h - 8f64.log2()).abs() < 1e-3, "row {i} entropy {h}");
        }
    }

    #[test]
    fn joint_is_symmetric_and_normalized() {
        let p = joint_probabilities(&sample(), 6.0).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert_eq!(p, p.transpose());
    }

    #[test]
    fn infeasible_perplexity() {
        assert!(conditional_probabilities(&sample(), 20.0).is_err());
        assert!(conditional_probabilities(&sample(), 4.0).is_err());
    }
}
