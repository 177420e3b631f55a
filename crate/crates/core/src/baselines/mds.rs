use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

use super::pca::pca_project;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmacofConfig {
    pub max_iter: usize,
    /// Stop once the relative stress decrease falls below this.
    pub tol: f64,
}

impl Default for SmacofConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-7,
        }
    }
}

/// Result of a majorization run: the optimized variable and the objective
/// after every iteration (`history[0]` is the starting value).
#[derive(Clone, Debug)]
pub struct StressState<V> {
    pub value: V,
    pub stress: f64,
    pub iteration: usize,
    pub history: Vec<f64>,
}

fn euclidean_distances<T: Scalar>(x: &Dense2D<T>) -> Dense2D<T> {
    x.pairwise_sq_distances().map(|v| v.sqrt())
}

/// `sum_{i<j} (delta_ij - |s_i - s_j|)^2`.
pub fn raw_stress<T: Scalar>(delta: &Dense2D<T>, s: &Dense2D<T>) -> T {
    let d = euclidean_distances(s);
    let mut total = T::zero();
    for i in 0..s.rows() {
        for j in i + 1..s.rows() {
            let r = delta[(i, j)] - d[(i, j)];
            total += r * r;
        }
    }
    total
}

/// Two-dimensional metric MDS of the rows of `x` by SMACOF, started from
/// the PCA projection.
pub fn mds_smacof<T: Scalar>(x: &Dense2D<T>, config: &SmacofConfig) -> Result<StressState<Dense2D<T>>> {
    let n = x.rows();
    if n < 3 {
        return Err(Error::Argument(format!("MDS needs at least 3 rows, got {n}")));
    }
    let delta = euclidean_distances(x);
    let start = if x.cols() >= 2 {
        pca_project(x, 2)?
    } else {
        Dense2D::hcat(&pca_project(x, 1)?, &Dense2D::zeros(n, 1))?
    };
    smacof_from(&delta, start, config)
}

/// SMACOF iterations on a target distance matrix from a given start.
pub fn smacof_from<T: Scalar>(
    delta: &Dense2D<T>,
    mut s: Dense2D<T>,
    config: &SmacofConfig,
) -> Result<StressState<Dense2D<T>>> {
    let n = s.rows();
    if delta.shape() != (n, n) {
        return Err(Error::dim("smacof", format!("{n}x{n}"), format!("{:?}", delta.shape())));
    }
    let mut stress = raw_stress(delta, &s).as_f64();
    let mut history = vec![stress];
    let inv_n = T::one() / T::lit(n as f64);
    let mut iteration = 0;
    while iteration < config.max_iter && stress > 0.0 {
        // Guttman transform: s <- B(s) s / n
        let d = euclidean_distances(&s);
        let mut b = Dense2D::zeros(n, n);
        for i in 0..n {
            let mut diag = T::zero();
            for j in 0..n {
                if i != j && d[(i, j)] > T::zero() {
                    let v = -delta[(i, j)] / d[(i, j)];
                    b.row_mut(i)[j] = v;
                    diag -= v;
                }
            }
            b.row_mut(i)[i] = diag;
        }
        let mut next = b.matmul(&s)?;
        next.scale(inv_n);
        let next_stress = raw_stress(delta, &next).as_f64();
        iteration += 1;
        s = next;
        let converged = stress - next_stress < config.tol * stress;
        stress = next_stress;
        history.push(stress);
        if converged {
            break;
        }
    }
    Ok(StressState {
        value: s,
        stress,
        iteration,
        history,
    })
}
