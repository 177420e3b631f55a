use std::time::Instant;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm, Dense2D};

use super::mds::{mds_smacof, SmacofConfig, StressState};

const EPS: f64 = 1e-12;

fn target_distances<T: Scalar>(s: &Dense2D<T>) -> Dense2D<T> {
    s.pairwise_sq_distances().map(|v| v.sqrt())
}

fn scaled<T: Scalar>(x: &Dense2D<T>, w: &[T]) -> Dense2D<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, &wk) in out.row_mut(i).iter_mut().zip(w) {
            *v *= wk;
        }
    }
    out
}

fn weighted_distances<T: Scalar>(x: &Dense2D<T>, w: &[T]) -> Dense2D<T> {
    let eps = T::lit(EPS);
    scaled(x, w).pairwise_sq_distances().map(|v| (v + eps).sqrt())
}

fn objective_from<T: Scalar>(d: &Dense2D<T>, delta: &Dense2D<T>) -> f64 {
    let n = d.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let r = (d[(i, j)] - delta[(i, j)]).as_f64();
            total += r * r;
        }
    }
    total
}

/// `sum_{i<j} (|x_i W - x_j W| - |s_i - s_j|)^2` for diagonal `W = diag(w)`.
pub fn sirius_objective<T: Scalar>(x: &Dense2D<T>, target: &Dense2D<T>, w: &[T]) -> Result<f64> {
    check(x, target)?;
    Ok(objective_from(&weighted_distances(x, w), &target_distances(target)))
}

fn check<T: Scalar>(x: &Dense2D<T>, target: &Dense2D<T>) -> Result<()> {
    if target.rows() != x.rows() {
        return Err(Error::dim("sirius", x.rows(), target.rows()));
    }
    Ok(())
}

/// Diagonal column weights `w` fitting the pairwise distances of `x W` to
/// those of `target`, by majorization from `W = I`.
///
/// With `a_ijk = (x_ik - x_jk)^2` and `d_ij(w)` the current weighted
/// distance, every step sets
/// `w_k <- w_k * sum_ij delta_ij a_ijk / d_ij / sum_ij a_ijk`,
/// the exact minimizer of the Cauchy-Schwarz majorizer, so the objective
/// never increases.
pub fn sirius_reweight<T: Scalar>(
    x: &Dense2D<T>,
    target: &Dense2D<T>,
    max_iter: usize,
    tol: f64,
) -> Result<StressState<Vec<T>>> {
    check(x, target)?;
    let (n, d) = x.shape();
    let delta = target_distances(target);
    let two = T::lit(2.0);

    // sum over ordered pairs of a_ijk = 2n sum_i x_ik^2 - 2 (sum_i x_ik)^2
    let sums = x.column_sums();
    let mut sq = vec![T::zero(); d];
    for r in x.row_iter() {
        for (s, &v) in sq.iter_mut().zip(r) {
            *s += v * v;
        }
    }
    let pair_mass: Vec<T> = sq
        .iter()
        .zip(&sums)
        .map(|(&q, &s)| two * T::lit(n as f64) * q - two * s * s)
        .collect();
    let x_sq = x.map(|v| v * v);

    let mut w = vec![T::one(); d];
    let mut dist = weighted_distances(x, &w);
    let mut stress = objective_from(&dist, &delta);
    let mut history = vec![stress];
    let mut iteration = 0;
    let mut ratio = Dense2D::zeros(n, n);
    let mut cx = Dense2D::zeros(n, d);
    while iteration < max_iter && stress > 0.0 {
        // c_ij = delta_ij / d_ij, zero diagonal
        for i in 0..n {
            let row = ratio.row_mut(i);
            for j in 0..n {
                row[j] = if i == j { T::zero() } else { delta[(i, j)] / dist[(i, j)] };
            }
        }
        let row_sums: Vec<T> = ratio.row_iter().map(|r| r.iter().copied().sum()).collect();
        // sum_ij c_ij a_ijk = 2 sum_i r_i x_ik^2 - 2 sum_i x_ik (C x)_ik
        gemm(&ratio, false, x, false, T::one(), T::zero(), &mut cx);
        let mut numer = vec![T::zero(); d];
        for i in 0..n {
            let (xr, x2, cr) = (x.row(i), x_sq.row(i), cx.row(i));
            for k in 0..d {
                numer[k] += two * (row_sums[i] * x2[k] - xr[k] * cr[k]);
            }
        }
        for k in 0..d {
            if pair_mass[k] > T::zero() {
                w[k] = w[k] * numer[k].max(T::zero()) / pair_mass[k];
            }
        }
        dist = weighted_distances(x, &w);
        let next = objective_from(&dist, &delta);
        iteration += 1;
        let converged = stress - next < tol * stress;
        stress = next;
        history.push(stress);
        if converged {
            break;
        }
    }
    Ok(StressState {
        value: w,
        stress,
        iteration,
        history,
    })
}

/// Outcome of the reweighting baseline applied to one modification.
#[derive(Clone, Debug)]
pub struct SiriusUpdate<T> {
    pub weights: Vec<T>,
    /// `X W`.
    pub x_new: Dense2D<T>,
    /// MDS layout of the columns of `X W`.
    pub columns: Dense2D<T>,
    pub seconds: f64,
}

/// Full baseline update: reweight columns to the target layout, then lay
/// out the reweighted columns by MDS.
pub fn sirius_dual_update<T: Scalar>(
    x: &Dense2D<T>,
    target: &Dense2D<T>,
    max_iter: usize,
) -> Result<SiriusUpdate<T>> {
    let start = Instant::now();
    let weights = sirius_reweight(x, target, max_iter, 1e-7)?.value;
    let x_new = scaled(x, &weights);
    let columns = mds_smacof(&x_new.transpose(), &SmacofConfig::default())?.value;
    Ok(SiriusUpdate {
        weights,
        x_new,
        columns,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_gene_closed_form() {
        let x = Dense2D::<f64>::from_rows(&[[0.0], [1.0], [3.0], [7.0]]).unwrap();
        let target = Dense2D::from_rows(&[[0.0, 0.0], [2.5, 0.0], [5.0, 1.0], [13.0, 2.0]]).unwrap();
        let delta = target_distances(&target);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for i in 0..4 {
            for j in 0..4 {
                let dx = (x[(i, 0)] - x[(j, 0)]).abs();
                num += delta[(i, j)] * dx;
                den += dx * dx;
            }
        }
        let w = sirius_reweight(&x, &target, 50, 0.0).unwrap().value[0];
        assert!((w.abs() - num / den).abs() < 1e-6, "{w} vs {}", num / den);
    }

    #[test]
    fn matching_target_keeps_identity() {
        let x = Dense2D::<f64>::from_rows(&[[0.0, 0.0], [1.0, 2.0], [3.0, 1.0], [2.0, 2.0]]).unwrap();
        let r = sirius_reweight(&x, &x, 20, 0.0).unwrap();
        assert!(r.history[0] < 1e-8);
        assert!(r.value.iter().all(|&w| (w - 1.0).abs() < 1e-6));
    }
}
