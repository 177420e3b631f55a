//! Exact nearest-neighbor queries over matrix rows.

use std::cmp::Ordering;

use crate::scalar::Scalar;
use crate::tensor::{gemm, Dense2D};

const BLOCK: usize = 256;

/// Calls `f(i, d)` for every row `i`, where `d[j]` is the squared Euclidean
/// distance from row `i` to row `j` (`d[i] == 0`). Distances come from the
/// Gram identity in row blocks, so memory stays `O(BLOCK * n)`.
pub fn for_each_distance_row<T: Scalar>(x: &Dense2D<T>, mut f: impl FnMut(usize, &[T])) {
    let n = x.rows();
    let norms = x.row_sq_norms();
    let mut dist = vec![T::zero(); n];
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let block = x.select_rows(&idx);
        let mut dots = Dense2D::zeros(end - start, n);
        gemm(&block, false, x, true, T::one(), T::zero(), &mut dots);
        for (bi, i) in (start..end).enumerate() {
            for ((d, &g), &nj) in dist.iter_mut().zip(dots.row(bi)).zip(&norms) {
                *d = (norms[i] + nj - T::lit(2.0) * g).max(T::zero());
            }
            dist[i] = T::zero();
            f(i, &dist);
        }
        start = end;
    }
}

/// Orders by distance, then by index.
pub(crate) fn by_distance_then_index<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// The `k` nearest entries of a distance row other than `skip`, nearest first.
pub(crate) fn smallest_k<T: Scalar>(dist: &[T], skip: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(T, usize)> = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(j, &d)| (d, j))
        .collect();
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_index);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Indices of the `k` nearest other rows of every row (Euclidean), nearest
/// first, ties broken by ascending index.
pub fn knn_indices<T: Scalar>(x: &Dense2D<T>, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(x.rows());
    for_each_distance_row(x, |i, d| out.push(smallest_k(d, i, k)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_neighbors() {
        let x = Dense2D::<f64>::from_fn(6, 1, |i, _| i as f64);
        let nn = knn_indices(&x, 2);
        assert_eq!(nn[0], vec![1, 2]);
        // 2 and 4 are equidistant from 3: lower index first
        assert_eq!(nn[3], vec![2, 4]);
        assert_eq!(nn[5], vec![4, 3]);
    }

    #[test]
    fn distance_rows_match_direct() {
        let x = Dense2D::<f64>::from_fn(300, 3, |i, j| ((i * 7 + j * 3) % 11) as f64);
        for_each_distance_row(&x, |i, d| {
            for j in [0, 17, 299] {
                let direct: f64 = (0..3).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum();
                assert_eq!(d[j], direct);
            }
        });
    }
}
