use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

/// Principal axes of column-centered data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Pca<T> {
    pub mean: Vec<T>,
    /// `cols x dims`, unit-norm principal axes as columns.
    pub components: Dense2D<T>,
    /// Variance along every axis of the full spectrum, descending.
    pub explained_variance: Vec<T>,
}

impl<T: Scalar> Pca<T> {
    /// Fits the top `dims` axes. Each axis is oriented so that its
    /// largest-magnitude loading is positive.
    pub fn fit(x: &Dense2D<T>, dims: usize) -> Result<Self> {
        let (n, d) = x.shape();
        if dims > d {
            return Err(Error::Argument(format!("{dims} components from {d} columns")));
        }
        if n < 2 {
            return Err(Error::Argument("PCA needs at least two rows".into()));
        }
        let mean = x.column_means();
        let mut xc = x.clone();
        xc.add_row_vector(&mean.iter().map(|&m| -m).collect::<Vec<_>>());
        let denom = T::lit((n - 1) as f64);

        let mut components = Dense2D::zeros(d, dims);
        let explained_variance;
        if d <= n {
            let mut cov = xc.t_matmul(&xc)?;
            cov.scale(T::one() / denom);
            let (values, vectors) = T::sym_eigen(d, cov.as_slice());
            for r in 0..d {
                components.row_mut(r).copy_from_slice(&vectors[r * d..r * d + dims]);
            }
            explained_variance = values;
        } else {
            // Gram trick: eigenvectors u of Xc Xc^T give axes Xc^T u / |Xc^T u|
            let gram = xc.matmul_t(&xc)?;
            let (values, vectors) = T::sym_eigen(n, gram.as_slice());
            let u = Dense2D::from_fn(n, dims, |i, c| vectors[i * n + c]);
            let v = xc.t_matmul(&u)?;
            for c in 0..dims {
                let norm = (0..d).map(|r| v[(r, c)] * v[(r, c)]).sum::<T>().sqrt();
                if norm > T::lit(1e-300) {
                    for r in 0..d {
                        components.row_mut(r)[c] = v[(r, c)] / norm;
                    }
                }
            }
            explained_variance = values
                .into_iter()
                .map(|v| v.max(T::zero()) / denom)
                .chain(std::iter::repeat(T::zero()))
                .take(d)
                .collect();
        }
        for c in 0..dims {
            let mut best = (T::zero(), 0);
            for r in 0..d {
                if components[(r, c)].abs() > best.0 {
                    best = (components[(r, c)].abs(), r);
                }
            }
            if components[(best.1, c)] < T::zero() {
                for r in 0..d {
                    components.row_mut(r)[c] = -components[(r, c)];
                }
            }
        }
        Ok(Self {
            mean,
            components,
            explained_variance: explained_variance.into_iter().map(|v| v.max(T::zero())).collect(),
        })
    }

    pub fn transform(&self, x: &Dense2D<T>) -> Result<Dense2D<T>> {
        let mut xc = x.clone();
        if xc.cols() != self.mean.len() {
            return Err(Error::dim("pca transform", self.mean.len(), xc.cols()));
        }
        xc.add_row_vector(&self.mean.iter().map(|&m| -m).collect::<Vec<_>>());
        xc.matmul(&self.components)
    }

    pub fn inverse_transform(&self, scores: &Dense2D<T>) -> Result<Dense2D<T>> {
        let mut x = scores.matmul_t(&self.components)?;
        x.add_row_vector(&self.mean);
        Ok(x)
    }
}

/// Scores of `x` on its top `dims` principal axes.
pub fn pca_project<T: Scalar>(x: &Dense2D<T>, dims: usize) -> Result<Dense2D<T>> {
    Pca::fit(x, dims)?.transform(x)
}
