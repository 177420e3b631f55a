//! Floating-point abstraction shared by every numeric routine in the crate.
//!
//! Everything above this module is written against [`Scalar`]; the two
//! hardware-facing kernels (dense matrix multiply and the symmetric
//! eigensolver) are provided per concrete type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// `c <- alpha * a . b + beta * c` on strided storage.
    ///
    /// # Safety
    /// Every index reachable through the given shapes and strides must be in
    /// bounds for the corresponding buffer, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Eigen-decomposition of a symmetric row-major `n x n` matrix.
    ///
    /// Returns eigenvalues in descending order and the matching eigenvectors
    /// stored as the columns of a row-major `n x n` buffer.
    fn sym_eigen(n: usize, data: &[Self]) -> (Vec<Self>, Vec<Self>);

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Conversion between scalar types, used when exporting parameters.
    #[inline]
    fn cast<U: Scalar>(self) -> U {
        U::lit(self.as_f64())
    }
}

fn sym_eigen_f64(n: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = nalgebra::DMatrix::<f64>::from_row_slice(n, n, data);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + dst] = eig.eigenvectors[(r, src)];
        }
    }
    (values, vectors)
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn sym_eigen(n: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
        sym_eigen_f64(n, data)
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    // f32 callers get the f64 solve rounded back; eigenvectors need the headroom.
    fn sym_eigen(n: usize, data: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let wide: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        let (vals, vecs) = sym_eigen_f64(n, &wide);
        (
            vals.into_iter().map(|v| v as f32).collect(),
            vecs.into_iter().map(|v| v as f32).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal_is_sorted_descending() {
        let (vals, vecs) = f64::sym_eigen(3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        assert_eq!(vals, vec![5.0, 3.0, 1.0]);
        // first eigenvector is e_1 (up to sign)
        assert!((vecs[1 * 3].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cast_roundtrip() {
        let x: f32 = 0.5;
        assert_eq!(x.cast::<f64>(), 0.5);
        assert_eq!(f64::lit(2.0).cast::<f32>(), 2.0f32);
    }
}
