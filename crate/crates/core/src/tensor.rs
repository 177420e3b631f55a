//! Row-major dense matrix and the handful of kernels the rest of the crate needs.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Dense2D<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Dense2D<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim("Dense2D::new", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("Dense2D::from_rows", cols, format!("{} in row {i}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Dense2D<U> {
        Dense2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v.cast()).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        const TILE: usize = 32;
        let mut out = Self::zeros(self.cols, self.rows);
        for i0 in (0..self.rows).step_by(TILE) {
            for j0 in (0..self.cols).step_by(TILE) {
                for i in i0..(i0 + TILE).min(self.rows) {
                    for j in j0..(j0 + TILE).min(self.cols) {
                        out.data[j * self.rows + i] = self.data[i * self.cols + j];
                    }
                }
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn col_range(&self, start: usize, end: usize) -> Self {
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Self {
            rows: self.rows,
            cols: w,
            data,
        }
    }

    pub fn hcat(left: &Self, right: &Self) -> Result<Self> {
        if left.rows != right.rows {
            return Err(Error::dim("Dense2D::hcat", left.rows, right.rows));
        }
        let cols = left.cols + right.cols;
        let mut data = Vec::with_capacity(left.rows * cols);
        for i in 0..left.rows {
            data.extend_from_slice(left.row(i));
            data.extend_from_slice(right.row(i));
        }
        Ok(Self {
            rows: left.rows,
            cols,
            data,
        })
    }

    pub fn vcat(top: &Self, bottom: &Self) -> Result<Self> {
        if top.cols != bottom.cols {
            return Err(Error::dim("Dense2D::vcat", top.cols, bottom.cols));
        }
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Ok(Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "Dense2D::add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "Dense2D::sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// Elementwise combination; shapes must already agree.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "Dense2D::add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_row_vector(&mut self, v: &[T]) {
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (a, &b) in self.row_mut(i).iter_mut().zip(v) {
                *a += b;
            }
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in self.row_iter() {
            for (o, &v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    pub fn column_means(&self) -> Vec<T> {
        let n = T::lit(self.rows.max(1) as f64);
        self.column_sums().into_iter().map(|s| s / n).collect()
    }

    /// Population variance of every column.
    pub fn column_variances(&self) -> Vec<T> {
        let means = self.column_means();
        let mut out = vec![T::zero(); self.cols];
        for r in self.row_iter() {
            for ((o, &v), &m) in out.iter_mut().zip(r).zip(&means) {
                let d = v - m;
                *o += d * d;
            }
        }
        let n = T::lit(self.rows.max(1) as f64);
        out.into_iter().map(|s| s / n).collect()
    }

    pub fn sq_distance_to(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "Dense2D::sq_distance_to")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "Dense2D::max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    /// `self . other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(self, false, other, false, T::one(), T::zero(), &mut out);
        Ok(out)
    }

    /// `self^T . other`
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::dim("t_matmul", self.rows, other.rows));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        gemm(self, true, other, false, T::one(), T::zero(), &mut out);
        Ok(out)
    }

    /// `self . other^T`
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::dim("matmul_t", self.cols, other.cols));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        gemm(self, false, other, true, T::one(), T::zero(), &mut out);
        Ok(out)
    }

    pub fn row_sq_norms(&self) -> Vec<T> {
        self.row_iter()
            .map(|r| r.iter().map(|&v| v * v).sum())
            .collect()
    }

    /// Squared Euclidean distances between all pairs of rows, clamped at zero.
    pub fn pairwise_sq_distances(&self) -> Self {
        let n = self.rows;
        let norms = self.row_sq_norms();
        let mut d = Self::zeros(n, n);
        gemm(self, false, self, true, T::lit(-2.0), T::zero(), &mut d);
        for i in 0..n {
            for j in 0..n {
                let v = &mut d.data[i * n + j];
                *v = if i == j {
                    T::zero()
                } else {
                    (*v + norms[i] + norms[j]).max(T::zero())
                };
            }
        }
        // exact symmetry; gemm rounding can differ between (i,j) and (j,i)
        for i in 0..n {
            for j in (i + 1)..n {
                let v = d.data[i * n + j];
                d.data[j * n + i] = v;
            }
        }
        d
    }
}

/// `out <- alpha * op(a) . op(b) + beta * out` where `op` optionally transposes.
pub fn gemm<T: Scalar>(
    a: &Dense2D<T>,
    trans_a: bool,
    b: &Dense2D<T>,
    trans_b: bool,
    alpha: T,
    beta: T,
    out: &mut Dense2D<T>,
) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((out.rows, out.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.scale(beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: shapes were checked above, strides describe the row-major
    // buffers exactly, and `out` is borrowed mutably so cannot alias.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

impl<T> Index<(usize, usize)> for Dense2D<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Dense2D<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}
