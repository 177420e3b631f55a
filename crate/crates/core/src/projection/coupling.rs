use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, Mode, ParamVisitor, Trainable};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

/// Fixed relabeling of coordinates: `out[i] = in[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShufflePermutation {
    perm: Vec<usize>,
    #[serde(skip)]
    inverse: Vec<usize>,
}

impl ShufflePermutation {
    pub fn identity(width: usize) -> Self {
        Self::from_vec((0..width).collect()).expect("identity is a bijection")
    }

    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..width).collect();
        perm.shuffle(rng);
        Self::from_vec(perm).expect("shuffle is a bijection")
    }

    pub fn from_vec(perm: Vec<usize>) -> Result<Self> {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inverse[p] != usize::MAX {
                return Err(Error::Argument(format!("{perm:?} is not a permutation")));
            }
            inverse[p] = i;
        }
        Ok(Self { perm, inverse })
    }

    pub fn width(&self) -> usize {
        self.perm.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// Rebuilds the inverse table after deserialization.
    pub(crate) fn restore(&mut self) -> Result<()> {
        *self = Self::from_vec(std::mem::take(&mut self.perm))?;
        Ok(())
    }

    pub fn apply<T: Scalar>(&self, x: &Dense2D<T>) -> Dense2D<T> {
        Self::gather(&self.perm, x)
    }

    pub fn apply_inverse<T: Scalar>(&self, x: &Dense2D<T>) -> Dense2D<T> {
        Self::gather(&self.inverse, x)
    }

    fn gather<T: Scalar>(index: &[usize], x: &Dense2D<T>) -> Dense2D<T> {
        let mut out = Dense2D::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let src = x.row(i);
            for (o, &p) in out.row_mut(i).iter_mut().zip(index) {
                *o = src[p];
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
struct CouplingCache<T> {
    z2: Dense2D<T>,
    scale_exp: Dense2D<T>,
    log_scale: Dense2D<T>,
}

/// Affine coupling with an additive update of the first half:
///
/// ```text
/// a1 = z1 + t1(z2)
/// a2 = z2 * exp(s(a1)) + t2(a1)
/// ```
///
/// `s` is soft-clamped to `(-clamp, clamp)` before exponentiation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct CouplingLayer<T> {
    pub dim_z1: usize,
    pub dim_z2: usize,
    pub t1: Mlp<T>,
    pub s: Mlp<T>,
    pub t2: Mlp<T>,
    pub clamp: T,
    #[serde(skip)]
    cache: Option<CouplingCache<T>>,
}

impl<T: Scalar> CouplingLayer<T> {
    pub fn new<R: Rng + ?Sized>(
        dim_z1: usize,
        dim_z2: usize,
        hidden: usize,
        clamp: T,
        rng: &mut R,
    ) -> Self {
        let t1 = Mlp::new(&[dim_z2, hidden, hidden, hidden, dim_z1], true, rng);
        let s = Mlp::new(&[dim_z1, hidden, hidden, hidden, dim_z2], true, rng);
        let t2 = Mlp::new(&[dim_z1, hidden, hidden, hidden, dim_z2], true, rng);
        Self::from_parts(t1, s, t2, clamp).expect("consistent widths")
    }

    pub fn from_parts(t1: Mlp<T>, s: Mlp<T>, t2: Mlp<T>, clamp: T) -> Result<Self> {
        let dim_z1 = t1.output_dim();
        let dim_z2 = t1.input_dim();
        if s.input_dim() != dim_z1
            || t2.input_dim() != dim_z1
            || s.output_dim() != dim_z2
            || t2.output_dim() != dim_z2
        {
            return Err(Error::dim(
                "CouplingLayer",
                format!("t1 {dim_z2}->{dim_z1}, s/t2 {dim_z1}->{dim_z2}"),
                format!(
                    "s {}->{}, t2 {}->{}",
                    s.input_dim(),
                    s.output_dim(),
                    t2.input_dim(),
                    t2.output_dim()
                ),
            ));
        }
        Ok(Self {
            dim_z1,
            dim_z2,
            t1,
            s,
            t2,
            clamp,
            cache: None,
        })
    }

    pub fn width(&self) -> usize {
        self.dim_z1 + self.dim_z2
    }

    pub fn cast<U: Scalar>(&self) -> CouplingLayer<U> {
        CouplingLayer::from_parts(self.t1.cast(), self.s.cast(), self.t2.cast(), self.clamp.cast())
            .expect("widths preserved by cast")
    }

    fn soft_clamp(&self, raw: &Dense2D<T>) -> Dense2D<T> {
        let c = self.clamp;
        raw.map(|v| c * (v / c).tanh())
    }

    fn check_width(&self, x: &Dense2D<T>) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::dim("coupling", self.width(), x.cols()));
        }
        Ok(())
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, z: &Dense2D<T>) -> Result<Dense2D<T>> {
        self.check_width(z)?;
        let z1 = z.col_range(0, self.dim_z1);
        let z2 = z.col_range(self.dim_z1, self.width());
        let a1 = z1.add(&self.t1.infer(&z2)?)?;
        let scale_exp = self.soft_clamp(&self.s.infer(&a1)?).map(|v| v.exp());
        let a2 = z2.zip_map(&scale_exp, |a, b| a * b).add(&self.t2.infer(&a1)?)?;
        Dense2D::hcat(&a1, &a2)
    }

    /// Exact algebraic inverse of [`forward`](Self::forward).
    pub fn inverse(&self, a: &Dense2D<T>) -> Result<Dense2D<T>> {
        self.check_width(a)?;
        let a1 = a.col_range(0, self.dim_z1);
        let a2 = a.col_range(self.dim_z1, self.width());
        let inv_scale = self.soft_clamp(&self.s.infer(&a1)?).map(|v| (-v).exp());
        let z2 = a2.sub(&self.t2.infer(&a1)?)?.zip_map(&inv_scale, |a, b| a * b);
        let z1 = a1.sub(&self.t1.infer(&z2)?)?;
        Dense2D::hcat(&z1, &z2)
    }

    /// Training forward pass (batch statistics, cached for `backward`).
    pub fn forward_train(&mut self, z: &Dense2D<T>, mode: Mode) -> Result<Dense2D<T>> {
        self.check_width(z)?;
        let z1 = z.col_range(0, self.dim_z1);
        let z2 = z.col_range(self.dim_z1, self.width());
        let a1 = z1.add(&self.t1.forward(&z2, mode)?)?;
        let raw = self.s.forward(&a1, mode)?;
        let log_scale = self.soft_clamp(&raw);
        let scale_exp = log_scale.map(|v| v.exp());
        let a2 = z2
            .zip_map(&scale_exp, |a, b| a * b)
            .add(&self.t2.forward(&a1, mode)?)?;
        self.cache = Some(CouplingCache {
            z2,
            scale_exp,
            log_scale,
        });
        Dense2D::hcat(&a1, &a2)
    }

    pub fn backward(&mut self, grad: &Dense2D<T>) -> Result<Dense2D<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("coupling backward without forward".into()))?;
        let ga1 = grad.col_range(0, self.dim_z1);
        let ga2 = grad.col_range(self.dim_z1, self.width());

        let mut gz2 = ga2.zip_map(&cache.scale_exp, |g, e| g * e);
        let c = self.clamp;
        let one = T::one();
        let mut g_raw = Dense2D::zeros(ga2.rows(), ga2.cols());
        for (((o, &g), &z), (&e, &ls)) in g_raw
            .as_mut_slice()
            .iter_mut()
            .zip(ga2.as_slice())
            .zip(cache.z2.as_slice())
            .zip(cache.scale_exp.as_slice().iter().zip(cache.log_scale.as_slice()))
        {
            let th = ls / c;
            *o = g * z * e * (one - th * th);
        }
        let mut ga1_total = ga1;
        ga1_total.add_assign(&self.s.backward(&g_raw)?)?;
        ga1_total.add_assign(&self.t2.backward(&ga2)?)?;
        gz2.add_assign(&self.t1.backward(&ga1_total)?)?;
        Dense2D::hcat(&ga1_total, &gz2)
    }
}

impl<T: Scalar> Trainable<T> for CouplingLayer<T> {
    fn zero_grad(&mut self) {
        self.t1.zero_grad();
        self.s.zero_grad();
        self.t2.zero_grad();
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.t1.visit_params(&format!("{prefix}.t1"), f);
        self.s.visit_params(&format!("{prefix}.s"), f);
        self.t2.visit_params(&format!("{prefix}.t2"), f);
    }
}
