use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm, Dense2D};

use super::{Mode, ParamVisitor, Trainable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Per-feature batch normalization with running statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            momentum: T::lit(0.9),
            eps: T::lit(1e-5),
        }
    }

    fn cast<U: Scalar>(&self) -> BatchNorm<U> {
        let c = |v: &[T]| v.iter().map(|&x| x.cast()).collect::<Vec<U>>();
        BatchNorm {
            gamma: c(&self.gamma),
            beta: c(&self.beta),
            running_mean: c(&self.running_mean),
            running_var: c(&self.running_var),
            momentum: self.momentum.cast(),
            eps: self.eps.cast(),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Grads<T> {
    weight: Vec<T>,
    bias: Vec<T>,
    gamma: Vec<T>,
    beta: Vec<T>,
}

#[derive(Clone, Debug)]
struct Cache<T> {
    input: Dense2D<T>,
    output: Dense2D<T>,
    x_hat: Option<Dense2D<T>>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Fully connected layer: `activation(normalize(x . W + b))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LinearBlock<T> {
    /// `in x out`
    pub weight: Dense2D<T>,
    pub bias: Vec<T>,
    pub norm: Option<BatchNorm<T>>,
    pub activation: Activation,
    #[serde(skip)]
    grads: Grads<T>,
    #[serde(skip)]
    cache: Option<Cache<T>>,
}

impl<T: Scalar> LinearBlock<T> {
    pub fn from_parts(
        weight: Dense2D<T>,
        bias: Vec<T>,
        norm: Option<BatchNorm<T>>,
        activation: Activation,
    ) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::dim("LinearBlock", weight.cols(), bias.len()));
        }
        if let Some(n) = &norm {
            if n.gamma.len() != weight.cols() {
                return Err(Error::dim("LinearBlock norm", weight.cols(), n.gamma.len()));
            }
        }
        Ok(Self {
            weight,
            bias,
            norm,
            activation,
            grads: Grads::default(),
            cache: None,
        })
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        normalize: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let std = (2.0 / input.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let weight = Dense2D::from_fn(input, output, |_, _| T::lit(normal.sample(rng)));
        Self::from_parts(
            weight,
            vec![T::zero(); output],
            normalize.then(|| BatchNorm::new(output)),
            activation,
        )
        .expect("consistent shapes")
    }

    /// A plain layer whose weights and bias are all zero.
    pub fn zeroed(input: usize, output: usize) -> Self {
        Self::from_parts(
            Dense2D::zeros(input, output),
            vec![T::zero(); output],
            None,
            Activation::None,
        )
        .expect("consistent shapes")
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn cast<U: Scalar>(&self) -> LinearBlock<U> {
        LinearBlock::from_parts(
            self.weight.cast(),
            self.bias.iter().map(|&v| v.cast()).collect(),
            self.norm.as_ref().map(BatchNorm::cast),
            self.activation,
        )
        .expect("shapes preserved by cast")
    }

    /// Inference pass that leaves the block untouched.
    pub fn infer(&self, input: &Dense2D<T>) -> Result<Dense2D<T>> {
        let (out, _, _) = self.affine_norm(input, None)?;
        Ok(out)
    }

    /// Forward pass. Train mode normalizes with batch statistics, folds them
    /// into the running estimates and caches what `backward` needs.
    pub fn forward(&mut self, input: &Dense2D<T>, mode: Mode) -> Result<Dense2D<T>> {
        let mut batch_stats = None;
        let (out, x_hat, inv_std) = self.affine_norm(
            input,
            if mode == Mode::Train { Some(&mut batch_stats) } else { None },
        )?;
        if let (Some((mean, var)), Some(norm)) = (batch_stats, self.norm.as_mut()) {
            let m = norm.momentum;
            let one = T::one();
            for j in 0..mean.len() {
                norm.running_mean[j] = m * norm.running_mean[j] + (one - m) * mean[j];
                norm.running_var[j] = m * norm.running_var[j] + (one - m) * var[j];
            }
        }
        self.cache = Some(Cache {
            input: input.clone(),
            output: out.clone(),
            x_hat,
            inv_std,
            mode,
        });
        Ok(out)
    }

    #[allow(clippy::type_complexity)]
    fn affine_norm(
        &self,
        input: &Dense2D<T>,
        batch_stats: Option<&mut Option<(Vec<T>, Vec<T>)>>,
    ) -> Result<(Dense2D<T>, Option<Dense2D<T>>, Vec<T>)> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("linear_forward", self.input_dim(), input.cols()));
        }
        let mut h = Dense2D::zeros(input.rows(), self.output_dim());
        gemm(input, false, &self.weight, false, T::one(), T::zero(), &mut h);
        h.add_row_vector(&self.bias);

        let mut x_hat = None;
        let mut inv_std = Vec::new();
        if let Some(norm) = &self.norm {
            let (mean, var) = match batch_stats {
                Some(slot) => {
                    let mean = h.column_means();
                    let var = h.column_variances();
                    *slot = Some((mean.clone(), var.clone()));
                    (mean, var)
                }
                None => (norm.running_mean.clone(), norm.running_var.clone()),
            };
            inv_std = var.iter().map(|&v| T::one() / (v + norm.eps).sqrt()).collect();
            let mut xh = h;
            for i in 0..xh.rows() {
                for (j, v) in xh.row_mut(i).iter_mut().enumerate() {
                    *v = (*v - mean[j]) * inv_std[j];
                }
            }
            let mut out = xh.clone();
            for i in 0..out.rows() {
                for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                    *v = norm.gamma[j] * *v + norm.beta[j];
                }
            }
            x_hat = Some(xh);
            h = out;
        }
        if self.activation == Activation::Relu {
            for v in h.as_mut_slice() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Ok((h, x_hat, inv_std))
    }

    fn ensure_grads(&mut self) {
        let (i, o) = (self.input_dim(), self.output_dim());
        if self.grads.weight.len() != i * o {
            self.grads.weight = vec![T::zero(); i * o];
            self.grads.bias = vec![T::zero(); o];
            let nw = if self.norm.is_some() { o } else { 0 };
            self.grads.gamma = vec![T::zero(); nw];
            self.grads.beta = vec![T::zero(); nw];
        }
    }

    /// Backpropagates through the most recent `forward`, accumulating
    /// parameter gradients and returning the gradient w.r.t. the input.
    pub fn backward(&mut self, grad_out: &Dense2D<T>) -> Result<Dense2D<T>> {
        self.ensure_grads();
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward".into()))?;
        if grad_out.shape() != cache.output.shape() {
            return Err(Error::dim(
                "linear_backward",
                format!("{:?}", cache.output.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut g = grad_out.clone();
        if self.activation == Activation::Relu {
            for (gv, &o) in g.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
                if o <= T::zero() {
                    *gv = T::zero();
                }
            }
        }
        if let (Some(norm), Some(x_hat)) = (&self.norm, &cache.x_hat) {
            let (n, w) = g.shape();
            for i in 0..n {
                for j in 0..w {
                    self.grads.gamma[j] += g[(i, j)] * x_hat[(i, j)];
                    self.grads.beta[j] += g[(i, j)];
                }
            }
            // dL/dx_hat
            for i in 0..n {
                for (j, v) in g.row_mut(i).iter_mut().enumerate() {
                    *v *= norm.gamma[j];
                }
            }
            if cache.mode == Mode::Train {
                let nn = T::lit(n as f64);
                let sum_g = g.column_sums();
                let mut sum_gx = vec![T::zero(); w];
                for i in 0..n {
                    for j in 0..w {
                        sum_gx[j] += g[(i, j)] * x_hat[(i, j)];
                    }
                }
                for i in 0..n {
                    for j in 0..w {
                        let v = g[(i, j)];
                        g[(i, j)] =
                            cache.inv_std[j] / nn * (nn * v - sum_g[j] - x_hat[(i, j)] * sum_gx[j]);
                    }
                }
            } else {
                for i in 0..n {
                    for (j, v) in g.row_mut(i).iter_mut().enumerate() {
                        *v *= cache.inv_std[j];
                    }
                }
            }
        }
        // g is now dL/dh with h = x W + b
        {
            let mut gw = Dense2D::new(
                self.input_dim(),
                self.output_dim(),
                std::mem::take(&mut self.grads.weight),
            )?;
            gemm(&cache.input, true, &g, false, T::one(), T::one(), &mut gw);
            self.grads.weight = gw.into_vec();
        }
        for (b, s) in self.grads.bias.iter_mut().zip(g.column_sums()) {
            *b += s;
        }
        let mut grad_in = Dense2D::zeros(g.rows(), self.input_dim());
        gemm(&g, false, &self.weight, true, T::one(), T::zero(), &mut grad_in);
        Ok(grad_in)
    }

    pub fn weight_grad(&self) -> &[T] {
        &self.grads.weight
    }

    pub fn bias_grad(&self) -> &[T] {
        &self.grads.bias
    }
}

impl<T: Scalar> Trainable<T> for LinearBlock<T> {
    fn zero_grad(&mut self) {
        self.ensure_grads();
        for g in [
            &mut self.grads.weight,
            &mut self.grads.bias,
            &mut self.grads.gamma,
            &mut self.grads.beta,
        ] {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.ensure_grads();
        f(&format!("{prefix}.weight"), self.weight.as_mut_slice(), &self.grads.weight);
        f(&format!("{prefix}.bias"), &mut self.bias, &self.grads.bias);
        if let Some(norm) = self.norm.as_mut() {
            f(&format!("{prefix}.gamma"), &mut norm.gamma, &self.grads.gamma);
            f(&format!("{prefix}.beta"), &mut norm.beta, &self.grads.beta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let block = LinearBlock::from_parts(
            Dense2D::<f64>::identity(3),
            vec![0.0; 3],
            None,
            Activation::None,
        )
        .unwrap();
        let x = Dense2D::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]).unwrap();
        assert_eq!(block.infer(&x).unwrap(), x);
    }

    #[test]
    fn relu_clamps_negative() {
        let mut block = LinearBlock::from_parts(
            Dense2D::new(1, 1, vec![2.0]).unwrap(),
            vec![1.0],
            None,
            Activation::Relu,
        )
        .unwrap();
        let x = Dense2D::new(1, 1, vec![-3.0]).unwrap();
        assert_eq!(block.forward(&x, Mode::Infer).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let block = LinearBlock::<f64>::zeroed(3, 2);
        let x = Dense2D::zeros(1, 4);
        assert!(matches!(block.infer(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn infer_is_pure_and_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = LinearBlock::<f64>::init(4, 5, true, Activation::Relu, &mut rng);
        let x = Dense2D::from_fn(6, 4, |i, j| (i as f64 - j as f64) * 0.3);
        block.forward(&x, Mode::Train).unwrap();
        let a = block.infer(&x).unwrap();
        let b = block.forward(&x, Mode::Infer).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, block.infer(&x).unwrap());
    }

    #[test]
    fn train_mode_updates_running_stats_infer_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut block = LinearBlock::<f64>::init(3, 2, true, Activation::None, &mut rng);
        let x = Dense2D::from_fn(8, 3, |i, j| (i * 3 + j) as f64);
        block.forward(&x, Mode::Infer).unwrap();
        assert_eq!(block.norm.as_ref().unwrap().running_mean, vec![0.0, 0.0]);
        block.forward(&x, Mode::Train).unwrap();
        assert_ne!(block.norm.as_ref().unwrap().running_mean, vec![0.0, 0.0]);
    }
}
