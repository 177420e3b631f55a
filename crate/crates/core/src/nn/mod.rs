//! Hand-differentiated layer blocks and the optimizer that trains them.

mod linear;
mod optim;

pub use linear::{Activation, BatchNorm, LinearBlock};
pub use optim::{adamw_update, cosine_lr, AdamW, Moments};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Callback receiving `(parameter id, values, accumulated gradient)`.
pub type ParamVisitor<'a, T> = dyn FnMut(&str, &mut [T], &[T]) + 'a;

pub trait Trainable<T: Scalar> {
    fn zero_grad(&mut self);

    /// Visits every parameter tensor in a stable order.
    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>);
}

/// Stack of [`LinearBlock`]s: normalized ReLU hidden layers and a plain
/// linear output layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Mlp<T> {
    pub layers: Vec<LinearBlock<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `dims = [in, h1, ..., out]`. With `zero_output` the last layer starts
    /// at exactly zero so the network initially outputs the zero vector.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], zero_output: bool, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                if last && zero_output {
                    LinearBlock::zeroed(dims[i], dims[i + 1])
                } else if last {
                    LinearBlock::init(dims[i], dims[i + 1], false, Activation::None, rng)
                } else {
                    LinearBlock::init(dims[i], dims[i + 1], true, Activation::Relu, rng)
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(LinearBlock::cast).collect(),
        }
    }

    pub fn infer(&self, x: &Dense2D<T>) -> Result<Dense2D<T>> {
        let mut h = self.layers[0].infer(x)?;
        for layer in &self.layers[1..] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Dense2D<T>, mode: Mode) -> Result<Dense2D<T>> {
        let mut h = self.layers[0].forward(x, mode)?;
        for layer in &mut self.layers[1..] {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Dense2D<T>) -> Result<Dense2D<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }
}

impl<T: Scalar> Trainable<T> for Mlp<T> {
    fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Trainable::zero_grad);
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("{prefix}.{i}"), f);
        }
    }
}
