use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Trainable;

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Moments<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// One AdamW update of a single tensor at (1-based) step `t`.
///
/// Weight decay is decoupled: parameters shrink by `1 - lr * weight_decay`
/// before the adaptive step.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    moments: &mut Moments<T>,
    t: u64,
    lr: T,
    weight_decay: T,
    betas: (T, T),
    eps: T,
) {
    let (b1, b2) = betas;
    let one = T::one();
    let c1 = one - b1.powi(t as i32);
    let c2 = one - b2.powi(t as i32);
    let decay = one - lr * weight_decay;
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub lr: T,
    pub weight_decay: T,
    pub betas: (T, T),
    pub eps: T,
    step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(lr: T, weight_decay: T) -> Self {
        Self {
            lr,
            weight_decay,
            betas: (T::lit(0.9), T::lit(0.999)),
            eps: T::lit(1e-8),
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter of `model`. Gradients are
    /// screened first so a non-finite value leaves the model untouched.
    pub fn step(&mut self, model: &mut dyn Trainable<T>, prefix: &str) -> Result<()> {
        let mut bad: Option<String> = None;
        model.visit_params(prefix, &mut |id, _, g| {
            if bad.is_none() && g.iter().any(|v| !v.is_finite()) {
                bad = Some(id.to_string());
            }
        });
        if let Some(id) = bad {
            return Err(Error::Training {
                location: id,
                detail: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let (t, lr, wd, betas, eps) = (self.step, self.lr, self.weight_decay, self.betas, self.eps);
        let moments = &mut self.moments;
        let mut slot = 0usize;
        model.visit_params(prefix, &mut |_, p, g| {
            if moments.len() <= slot {
                moments.push(Moments::new(p.len()));
            }
            adamw_update(p, g, &mut moments[slot], t, lr, wd, betas, eps);
            slot += 1;
        });
        Ok(())
    }
}

/// Cosine annealing from `base_lr` at epoch 0 to zero at `total_epochs`.
pub fn cosine_lr<T: Scalar>(base_lr: T, epoch: usize, total_epochs: usize) -> Result<T> {
    if total_epochs == 0 {
        return Err(Error::Argument("cosine schedule needs total_epochs > 0".into()));
    }
    if epoch > total_epochs {
        return Err(Error::Argument(format!(
            "epoch {epoch} beyond schedule length {total_epochs}"
        )));
    }
    let phase = std::f64::consts::PI * epoch as f64 / total_epochs as f64;
    Ok(base_lr * T::lit(0.5 * (1.0 + phase.cos())))
}
