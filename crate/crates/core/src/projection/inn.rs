use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mode, ParamVisitor, Trainable};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

use super::coupling::{CouplingLayer, ShufflePermutation};

/// Number of shuffle + coupling stages.
pub const INN_DEPTH: usize = 4;

/// Width of the first coupling half at every stage: halves toward 2 and
/// ends at exactly 2 so the last stage emits the 2-D projection.
pub fn split_schedule(latent_dim: usize) -> Vec<usize> {
    (1..=INN_DEPTH)
        .map(|k| {
            if k == INN_DEPTH {
                2
            } else {
                (latent_dim >> k).max(2)
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct InnStage<T> {
    pub shuffle: ShufflePermutation,
    pub coupling: CouplingLayer<T>,
}

/// Stack of (shuffle, coupling) stages. Every stage permutes its input and
/// then applies the coupling, so the final coupling's first half is the
/// projection `y` and its second half the auxiliary component `phi`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Inn<T> {
    pub stages: Vec<InnStage<T>>,
}

impl<T: Scalar> Inn<T> {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, hidden: usize, clamp: T, rng: &mut R) -> Result<Self> {
        if latent_dim < 3 {
            return Err(Error::Argument(format!(
                "latent dimension {latent_dim} leaves no auxiliary component"
            )));
        }
        let stages = split_schedule(latent_dim)
            .into_iter()
            .map(|z1| InnStage {
                shuffle: ShufflePermutation::random(latent_dim, rng),
                coupling: CouplingLayer::new(z1, latent_dim - z1, hidden, clamp, rng),
            })
            .collect();
        Ok(Self { stages })
    }

    pub fn from_stages(stages: Vec<InnStage<T>>) -> Result<Self> {
        let Some(first) = stages.first() else {
            return Err(Error::Argument("an INN needs at least one stage".into()));
        };
        let width = first.coupling.width();
        for (i, st) in stages.iter().enumerate() {
            if st.coupling.width() != width || st.shuffle.width() != width {
                return Err(Error::dim("Inn stage", width, format!("stage {i}")));
            }
        }
        if stages[stages.len() - 1].coupling.dim_z1 != 2 {
            return Err(Error::Argument("final coupling must emit a 2-D first half".into()));
        }
        Ok(Self { stages })
    }

    pub fn width(&self) -> usize {
        self.stages[0].coupling.width()
    }

    pub fn cast<U: Scalar>(&self) -> Inn<U> {
        Inn {
            stages: self
                .stages
                .iter()
                .map(|s| InnStage {
                    shuffle: s.shuffle.clone(),
                    coupling: s.coupling.cast(),
                })
                .collect(),
        }
    }

    pub(crate) fn restore(&mut self) -> Result<()> {
        self.stages.iter_mut().try_for_each(|s| s.shuffle.restore())
    }

    fn check(out: &Dense2D<T>, layer: usize) -> Result<()> {
        if out.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric { layer })
        }
    }

    /// Latents (rows) to `[y | phi]` rows.
    pub fn forward(&self, z: &Dense2D<T>) -> Result<Dense2D<T>> {
        if z.cols() != self.width() {
            return Err(Error::dim("inn_forward", self.width(), z.cols()));
        }
        let mut h = z.clone();
        for (i, st) in self.stages.iter().enumerate() {
            h = st.coupling.forward(&st.shuffle.apply(&h))?;
            Self::check(&h, i)?;
        }
        Ok(h)
    }

    /// `[y | phi]` rows back to latents.
    pub fn inverse(&self, a: &Dense2D<T>) -> Result<Dense2D<T>> {
        if a.cols() != self.width() {
            return Err(Error::dim("inn_inverse", self.width(), a.cols()));
        }
        let mut h = a.clone();
        for (i, st) in self.stages.iter().enumerate().rev() {
            h = st.shuffle.apply_inverse(&st.coupling.inverse(&h)?);
            Self::check(&h, i)?;
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, z: &Dense2D<T>, mode: Mode) -> Result<Dense2D<T>> {
        if z.cols() != self.width() {
            return Err(Error::dim("inn_forward", self.width(), z.cols()));
        }
        let mut h = z.clone();
        for (i, st) in self.stages.iter_mut().enumerate() {
            h = st.coupling.forward_train(&st.shuffle.apply(&h), mode)?;
            Self::check(&h, i)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Dense2D<T>) -> Result<Dense2D<T>> {
        let mut g = grad.clone();
        for st in self.stages.iter_mut().rev() {
            g = st.shuffle.apply_inverse(&st.coupling.backward(&g)?);
        }
        Ok(g)
    }
}

impl<T: Scalar> Trainable<T> for Inn<T> {
    fn zero_grad(&mut self) {
        self.stages.iter_mut().for_each(|s| s.coupling.zero_grad());
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        for (i, st) in self.stages.iter_mut().enumerate() {
            st.coupling.visit_params(&format!("{prefix}.{i}"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_halves_toward_two() {
        assert_eq!(split_schedule(64), vec![32, 16, 8, 2]);
        assert_eq!(split_schedule(256), vec![128, 64, 32, 2]);
        assert_eq!(split_schedule(8), vec![4, 2, 2, 2]);
    }

    #[test]
    fn zero_networks_and_identity_shuffles_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inn = Inn::<f64>::new(8, 6, 5.0, &mut rng).unwrap();
        for st in &mut inn.stages {
            st.shuffle = ShufflePermutation::identity(8);
        }
        let z = Dense2D::from_fn(3, 8, |i, j| (i as f64 + 1.0) * (j as f64 - 3.5));
        // zero-initialized output layers make every t and s vanish
        assert_eq!(inn.forward(&z).unwrap(), z);
        assert_eq!(inn.inverse(&z).unwrap(), z);
    }

    #[test]
    fn rejects_tiny_latent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(Inn::<f64>::new(2, 4, 5.0, &mut rng).is_err());
    }
}
