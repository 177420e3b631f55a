//! Parametric projection with an exact inverse: an autoencoder whose latent
//! space is mapped to `(y, phi)` by an invertible coupling network.

mod coupling;
mod inn;
mod model;
mod train;

pub use coupling::{CouplingLayer, ShufflePermutation};
pub use inn::{split_schedule, Inn, InnStage, INN_DEPTH};
pub use model::{ProjectionModel, TrainConfig};
pub use train::{contrastive_loss, train, train_logged, EpochLoss};
