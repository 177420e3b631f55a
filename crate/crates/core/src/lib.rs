pub mod baselines;
pub mod datasets;
pub mod dual;
pub mod error;
pub mod metrics;
pub mod neighbors;
pub mod nn;
pub mod projection;
pub mod scalar;
pub mod tensor;

pub use dual::{DualSession, ModificationEvent, ModificationKind, ScaleCenter, Side};
pub use error::{Error, Result};
pub use projection::{ProjectionModel, TrainConfig};
pub use scalar::Scalar;
pub use tensor::Dense2D;

/// Double-precision matrix used on every analysis and inversion path.
pub type Matrix = Dense2D<f64>;
/// Double-precision projection model.
pub type Model = ProjectionModel<f64>;
pub type Matrix32 = Dense2D<f32>;
pub type Model32 = ProjectionModel<f32>;
