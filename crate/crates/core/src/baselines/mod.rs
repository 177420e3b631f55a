//! Reference projectors: PCA, exact t-SNE, SMACOF stress majorization and
//! SIRIUS-style diagonal reweighting.

mod mds;
mod pca;
mod sirius;
mod tsne;

pub use mds::{mds_smacof, raw_stress, SmacofConfig, StressState};
pub use pca::{pca_project, Pca};
pub use sirius::{sirius_dual_update, sirius_objective, sirius_reweight, SiriusUpdate};
pub use tsne::{conditional_probabilities, joint_probabilities, tsne_project, TsneConfig};
