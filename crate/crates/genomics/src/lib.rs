//! Genomic data handling for hybrid breeding: genotype encoding, F1
//! synthesis, trait prediction, synthetic populations, dataset files and
//! hybrid recommendation.

pub mod boxplot;
pub mod error;
pub mod genotype;
pub mod io;
pub mod predictor;
pub mod recommend;
pub mod synthetic;
pub mod traits;

pub use boxplot::{genotype_boxplot_data, BoxStats};
pub use error::{Error, Result};
pub use genotype::{
    encode_call, encode_genotypes, genomic_distance, synthesize_hybrid, GenotypeMatrix, Locus, ParentLine,
    ParentRole,
};
pub use io::{load_dataset, write_dataset, GenomicDataset, Manifest, ManifestFiles};
pub use predictor::{r_squared, train_trait_predictor, PredictorConfig, TraitPredictor};
pub use recommend::{
    build_candidates, derive_gamma, facility_objective, recommend, select_admm, select_exhaustive,
    select_greedy, AdmmConfig, Candidate, CandidatePool, RecommendationConfig, RecommendationResult,
    ScoreSpec, ScoreTerm, Selection,
};
pub use synthetic::{generate_synthetic_dataset, SyntheticConfig, SyntheticDataset};
pub use traits::TraitTable;
