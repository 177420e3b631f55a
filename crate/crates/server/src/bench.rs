//! Embedding-quality benchmark: each method projects one dataset, and the
//! dual methods also time one linked update.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use dualproj_core::baselines::{mds_smacof, pca_project, sirius_dual_update, tsne_project, SmacofConfig, TsneConfig};
use dualproj_core::datasets::{digits, load_feature_csv, three_gaussians};
use dualproj_core::dual::{time_update, train_pair};
use dualproj_core::metrics::{MetricReport, DEFAULT_KS};
use dualproj_core::projection::train;
use dualproj_core::{DualSession, Matrix, ModificationEvent, Side, TrainConfig};
use dualproj_genomics::{generate_synthetic_dataset, load_dataset, SyntheticConfig};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Pca,
    Tsne,
    Sirius,
    Ours,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pca, Method::Tsne, Method::Sirius, Method::Ours];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Tsne => "tsne",
            Method::Sirius => "sirius",
            Method::Ours => "ours",
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .with_context(|| format!("unknown method {s:?}; expected one of pca, tsne, sirius, ours"))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// Built-in dataset names accepted besides file paths.
pub const BUILTIN_DATASETS: [&str; 3] = ["digits", "three-gaussians", "synthetic-genomic"];

/// Loads a benchmark matrix: a built-in name, a dataset manifest (`.json`)
/// or a feature CSV.
pub fn load_matrix(name: &str) -> Result<(String, Matrix)> {
    match name {
        "digits" => Ok((name.into(), digits()?.x)),
        "three-gaussians" => Ok((name.into(), three_gaussians(0).x)),
        "synthetic-genomic" => {
            let d = generate_synthetic_dataset(&SyntheticConfig::bundled())?;
            Ok((d.name, d.genotypes.to_matrix()))
        }
        path => {
            let p = Path::new(path);
            if !p.exists() {
                bail!(
                    "dataset {path:?} is neither a file nor one of {}",
                    BUILTIN_DATASETS.join(", ")
                );
            }
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or(path).to_string();
            if p.extension().is_some_and(|e| e == "json") {
                let d = load_dataset(p)?;
                Ok((d.name, d.genotypes.to_matrix()))
            } else {
                Ok((stem, load_feature_csv(p)?.x))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    /// Training setup for both projection models.
    pub train: TrainConfig,
    pub tsne: TsneConfig,
    /// Time one linked update for the dual methods.
    pub time_updates: bool,
    pub update_repeats: usize,
    /// Iteration cap for the baseline reweighting, which otherwise stops
    /// at a relative change of 1e-7.
    pub sirius_iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            train: TrainConfig::default(),
            tsne: TsneConfig::default(),
            time_updates: true,
            update_repeats: 3,
            sirius_iters: 300,
            seed: 0,
        }
    }
}

/// The edit timed for the dual methods: a tenth of the points (at least
/// one) moved by a fifth of the layout's extent.
pub fn benchmark_edit(layout: &Matrix, seed: u64) -> ModificationEvent {
    let n = layout.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = index::sample(&mut rng, n, (n / 10).max(1)).into_vec();
    indices.sort_unstable();
    let extent = |c: usize| {
        let col = layout.col(c);
        col.iter().copied().fold(f64::NEG_INFINITY, f64::max) - col.iter().copied().fold(f64::INFINITY, f64::min)
    };
    ModificationEvent::moved(Side::Rows, indices, [0.2 * extent(0), 0.2 * extent(1)])
}

/// `layout` with the edit applied (moves only).
pub fn edited_layout(layout: &Matrix, event: &ModificationEvent) -> Matrix {
    let mut out = layout.clone();
    if let dualproj_core::ModificationKind::Move { delta } = event.kind {
        for &i in &event.indices {
            let r = out.row_mut(i);
            r[0] += delta[0];
            r[1] += delta[1];
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Runs every configured method on `x`; one report per method.
pub fn run(dataset: &str, x: &Matrix, config: &BenchConfig) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::new();
    for &method in &config.methods {
        log::info!("{dataset}: {}", method.name());
        let (layout, seconds) = match method {
            Method::Pca => (pca_project(x, 2)?, None),
            Method::Tsne => (tsne_project(x, &config.tsne)?, None),
            Method::Sirius => {
                let layout = mds_smacof(x, &SmacofConfig::default())?.value;
                let seconds = if config.time_updates {
                    let target = edited_layout(&layout, &benchmark_edit(&layout, config.seed));
                    let times = (0..config.update_repeats.max(1))
                        .map(|_| sirius_dual_update(x, &target, config.sirius_iters).map(|u| u.seconds))
                        .collect::<dualproj_core::Result<Vec<_>>>()?;
                    Some(median(times))
                } else {
                    None
                };
                (layout, seconds)
            }
            Method::Ours => {
                if config.time_updates {
                    let (rows, cols) = train_pair(x, &config.train, &config.train)?;
                    let session = DualSession::new(x.clone(), Arc::new(rows), Arc::new(cols))?;
                    let layout = session.hybrids();
                    let event = benchmark_edit(&layout, config.seed);
                    let seconds = time_update(&session, &event, config.update_repeats.max(1))?;
                    (layout, Some(seconds))
                } else {
                    (train(x, &config.train)?.project(x)?, None)
                }
            }
        };
        reports.push(MetricReport::evaluate(method.name(), dataset, x, &layout, &config.ks, seconds)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        assert_eq!(parse_methods("pca, ours").unwrap(), vec![Method::Pca, Method::Ours]);
        assert!(parse_methods("pca,umap").is_err());
    }

    #[test]
    fn edit_moves_a_tenth() {
        let layout = Matrix::from_fn(50, 2, |i, j| (i * (j + 1)) as f64);
        let e = benchmark_edit(&layout, 1);
        assert_eq!(e.indices.len(), 5);
        let moved = edited_layout(&layout, &e);
        let i = e.indices[0];
        assert_eq!(moved[(i, 0)] - layout[(i, 0)], 0.2 * 49.0);
    }
}
