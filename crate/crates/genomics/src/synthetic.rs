//! Synthetic breeding populations with planted trait-regulating genes.
//!
//! Genes sit in contiguous linkage blocks; every parent line copies, per
//! block, one of a few founder haplotypes with rare mutations, so genes in a
//! block are strongly correlated and genes in different blocks are not.
//! Planted genes fill whole blocks.

use dualproj_core::Matrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{
    synthesize_hybrid, GenotypeMatrix, Locus, ParentLine, ParentRole, CHROMOSOMES, HOMO_ALT, HOMO_REF,
};
use crate::traits::TraitTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub name: String,
    pub n_hybrids: usize,
    pub n_genes: usize,
    pub n_regulatory: usize,
    /// Standard deviation of the genetic signal in units of the noise.
    pub effect_size: f64,
    pub seed: u64,
    /// Parent pool sizes; `None` sizes both pools so that twice the number
    /// of hybrids is available as crosses.
    pub n_paternal: Option<usize>,
    pub n_maternal: Option<usize>,
    pub block_size: usize,
    pub founders: usize,
    /// Founders are split round-robin into this many subpopulations, and a
    /// parent line inherits non-causal blocks from founders of its own
    /// subpopulation.
    pub subpopulations: usize,
    /// Chance that a non-causal block comes from any founder instead.
    pub admixture: f64,
    pub mutation_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n_hybrids: 300,
            n_genes: 600,
            n_regulatory: 20,
            effect_size: 2.0,
            seed: 7,
            n_paternal: None,
            n_maternal: None,
            block_size: 10,
            founders: 6,
            subpopulations: 6,
            admixture: 0.05,
            mutation_rate: 0.02,
        }
    }
}

impl SyntheticConfig {
    /// The dataset shipped with the benchmark tools.
    pub fn bundled() -> Self {
        Self {
            name: "synthetic-genomic".into(),
            ..Self::default()
        }
    }
}

/// Traits generated for every synthetic hybrid: name, baseline, unit.
pub const TRAITS: [(&str, f64, f64); 2] = [("yield", 500.0, 40.0), ("lw_ratio", 3.0, 0.2)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub name: String,
    pub genotypes: GenotypeMatrix,
    pub traits: TraitTable,
    pub paternal: Vec<ParentLine>,
    pub maternal: Vec<ParentLine>,
    /// `(paternal, maternal)` indices of every hybrid.
    pub pedigree: Vec<(usize, usize)>,
    /// Sorted indices of the planted genes.
    pub planted: Vec<usize>,
}

/// Chance that a founder's allele at a causal locus disagrees with its
/// carrier status.
const CAUSAL_NOISE: f64 = 0.1;

/// Carrier status per founder, with at least one carrier and, given two
/// or more founders, one non-carrier.
fn carrier_flags<R: Rng>(founders: usize, rng: &mut R) -> Vec<bool> {
    let mut flags: Vec<bool> = (0..founders).map(|_| rng.random_bool(0.5)).collect();
    flags[0] = true;
    if founders > 1 {
        flags[1] = false;
    }
    flags.shuffle(rng);
    flags
}

/// Alternative-allele flags of one non-causal gene across founders; both
/// alleles occur in at least two founders when there are four or more.
fn segregating<R: Rng>(founders: usize, rng: &mut R) -> Vec<bool> {
    let min = if founders >= 4 { 2 } else { 0 };
    let alt = rng.random_range(min..=founders - min);
    let mut flags: Vec<bool> = (0..founders).map(|f| f < alt).collect();
    flags.shuffle(rng);
    flags
}

fn loci<R: Rng>(n_genes: usize, rng: &mut R) -> Vec<Locus> {
    let per = n_genes / CHROMOSOMES as usize;
    let extra = n_genes % CHROMOSOMES as usize;
    let mut out = Vec::with_capacity(n_genes);
    for c in 0..CHROMOSOMES as usize {
        let mut pos = 0u64;
        for _ in 0..per + usize::from(c < extra) {
            pos += rng.random_range(1_000..50_000);
            out.push(Locus::new(c as u8 + 1, pos));
        }
    }
    out
}

/// Contiguous index ranges of at most `size` genes that never span two
/// chromosomes.
fn blocks(genes: &[Locus], size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=genes.len() {
        if i == genes.len() || genes[i].chromosome != genes[start].chromosome || i - start == size {
            out.push(start..i);
            start = i;
        }
    }
    out
}

pub fn generate_synthetic_dataset(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let c = config;
    if c.n_regulatory > c.n_genes {
        return Err(Error::Argument(format!(
            "{} regulatory genes among {} genes",
            c.n_regulatory, c.n_genes
        )));
    }
    if c.n_genes < CHROMOSOMES as usize || c.block_size == 0 || c.founders == 0 || c.n_hybrids == 0 {
        return Err(Error::Argument("degenerate synthetic configuration".into()));
    }
    if !(0.0..=1.0).contains(&c.admixture) || !(0.0..=1.0).contains(&c.mutation_rate) {
        return Err(Error::Argument("admixture and mutation rate must lie in [0, 1]".into()));
    }
    let pool = ((2 * c.n_hybrids) as f64).sqrt().ceil() as usize;
    let n_pat = c.n_paternal.unwrap_or(pool);
    let n_mat = c.n_maternal.unwrap_or(pool);
    if n_pat * n_mat < c.n_hybrids {
        return Err(Error::Argument(format!(
            "{n_pat} x {n_mat} parents cannot make {} distinct hybrids",
            c.n_hybrids
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let genes = loci(c.n_genes, &mut rng);
    let blocks = blocks(&genes, c.block_size);

    // planted genes: whole blocks in random order, the last one cut to size
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.shuffle(&mut rng);
    let mut planted = Vec::with_capacity(c.n_regulatory);
    let mut planted_blocks = vec![false; blocks.len()];
    for b in order {
        if planted.len() == c.n_regulatory {
            break;
        }
        let take = blocks[b].len().min(c.n_regulatory - planted.len());
        planted.extend(blocks[b].clone().take(take));
        planted_blocks[b] = true;
    }
    planted.sort_unstable();

    // founder haplotypes, one set per block; in planted blocks a founder
    // either carries the causal haplotype (alternative alleles) or not
    let founders: Vec<Vec<Vec<u8>>> = blocks
        .iter()
        .zip(&planted_blocks)
        .map(|(b, &causal)| {
            if causal {
                let carriers = carrier_flags(c.founders, &mut rng);
                carriers
                    .into_iter()
                    .map(|carrier| {
                        b.clone()
                            .map(|_| {
                                let alt = carrier ^ rng.random_bool(CAUSAL_NOISE);
                                if alt { HOMO_ALT } else { HOMO_REF }
                            })
                            .collect()
                    })
                    .collect()
            } else {
                let flags: Vec<Vec<bool>> = b.clone().map(|_| segregating(c.founders, &mut rng)).collect();
                (0..c.founders)
                    .map(|f| {
                        flags
                            .iter()
                            .map(|g| if g[f] { HOMO_ALT } else { HOMO_REF })
                            .collect()
                    })
                    .collect()
            }
        })
        .collect();
    let groups = c.subpopulations.clamp(1, c.founders);
    let line = |id: String, role: ParentRole, group: usize, rng: &mut ChaCha8Rng| {
        let own: Vec<usize> = (group..c.founders).step_by(groups).collect();
        let mut calls = Vec::with_capacity(c.n_genes);
        for (hap, &causal) in founders.iter().zip(&planted_blocks) {
            let f = if causal || rng.random_bool(c.admixture) {
                &hap[rng.random_range(0..hap.len())]
            } else {
                &hap[own[rng.random_range(0..own.len())]]
            };
            calls.extend(f.iter().map(|&v| {
                if rng.random_bool(c.mutation_rate) {
                    HOMO_ALT - v
                } else {
                    v
                }
            }));
        }
        ParentLine { id, role, calls }
    };
    let paternal: Vec<ParentLine> = (0..n_pat)
        .map(|i| line(format!("R{:03}", i + 1), ParentRole::Paternal, i % groups, &mut rng))
        .collect();
    let maternal: Vec<ParentLine> = (0..n_mat)
        .map(|i| line(format!("T{:03}", i + 1), ParentRole::Maternal, i % groups, &mut rng))
        .collect();

    let mut pedigree: Vec<(usize, usize)> = index::sample(&mut rng, n_pat * n_mat, c.n_hybrids)
        .into_iter()
        .map(|k| (k / n_mat, k % n_mat))
        .collect();
    pedigree.sort_unstable();
    let hybrids: Vec<String> = (0..c.n_hybrids).map(|i| format!("H{:04}", i + 1)).collect();
    let mut values = Vec::with_capacity(c.n_hybrids * c.n_genes);
    for &(p, m) in &pedigree {
        values.extend(synthesize_hybrid(&paternal[p], &maternal[m])?);
    }
    let genotypes = GenotypeMatrix::new(hybrids.clone(), genes, values)?;

    let noise = Normal::new(0.0, 1.0).expect("valid");
    let n = c.n_hybrids;
    let mut trait_values = Matrix::zeros(n, TRAITS.len());
    for (t, &(_, base, unit)) in TRAITS.iter().enumerate() {
        let beta: Vec<f64> = planted.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let pairs: Vec<(usize, usize, f64)> = (0..planted.len() / 2)
            .map(|_| {
                let a = rng.random_range(0..planted.len());
                let b = rng.random_range(0..planted.len());
                (planted[a], planted[b], rng.random_range(-0.5..0.5))
            })
            .collect();
        let signal: Vec<f64> = (0..n)
            .map(|h| {
                let row = genotypes.row(h);
                let linear: f64 = planted.iter().zip(&beta).map(|(&g, &b)| b * row[g] as f64).sum();
                let inter: f64 = pairs
                    .iter()
                    .map(|&(a, b, w)| w * row[a] as f64 * row[b] as f64)
                    .sum();
                linear + inter
            })
            .collect();
        let mean = signal.iter().sum::<f64>() / n as f64;
        let sd = (signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for (h, s) in signal.iter().enumerate() {
            let z = if sd > 0.0 { (s - mean) / sd } else { 0.0 };
            let v = c.effect_size * z + noise.sample(&mut rng);
            trait_values.row_mut(h)[t] = base + unit * v;
        }
    }
    let traits = TraitTable::new(
        TRAITS.iter().map(|t| t.0.to_string()).collect(),
        hybrids,
        trait_values,
    )?;
    Ok(SyntheticDataset {
        name: c.name.clone(),
        genotypes,
        traits,
        paternal,
        maternal,
        pedigree,
        planted,
    })
}
