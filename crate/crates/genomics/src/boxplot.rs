//! Per-genotype trait distributions for one gene.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::traits::TraitTable;

/// Tukey box statistics of one genotype group. Everything but `count` is
/// absent for an empty group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub genotype: u8,
    pub count: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
    pub whisker_low: Option<f64>,
    pub whisker_high: Option<f64>,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted values (the common "type 7"
/// definition).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn from_values(genotype: u8, values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.to_vec();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return Self {
                genotype,
                count: 0,
                min: None,
                q1: None,
                median: None,
                q3: None,
                max: None,
                whisker_low: None,
                whisker_high: None,
                outliers: Vec::new(),
            };
        }
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let fence = 1.5 * (q3 - q1);
        let (lo_fence, hi_fence) = (q1 - fence, q3 + fence);
        let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
        Self {
            genotype,
            count: v.len(),
            min: v.first().copied(),
            q1: Some(q1),
            median: Some(median),
            q3: Some(q3),
            max: v.last().copied(),
            whisker_low: inside.first().copied(),
            whisker_high: inside.last().copied(),
            outliers: v.iter().copied().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
        }
    }
}

/// Box statistics of one trait for the hybrids with genotype 0, 1 and 2 at
/// one gene.
pub fn genotype_boxplot_data(
    genotypes: &GenotypeMatrix,
    traits: &TraitTable,
    gene: usize,
    trait_name: &str,
) -> Result<[BoxStats; 3]> {
    if gene >= genotypes.n_genes() {
        return Err(Error::Argument(format!("gene {gene} out of range")));
    }
    let t = traits
        .index(trait_name)
        .ok_or_else(|| Error::Argument(format!("unknown trait {trait_name:?}")))?;
    if traits.hybrids.len() != genotypes.n_hybrids() {
        return Err(Error::Data("trait table and genotypes cover different hybrids".into()));
    }
    let mut groups: [Vec<f64>; 3] = Default::default();
    for h in 0..genotypes.n_hybrids() {
        groups[genotypes.get(h, gene) as usize].push(traits.values[(h, t)]);
    }
    Ok([0u8, 1, 2].map(|g| BoxStats::from_values(g, &groups[g as usize])))
}
