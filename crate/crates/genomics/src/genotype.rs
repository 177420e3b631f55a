//! Genotype matrices, SNP call encoding, F1 synthesis and genomic distance.

use std::fmt;
use std::str::FromStr;

use dualproj_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homozygous for the reference allele.
pub const HOMO_REF: u8 = 0;
/// Heterozygous.
pub const HETERO: u8 = 1;
/// Homozygous for an alternative allele.
pub const HOMO_ALT: u8 = 2;

pub const CHROMOSOMES: u8 = 12;

/// A SNP locus, written `chr:pos`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Locus {
    pub chromosome: u8,
    pub position: u64,
}

impl Locus {
    pub fn new(chromosome: u8, position: u64) -> Self {
        Self { chromosome, position }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.chromosome, self.position)
    }
}

impl FromStr for Locus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(format!("gene id {s:?} is not chr:pos"));
        let (c, p) = s.trim().split_once(':').ok_or_else(bad)?;
        let chromosome: u8 = c.parse().map_err(|_| bad())?;
        if !(1..=CHROMOSOMES).contains(&chromosome) {
            return Err(Error::Data(format!("chromosome {chromosome} of {s:?} outside 1..={CHROMOSOMES}")));
        }
        Ok(Self {
            chromosome,
            position: p.parse().map_err(|_| bad())?,
        })
    }
}

/// Checks that positions strictly increase within every chromosome.
pub fn check_loci(loci: &[Locus]) -> Result<()> {
    let mut last: std::collections::HashMap<u8, u64> = Default::default();
    for l in loci {
        if let Some(&p) = last.get(&l.chromosome) {
            if l.position <= p {
                return Err(Error::Data(format!("locus {l} does not follow position {p} on its chromosome")));
            }
        }
        last.insert(l.chromosome, l.position);
    }
    Ok(())
}

/// Hybrids by genes, every value in `{0, 1, 2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenotypeMatrix {
    pub hybrids: Vec<String>,
    pub genes: Vec<Locus>,
    /// Row-major `hybrids x genes`.
    values: Vec<u8>,
}

impl GenotypeMatrix {
    pub fn new(hybrids: Vec<String>, genes: Vec<Locus>, values: Vec<u8>) -> Result<Self> {
        if values.len() != hybrids.len() * genes.len() {
            return Err(Error::Data(format!(
                "{} values for {} hybrids x {} genes",
                values.len(),
                hybrids.len(),
                genes.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v > HOMO_ALT) {
            let (r, c) = (pos / genes.len(), pos % genes.len());
            return Err(Error::Data(format!(
                "value {} for hybrid {} at gene {}",
                values[pos], hybrids[r], genes[c]
            )));
        }
        check_loci(&genes)?;
        Ok(Self { hybrids, genes, values })
    }

    pub fn n_hybrids(&self) -> usize {
        self.hybrids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let g = self.genes.len();
        &self.values[i * g..(i + 1) * g]
    }

    pub fn get(&self, hybrid: usize, gene: usize) -> u8 {
        self.values[hybrid * self.genes.len() + gene]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn gene_index(&self, id: &str) -> Option<usize> {
        let locus: Locus = id.parse().ok()?;
        self.genes.iter().position(|g| *g == locus)
    }

    pub fn hybrid_index(&self, id: &str) -> Option<usize> {
        self.hybrids.iter().position(|h| h == id)
    }

    /// The matrix as reals, for projection.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(
            self.n_hybrids(),
            self.n_genes(),
            self.values.iter().map(|&v| v as f64).collect(),
        )
        .expect("shape checked at construction")
    }
}

fn allele(symbol: char) -> Option<char> {
    let c = symbol.to_ascii_uppercase();
    matches!(c, 'A' | 'C' | 'G' | 'T').then_some(c)
}

/// Splits a diploid call such as `AG`, `A/G` or `A|G` into its alleles.
fn parse_call(call: &str) -> Option<(char, char)> {
    let symbols: Vec<char> = call.trim().chars().filter(|c| *c != '/' && *c != '|').collect();
    match symbols.as_slice() {
        [a, b] => Some((allele(*a)?, allele(*b)?)),
        _ => None,
    }
}

/// Encodes one diploid call against the reference allele: heterozygous is 1,
/// homozygous reference 0, homozygous alternative 2.
pub fn encode_call(call: &str, reference: char, locus: &Locus) -> Result<u8> {
    let unknown = || Error::UnknownCall {
        locus: locus.to_string(),
        call: call.to_string(),
    };
    let reference = allele(reference).ok_or_else(|| Error::UnknownCall {
        locus: locus.to_string(),
        call: reference.to_string(),
    })?;
    let (a, b) = parse_call(call).ok_or_else(unknown)?;
    Ok(if a != b {
        HETERO
    } else if a == reference {
        HOMO_REF
    } else {
        HOMO_ALT
    })
}

/// Encodes raw calls (`hybrids x loci`) against a reference line.
pub fn encode_genotypes(
    hybrids: Vec<String>,
    genes: Vec<Locus>,
    calls: &[Vec<String>],
    reference: &[char],
) -> Result<GenotypeMatrix> {
    if reference.len() != genes.len() {
        return Err(Error::Data(format!(
            "reference covers {} of {} loci",
            reference.len(),
            genes.len()
        )));
    }
    if calls.len() != hybrids.len() {
        return Err(Error::Data(format!("{} call rows for {} hybrids", calls.len(), hybrids.len())));
    }
    let mut values = Vec::with_capacity(hybrids.len() * genes.len());
    for row in calls {
        if row.len() != genes.len() {
            return Err(Error::Data(format!("call row has {} of {} loci", row.len(), genes.len())));
        }
        for ((call, &r), locus) in row.iter().zip(reference).zip(&genes) {
            values.push(encode_call(call, r, locus)?);
        }
    }
    GenotypeMatrix::new(hybrids, genes, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentRole {
    Paternal,
    Maternal,
}

/// Homozygous breeding line, encoded like hybrids (0 or 2 per gene).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentLine {
    pub id: String,
    pub role: ParentRole,
    pub calls: Vec<u8>,
}

/// F1 genotype of a cross of two homozygous lines: ref x ref is 0,
/// alt x alt is 2 and ref x alt is 1.
pub fn synthesize_hybrid(paternal: &ParentLine, maternal: &ParentLine) -> Result<Vec<u8>> {
    if paternal.calls.len() != maternal.calls.len() {
        return Err(Error::Data(format!(
            "parents {} and {} cover {} and {} genes",
            paternal.id,
            maternal.id,
            paternal.calls.len(),
            maternal.calls.len()
        )));
    }
    paternal
        .calls
        .iter()
        .zip(&maternal.calls)
        .enumerate()
        .map(|(g, (&p, &m))| {
            for (line, v) in [(&paternal.id, p), (&maternal.id, m)] {
                if v != HOMO_REF && v != HOMO_ALT {
                    return Err(Error::Data(format!(
                        "parent {line} is not homozygous at gene {g} (value {v})"
                    )));
                }
            }
            Ok((p + m) / 2)
        })
        .collect()
}

/// Number of genes whose encoded values differ.
pub fn genomic_distance(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("genotype lengths {} and {} differ", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, calls: Vec<u8>) -> ParentLine {
        ParentLine {
            id: id.into(),
            role: ParentRole::Paternal,
            calls,
        }
    }

    #[test]
    fn call_encoding() {
        let l = Locus::new(1, 10);
        assert_eq!(encode_call("AG", 'A', &l).unwrap(), HETERO);
        assert_eq!(encode_call("A/A", 'A', &l).unwrap(), HOMO_REF);
        assert_eq!(encode_call("g|g", 'A', &l).unwrap(), HOMO_ALT);
        let err = encode_call("AN", 'A', &l).unwrap_err();
        assert!(err.to_string().contains("1:10"));
    }

    #[test]
    fn f1_rule() {
        let r = line("r", vec![0, 2, 0, 2]);
        let t = line("t", vec![0, 2, 2, 0]);
        assert_eq!(synthesize_hybrid(&r, &t).unwrap(), vec![0, 2, 1, 1]);
        assert!(synthesize_hybrid(&r, &line("h", vec![0, 1, 0, 2])).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(genomic_distance(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0);
        assert_eq!(genomic_distance(&[0, 1, 2], &[0, 2, 2]).unwrap(), 1);
        assert!(genomic_distance(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn locus_order_and_values() {
        let genes = vec![Locus::new(1, 5), Locus::new(2, 1), Locus::new(1, 9)];
        assert!(GenotypeMatrix::new(vec!["h".into()], genes.clone(), vec![0, 1, 2]).is_ok());
        assert!(GenotypeMatrix::new(vec!["h".into()], genes, vec![0, 3, 2]).is_err());
        let bad = vec![Locus::new(1, 5), Locus::new(1, 5)];
        assert!(GenotypeMatrix::new(vec!["h".into()], bad, vec![0, 0]).is_err());
        assert!("13:4".parse::<Locus>().is_err());
        assert_eq!("3:40".parse::<Locus>().unwrap(), Locus::new(3, 40));
    }
}
