//! Dataset manifests and their CSV files.
//!
//! A manifest names a genotype CSV (`hybrid,<chr:pos>...` with integer
//! cells in {0,1,2}), a trait CSV keyed by hybrid id, a parent CSV
//! (`line,role,<chr:pos>...`) and optionally a pedigree CSV
//! (`hybrid,paternal,maternal`). Relative paths resolve against the manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use dualproj_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{check_loci, GenotypeMatrix, Locus, ParentLine, ParentRole, HOMO_ALT, HOMO_REF};
use crate::synthetic::SyntheticDataset;
use crate::traits::TraitTable;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub genotypes: String,
    pub traits: String,
    pub parents: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pedigree: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub n_hybrids: usize,
    pub n_genes: usize,
    pub files: ManifestFiles,
    /// Gene ids (`chr:pos`) of planted regulatory genes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_genes: Option<Vec<String>>,
}

/// Everything a manifest describes, validated.
#[derive(Clone, Debug, PartialEq)]
pub struct GenomicDataset {
    pub name: String,
    pub genotypes: GenotypeMatrix,
    pub traits: TraitTable,
    pub paternal: Vec<ParentLine>,
    pub maternal: Vec<ParentLine>,
    /// `(paternal id, maternal id)` per hybrid, when known.
    pub pedigree: Option<Vec<(String, String)>>,
    /// Indices of the planted genes.
    pub planted: Option<Vec<usize>>,
}

impl GenomicDataset {
    /// Cultivated crosses from the pedigree (empty without one).
    pub fn cultivated(&self) -> Vec<(String, String)> {
        self.pedigree.clone().unwrap_or_default()
    }
}

impl From<SyntheticDataset> for GenomicDataset {
    fn from(d: SyntheticDataset) -> Self {
        let pedigree = d
            .pedigree
            .iter()
            .map(|&(p, m)| (d.paternal[p].id.clone(), d.maternal[m].id.clone()))
            .collect();
        Self {
            name: d.name,
            genotypes: d.genotypes,
            traits: d.traits,
            paternal: d.paternal,
            maternal: d.maternal,
            pedigree: Some(pedigree),
            planted: Some(d.planted),
        }
    }
}

struct Sheet {
    file: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Sheet {
    fn read(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::InvalidCell {
                    file,
                    row: i + 1,
                    column: rec.len().min(header.len()) + 1,
                    header: header.get(rec.len()).cloned().unwrap_or_default(),
                    detail: format!("{} fields, header has {}", rec.len(), header.len()),
                });
            }
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(Self { file, header, rows })
    }

    /// Error for the cell at 0-based `(row, col)`.
    fn cell_error(&self, row: usize, col: usize, detail: impl Into<String>) -> Error {
        Error::InvalidCell {
            file: self.file.clone(),
            row: row + 1,
            column: col + 1,
            header: self.header.get(col).cloned().unwrap_or_default(),
            detail: detail.into(),
        }
    }

    fn expect_header(&self, col: usize, name: &str) -> Result<()> {
        match self.header.get(col) {
            Some(h) if h == name => Ok(()),
            other => Err(Error::Data(format!(
                "{}: column {} must be {name:?}, found {:?}",
                self.file,
                col + 1,
                other.map(String::as_str).unwrap_or("")
            ))),
        }
    }

    fn loci(&self, from: usize) -> Result<Vec<Locus>> {
        let loci = self.header[from..]
            .iter()
            .enumerate()
            .map(|(j, h)| {
                h.parse::<Locus>()
                    .map_err(|e| Error::Data(format!("{}: header column {}: {e}", self.file, from + j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        check_loci(&loci).map_err(|e| Error::Data(format!("{}: {e}", self.file)))?;
        Ok(loci)
    }

    fn genotype(&self, row: usize, col: usize, homozygous_only: bool) -> Result<u8> {
        let v: u8 = self.rows[row][col]
            .parse()
            .map_err(|_| self.cell_error(row, col, format!("{:?} is not an integer", self.rows[row][col])))?;
        let ok = if homozygous_only {
            v == HOMO_REF || v == HOMO_ALT
        } else {
            v <= HOMO_ALT
        };
        if !ok {
            let allowed = if homozygous_only { "0 or 2" } else { "0, 1 or 2" };
            return Err(self.cell_error(row, col, format!("value {v} is not {allowed}")));
        }
        Ok(v)
    }

    fn unique_ids(&self, col: usize) -> Result<Vec<String>> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let id = &r[col];
                if id.is_empty() {
                    return Err(self.cell_error(i, col, "empty id"));
                }
                if !seen.insert(id.clone()) {
                    return Err(self.cell_error(i, col, format!("duplicate id {id:?}")));
                }
                Ok(id.clone())
            })
            .collect()
    }
}

pub fn read_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let sheet = Sheet::read(path)?;
    sheet.expect_header(0, "hybrid")?;
    let genes = sheet.loci(1)?;
    let hybrids = sheet.unique_ids(0)?;
    let mut values = Vec::with_capacity(hybrids.len() * genes.len());
    for i in 0..sheet.rows.len() {
        for j in 1..sheet.header.len() {
            values.push(sheet.genotype(i, j, false)?);
        }
    }
    GenotypeMatrix::new(hybrids, genes, values)
}

pub fn read_traits(path: &Path) -> Result<TraitTable> {
    let sheet = Sheet::read(path)?;
    sheet.expect_header(0, "hybrid")?;
    let names = sheet.header[1..].to_vec();
    let hybrids = sheet.unique_ids(0)?;
    let mut values = Matrix::zeros(hybrids.len(), names.len());
    for i in 0..sheet.rows.len() {
        for j in 1..sheet.header.len() {
            let cell = &sheet.rows[i][j];
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| sheet.cell_error(i, j, format!("{cell:?} is not a finite number")))?;
            values.row_mut(i)[j - 1] = v;
        }
    }
    TraitTable::new(names, hybrids, values)
}

/// Parent lines split into paternal and maternal pools.
pub fn read_parents(path: &Path) -> Result<(Vec<ParentLine>, Vec<ParentLine>, Vec<Locus>)> {
    let sheet = Sheet::read(path)?;
    sheet.expect_header(0, "line")?;
    sheet.expect_header(1, "role")?;
    let genes = sheet.loci(2)?;
    let ids = sheet.unique_ids(0)?;
    let (mut paternal, mut maternal) = (Vec::new(), Vec::new());
    for (i, id) in ids.into_iter().enumerate() {
        let role = match sheet.rows[i][1].as_str() {
            "paternal" => ParentRole::Paternal,
            "maternal" => ParentRole::Maternal,
            other => return Err(sheet.cell_error(i, 1, format!("role {other:?} is not paternal or maternal"))),
        };
        let calls = (2..sheet.header.len())
            .map(|j| sheet.genotype(i, j, true))
            .collect::<Result<Vec<_>>>()?;
        let line = ParentLine { id, role, calls };
        match role {
            ParentRole::Paternal => paternal.push(line),
            ParentRole::Maternal => maternal.push(line),
        }
    }
    Ok((paternal, maternal, genes))
}

pub fn read_pedigree(path: &Path) -> Result<Vec<(String, String, String)>> {
    let sheet = Sheet::read(path)?;
    for (c, name) in ["hybrid", "paternal", "maternal"].iter().enumerate() {
        sheet.expect_header(c, name)?;
    }
    sheet.unique_ids(0)?;
    Ok(sheet
        .rows
        .iter()
        .map(|r| (r[0].clone(), r[1].clone(), r[2].clone()))
        .collect())
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Manifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Reads and cross-checks every file, relative paths resolved against
    /// `base`.
    pub fn load(&self, base: &Path) -> Result<GenomicDataset> {
        let genotypes = read_genotypes(&resolve(base, &self.files.genotypes))?;
        if genotypes.n_hybrids() != self.n_hybrids || genotypes.n_genes() != self.n_genes {
            return Err(Error::Data(format!(
                "manifest declares {} x {}, genotype file has {} x {}",
                self.n_hybrids,
                self.n_genes,
                genotypes.n_hybrids(),
                genotypes.n_genes()
            )));
        }
        let traits = read_traits(&resolve(base, &self.files.traits))?;
        if traits.hybrids != genotypes.hybrids {
            let at = traits
                .hybrids
                .iter()
                .zip(&genotypes.hybrids)
                .position(|(a, b)| a != b)
                .unwrap_or(traits.hybrids.len().min(genotypes.hybrids.len()));
            return Err(Error::Data(format!(
                "trait row {} ({:?}) does not match genotype row ({:?})",
                at + 1,
                traits.hybrids.get(at),
                genotypes.hybrids.get(at)
            )));
        }
        let (paternal, maternal, parent_genes) = read_parents(&resolve(base, &self.files.parents))?;
        if parent_genes != genotypes.genes {
            return Err(Error::Data("parent and genotype files list different genes".into()));
        }
        let pedigree = match &self.files.pedigree {
            None => None,
            Some(f) => {
                let rows = read_pedigree(&resolve(base, f))?;
                let known = |pool: &[ParentLine], id: &str| pool.iter().any(|l| l.id == id);
                let mut out = Vec::with_capacity(rows.len());
                for (h, p, m) in rows {
                    if genotypes.hybrid_index(&h).is_none() {
                        return Err(Error::Data(format!("pedigree names unknown hybrid {h:?}")));
                    }
                    if !known(&paternal, &p) || !known(&maternal, &m) {
                        return Err(Error::Data(format!("pedigree of {h:?} names unknown parents {p:?} x {m:?}")));
                    }
                    out.push((p, m));
                }
                Some(out)
            }
        };
        let planted = match &self.planted_genes {
            None => None,
            Some(ids) => Some(
                ids.iter()
                    .map(|id| {
                        genotypes
                            .gene_index(id)
                            .ok_or_else(|| Error::Data(format!("planted gene {id:?} is not in the genotype file")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(GenomicDataset {
            name: self.name.clone(),
            genotypes,
            traits,
            paternal,
            maternal,
            pedigree,
            planted,
        })
    }
}

/// Loads a manifest file and its data.
pub fn load_dataset(manifest: &Path) -> Result<GenomicDataset> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    Manifest::from_path(manifest)?.load(base)
}

fn write_rows<I, R>(path: &Path, header: Vec<String>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the dataset as CSV files plus `manifest.json` into `dir` and
/// returns the manifest path.
pub fn write_dataset(dataset: &GenomicDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let g = &dataset.genotypes;
    let gene_ids: Vec<String> = g.genes.iter().map(|l| l.to_string()).collect();
    let header = |first: &[&str]| -> Vec<String> {
        first.iter().map(|s| s.to_string()).chain(gene_ids.iter().cloned()).collect()
    };
    write_rows(
        &dir.join("genotypes.csv"),
        header(&["hybrid"]),
        (0..g.n_hybrids()).map(|i| {
            std::iter::once(g.hybrids[i].clone()).chain(g.row(i).iter().map(|v| v.to_string()))
        }),
    )?;
    let t = &dataset.traits;
    write_rows(
        &dir.join("traits.csv"),
        std::iter::once("hybrid".to_string()).chain(t.names.iter().cloned()).collect(),
        (0..t.hybrids.len()).map(|i| {
            std::iter::once(t.hybrids[i].clone()).chain(t.values.row(i).iter().map(|v| v.to_string()))
        }),
    )?;
    write_rows(
        &dir.join("parents.csv"),
        header(&["line", "role"]),
        dataset.paternal.iter().chain(&dataset.maternal).map(|l| {
            let role = match l.role {
                ParentRole::Paternal => "paternal",
                ParentRole::Maternal => "maternal",
            };
            [l.id.clone(), role.to_string()]
                .into_iter()
                .chain(l.calls.iter().map(|v| v.to_string()))
        }),
    )?;
    let pedigree_file = match &dataset.pedigree {
        None => None,
        Some(ped) => {
            write_rows(
                &dir.join("pedigree.csv"),
                vec!["hybrid".into(), "paternal".into(), "maternal".into()],
                g.hybrids.iter().zip(ped).map(|(h, (p, m))| [h.clone(), p.clone(), m.clone()]),
            )?;
            Some("pedigree.csv".to_string())
        }
    };
    let manifest = Manifest {
        name: dataset.name.clone(),
        n_hybrids: g.n_hybrids(),
        n_genes: g.n_genes(),
        files: ManifestFiles {
            genotypes: "genotypes.csv".into(),
            traits: "traits.csv".into(),
            parents: "parents.csv".into(),
            pedigree: pedigree_file,
        },
        planted_genes: dataset
            .planted
            .as_ref()
            .map(|p| p.iter().map(|&j| gene_ids[j].clone()).collect()),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
