//! On-disk layout under the data directory:
//!
//! ```text
//! datasets/<id>/manifest.json, *.csv
//! sessions/<id>/session.json, rows.model.json, cols.model.json, predictor.json
//! ```
//!
//! Files are written to a temporary sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use dualproj_core::{ModificationEvent, TrainConfig};
use dualproj_genomics::recommend::Recommended;
use dualproj_genomics::PredictorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ROWS_CHECKPOINT: &str = "rows.model.json";
pub const COLS_CHECKPOINT: &str = "cols.model.json";
pub const PREDICTOR_FILE: &str = "predictor.json";
pub const SESSION_FILE: &str = "session.json";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("path has no parent directory")?;
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Quality of an initial embedding at one neighborhood size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingQuality {
    pub k: usize,
    #[serde(rename = "T")]
    pub trustworthiness: f64,
    #[serde(rename = "C")]
    pub continuity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub rows: EmbeddingQuality,
    pub cols: EmbeddingQuality,
    /// SHA-256 of both checkpoint files.
    pub rows_checksum: String,
    pub cols_checksum: String,
    pub seconds: f64,
}

/// Everything needed to rebuild a session after a restart: the
/// checkpoints are loaded and the history replayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub dataset_id: String,
    /// Fingerprint of the dataset's genotype matrix.
    pub fingerprint: String,
    pub rows_checkpoint: String,
    pub cols_checkpoint: String,
    pub predictor_checkpoint: String,
    pub rows_config: TrainConfig,
    pub cols_config: TrainConfig,
    pub predictor_config: PredictorConfig,
    pub training: TrainingSummary,
    pub history: Vec<ModificationEvent>,
    /// Client event id of every history entry.
    pub event_ids: Vec<String>,
    pub recommended: Vec<Recommended>,
    /// SHA-256 of both embeddings after the last event, checked on reload.
    pub embedding_checksum: String,
    pub created: u64,
    pub modified: u64,
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn save_record(&self, record: &SessionRecord) -> Result<()> {
        let path = self.session_dir(&record.id).join(SESSION_FILE);
        write_atomic(&path, &serde_json::to_vec_pretty(record)?)
    }

    pub fn load_record(&self, id: &str) -> Result<SessionRecord> {
        let path = self.session_dir(id).join(SESSION_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn ids(&self, kind: &str, marker: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(kind))? {
            let entry = entry?;
            if entry.path().join(marker).is_file() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn dataset_ids(&self) -> Result<Vec<String>> {
        self.ids("datasets", "manifest.json")
    }

    pub fn session_ids(&self) -> Result<Vec<String>> {
        self.ids("sessions", SESSION_FILE)
    }
}
