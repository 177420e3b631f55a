use dualproj_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named real-valued traits per hybrid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitTable {
    pub names: Vec<String>,
    pub hybrids: Vec<String>,
    /// `hybrids x traits`.
    pub values: Matrix,
}

impl TraitTable {
    pub fn new(names: Vec<String>, hybrids: Vec<String>, values: Matrix) -> Result<Self> {
        if values.shape() != (hybrids.len(), names.len()) {
            return Err(Error::Data(format!(
                "trait values {:?} for {} hybrids x {} traits",
                values.shape(),
                hybrids.len(),
                names.len()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Data("trait values must be finite".into()));
        }
        Ok(Self { names, hybrids, values })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|j| self.values.col(j))
    }

    /// Trait values of one hybrid by name.
    pub fn row(&self, hybrid: usize) -> Vec<(String, f64)> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.row(hybrid).iter().copied())
            .collect()
    }
}
