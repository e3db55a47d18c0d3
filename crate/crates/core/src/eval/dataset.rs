use serde::{Deserialize, Serialize};

use crate::controller::{NetTopology, ProbeMode};
use crate::error::{check_len, Error, Result};
use crate::sim::MazeConfig;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in &rows {
            check_len(cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProbeInfo {
    /// Number of probe inputs.
    pub k: usize,
    /// Phenotype length, `k * n_outputs`.
    pub dim: usize,
    pub seed: u64,
    pub mode: ProbeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetMeta {
    pub schema_version: String,
    pub topology: NetTopology,
    pub probes: Vec<ProbeInfo>,
    /// Niche index of each row.
    pub cells: Vec<usize>,
    pub replication: u64,
    pub base_seed: u64,
    pub qd_seed: u64,
    pub maze: Option<MazeConfig>,
}

pub const DATASET_SCHEMA: &str = "1.0";

impl Default for DatasetMeta {
    fn default() -> Self {
        DatasetMeta {
            schema_version: DATASET_SCHEMA.to_string(),
            topology: NetTopology::maze(2),
            probes: Vec::new(),
            cells: Vec::new(),
            replication: 0,
            base_seed: 0,
            qd_seed: 0,
            maze: None,
        }
    }
}

/// Named feature subsets sharing one row order, plus raw fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    subsets: Vec<(String, FeatureMatrix)>,
    y: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(
        subsets: Vec<(String, FeatureMatrix)>,
        y: Vec<f64>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        for (name, m) in &subsets {
            if m.rows() != y.len() {
                return Err(Error::input(format!(
                    "subset {name} has {} rows, fitness has {}",
                    m.rows(),
                    y.len()
                )));
            }
        }
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(
                "fitness values must be finite and non-negative",
            ));
        }
        Ok(Dataset { subsets, y, meta })
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn subsets(&self) -> &[(String, FeatureMatrix)] {
        &self.subsets
    }

    pub fn subset(&self, name: &str) -> Option<&FeatureMatrix> {
        self.subsets.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn subset_names(&self) -> impl Iterator<Item = &str> {
        self.subsets.iter().map(|(n, _)| n.as_str())
    }
}

/// Phenotype dimension encoded in a subset name such as `pheno_64`.
pub fn pheno_dim(name: &str) -> Option<usize> {
    name.strip_prefix("pheno_")?.parse().ok()
}
