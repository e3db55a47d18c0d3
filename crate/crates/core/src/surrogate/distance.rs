use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::eval::FeatureMatrix;

/// Which feature vectors a Manhattan distance is taken over. The kernel and
/// the Kriging fit treat both identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DistanceKind {
    GenotypicManhattan,
    PhenotypicManhattan,
}

impl DistanceKind {
    pub fn for_subset(name: &str) -> Self {
        if name == "weights" {
            DistanceKind::GenotypicManhattan
        } else {
            DistanceKind::PhenotypicManhattan
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        manhattan(a, b)
    }

    pub fn tag(self) -> &'static str {
        match self {
            DistanceKind::GenotypicManhattan => "genotypicManhattan",
            DistanceKind::PhenotypicManhattan => "phenotypicManhattan",
        }
    }
}

pub fn manhattan(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(l1(a, b))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Exponential kernel `exp(-theta * d)`.
pub fn kernel(d: f64, theta: f64) -> f64 {
    (-theta * d).exp()
}

/// Symmetric pairwise distance matrix, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(x: &FeatureMatrix, kind: DistanceKind) -> Self {
        let _ = kind;
        let n = x.rows();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| l1(x.row(i), x.row(j))).collect())
            .collect();
        let mut data = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn from_raw(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len(n * n, data.len())?;
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
