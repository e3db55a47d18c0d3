//! Experiment configuration and per-replication seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{NetTopology, ProbeMode, MAX_HIDDEN};
use crate::error::{Error, Result};
use crate::eval::{AggregateOptions, EvalConfig, ModelKind, PcaMode};
use crate::io;
use crate::qd::QdConfig;
use crate::rng::{derive_seed, splitmix64, Stream};
use crate::sim::MazeConfig;
use crate::surrogate::{KrigingConfig, NuggetMode};

pub const DEFAULT_PROBE_SIZES: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            level: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub maze: MazeConfig,
    /// One dataset per hidden-layer size and replication.
    pub n_hidden: Vec<usize>,
    /// `seed` is ignored here; run seeds come from `baseSeed`.
    pub qd: QdConfig,
    /// Probe lengths `k`; each yields a phenotype of `2k` values.
    pub probe_sizes: Vec<usize>,
    pub probe_mode: ProbeMode,
    /// Random controllers whose rollouts feed trajectory probes.
    pub trajectory_controllers: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub train_size: usize,
    pub models: Vec<ModelKind>,
    pub kriging: KrigingConfig,
    pub linear_max_steps: Option<usize>,
    pub pca_fraction: f64,
    pub pca_mode: PcaMode,
    pub bootstrap: BootstrapConfig,
    /// Cache training distance matrices under `<out>/cache`.
    pub cache_distances: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            maze: MazeConfig::default(),
            n_hidden: vec![2, 5],
            qd: QdConfig::default(),
            probe_sizes: DEFAULT_PROBE_SIZES.to_vec(),
            probe_mode: ProbeMode::Uniform,
            trajectory_controllers: 20,
            replications: 20,
            base_seed: 0,
            train_size: 400,
            models: ModelKind::ALL.to_vec(),
            kriging: KrigingConfig::default(),
            linear_max_steps: None,
            pca_fraction: 0.9,
            pca_mode: PcaMode::Covariance,
            bootstrap: BootstrapConfig::default(),
            cache_distances: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = io::read_json(path).map_err(|e| match e {
            Error::Json { path, source } => Error::schema(path, source.to_string()),
            other => other,
        })?;
        Ok(config)
    }

    /// Checks every sub-configuration; collects all problems into one error.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        };
        check(self.maze.validate());
        check(self.qd.validate());
        let mut push = |cond: bool, msg: &str| {
            if cond {
                problems.push(msg.to_string());
            }
        };
        push(
            self.n_hidden.is_empty(),
            "nHidden must list at least one size",
        );
        push(
            self.n_hidden.iter().any(|&h| h == 0 || h > MAX_HIDDEN),
            "nHidden entries must lie in 1..=64",
        );
        push(
            has_duplicates(&self.n_hidden),
            "nHidden entries must be distinct",
        );
        push(
            self.probe_sizes.is_empty(),
            "probeSizes must list at least one size",
        );
        push(
            self.probe_sizes.contains(&0),
            "probe sizes must be at least 1",
        );
        push(
            has_duplicates(&self.probe_sizes),
            "probe sizes must be distinct",
        );
        push(
            self.probe_mode == ProbeMode::Trajectory && self.trajectory_controllers == 0,
            "trajectory probes need at least one controller",
        );
        push(self.replications == 0, "replications must be at least 1");
        push(self.train_size < 3, "trainSize must be at least 3");
        push(
            self.train_size >= self.qd.grid_rows.saturating_mul(self.qd.grid_cols),
            "trainSize must be below the number of niche cells, or no archive can leave a test set",
        );
        push(self.models.is_empty(), "models must list at least one kind");
        push(has_duplicates(&self.models), "model kinds must be distinct");
        push(
            self.kriging.mle_budget == 0,
            "kriging mleBudget must be at least 1",
        );
        push(
            !(self.kriging.log10_theta.0 < self.kriging.log10_theta.1
                && self.kriging.log10_nugget.0 < self.kriging.log10_nugget.1),
            "kriging search bounds must satisfy lower < upper",
        );
        push(
            matches!(self.kriging.nugget, NuggetMode::Fixed(v) if !(v >= 0.0 && v.is_finite())),
            "fixed nugget must be finite and non-negative",
        );
        push(
            !(self.pca_fraction > 0.0 && self.pca_fraction <= 1.0),
            "pcaFraction must lie in (0, 1]",
        );
        push(
            !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0),
            "bootstrap level must lie in (0, 1)",
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    pub fn topologies(&self) -> Vec<NetTopology> {
        self.n_hidden
            .iter()
            .map(|&h| NetTopology::maze(h))
            .collect()
    }

    /// MAP-Elites seed; differs across hidden-layer sizes of one replication.
    pub fn qd_seed(&self, replication: u64, n_hidden: usize) -> u64 {
        splitmix64(derive_seed(self.base_seed, replication, Stream::Qd) ^ n_hidden as u64)
    }

    /// Probe seed; shared by every topology of one replication.
    pub fn probe_seed(&self, replication: u64, k: usize) -> u64 {
        derive_seed(self.base_seed, replication, Stream::Probe(k as u64))
    }

    pub fn split_seed(&self, replication: u64) -> u64 {
        derive_seed(self.base_seed, replication, Stream::Split)
    }

    pub fn qd_for(&self, replication: u64, n_hidden: usize) -> QdConfig {
        QdConfig {
            seed: self.qd_seed(replication, n_hidden),
            ..self.qd.clone()
        }
    }

    pub fn eval_for(&self, replication: u64) -> EvalConfig {
        EvalConfig {
            train_size: self.train_size,
            split_seed: self.split_seed(replication),
            models: self.models.clone(),
            subsets: None,
            kriging: self.kriging.clone(),
            linear_max_steps: self.linear_max_steps,
            cache_dir: self.cache_distances.then(|| self.out_dir.join("cache")),
        }
    }

    pub fn aggregate_options(&self) -> AggregateOptions {
        AggregateOptions {
            resamples: self.bootstrap.resamples,
            level: self.bootstrap.level,
            seed: derive_seed(self.base_seed, 0, Stream::Bootstrap),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn problems_are_collected() {
        let c = ExperimentConfig {
            replications: 0,
            probe_sizes: vec![2, 2],
            ..ExperimentConfig::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(
            msg.contains("replications") && msg.contains("distinct"),
            "{msg}"
        );
    }

    #[test]
    fn seeds_separate_streams() {
        let c = ExperimentConfig::default();
        assert_ne!(c.qd_seed(0, 2), c.qd_seed(0, 5));
        assert_ne!(c.qd_seed(0, 2), c.qd_seed(1, 2));
        assert_ne!(c.probe_seed(0, 2), c.probe_seed(0, 4));
        assert_eq!(c.probe_seed(3, 8), c.clone().probe_seed(3, 8));
        let other = ExperimentConfig {
            base_seed: 1,
            ..c.clone()
        };
        assert_ne!(c.split_seed(0), other.split_seed(0));
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"replications": 2, "nHidden": [2]}"#).unwrap();
        assert_eq!(partial.replications, 2);
        assert_eq!(partial.train_size, 400);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"replicates": 2}"#).is_err());
    }
}
