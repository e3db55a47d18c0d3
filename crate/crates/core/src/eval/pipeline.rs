//! Split, log-scale, fit both model kinds on every subset and score them.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kendall::kendall_tau;
use super::pca::{pca_components, PcaMode};
use super::{pheno_dim, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::rng;
use crate::surrogate::{
    fit_kriging_with_distances, fit_linear_aic, DistanceKind, DistanceMatrix, KrigingConfig,
};

/// Offset added before taking logs so zero-length paths stay finite.
pub const LOG_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kriging,
    Linear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Kriging, ModelKind::Linear];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kriging => "kriging",
            ModelKind::Linear => "linear",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kriging" => Ok(ModelKind::Kriging),
            "linear" => Ok(ModelKind::Linear),
            other => Err(Error::config(format!(
                "unknown model kind '{other}' (expected kriging or linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct EvalConfig {
    pub train_size: usize,
    pub split_seed: u64,
    pub models: Vec<ModelKind>,
    /// Restrict evaluation to these subsets; all subsets when `None`.
    pub subsets: Option<Vec<String>>,
    pub kriging: KrigingConfig,
    /// Upper bound on linear selection steps in addition to `trainSize - 2`.
    pub linear_max_steps: Option<usize>,
    /// Directory for cached training distance matrices.
    pub cache_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_size: 400,
            split_seed: 0,
            models: ModelKind::ALL.to_vec(),
            subsets: None,
            kriging: KrigingConfig::default(),
            linear_max_steps: None,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalResult {
    pub subset: String,
    pub model: ModelKind,
    pub n_hidden: usize,
    pub replication: u64,
    pub kendall_tau: Option<f64>,
    /// Selected features of a linear model.
    pub n_coefficients: Option<usize>,
    pub train_size: usize,
    pub test_size: usize,
    /// Set when fitting or scoring failed.
    pub error: Option<String>,
}

/// Row indices of each partition and the log-scaled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
}

pub fn log_scale(y: f64) -> f64 {
    (y + LOG_EPSILON).ln()
}

/// Seeded uniform split without replacement; targets become `ln(y + 1e-6)`.
pub fn split_and_scale(data: &Dataset, train_size: usize, seed: u64) -> Result<Split> {
    let n = data.rows();
    if train_size == 0 || train_size >= n {
        return Err(Error::config(format!(
            "train size {train_size} must be positive and below the {n} dataset rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut train = order[..train_size].to_vec();
    let mut test = order[train_size..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let y = data.y();
    Ok(Split {
        y_train: train.iter().map(|&i| log_scale(y[i])).collect(),
        y_test: test.iter().map(|&i| log_scale(y[i])).collect(),
        train,
        test,
    })
}

fn selected_subsets<'a>(
    data: &'a Dataset,
    filter: Option<&'a [String]>,
) -> Result<Vec<(&'a str, &'a FeatureMatrix)>> {
    match filter {
        None => Ok(data
            .subsets()
            .iter()
            .map(|(n, m)| (n.as_str(), m))
            .collect()),
        Some(names) => names
            .iter()
            .map(|name| {
                data.subset(name)
                    .map(|m| (name.as_str(), m))
                    .ok_or_else(|| Error::input(format!("dataset has no subset '{name}'")))
            })
            .collect(),
    }
}

/// Fits one model and returns `(predictions on test rows, selected features)`.
fn fit_and_predict(
    name: &str,
    x: &FeatureMatrix,
    split: &Split,
    kind: ModelKind,
    config: &EvalConfig,
) -> Result<(Vec<f64>, Option<usize>)> {
    let train = x.select_rows(&split.train);
    let test = x.select_rows(&split.test);
    match kind {
        ModelKind::Kriging => {
            let dist_kind = DistanceKind::for_subset(name);
            let distances = match &config.cache_dir {
                Some(dir) => crate::io::cached_distances(dir, &train, dist_kind)?,
                None => DistanceMatrix::compute(&train, dist_kind),
            };
            let model = fit_kriging_with_distances(
                &train,
                &split.y_train,
                &distances,
                dist_kind,
                &config.kriging,
            )?;
            Ok((model.predict_many(&test)?, None))
        }
        ModelKind::Linear => {
            let steps = config.linear_max_steps.unwrap_or(usize::MAX);
            let model = fit_linear_aic(&train, &split.y_train, steps)?;
            Ok((model.predict_many(&test)?, Some(model.n_coefficients())))
        }
    }
}

/// Every selected subset crossed with every model kind, in subset-major
/// order. A failing cell is reported in its result instead of aborting.
pub fn evaluate_models(data: &Dataset, config: &EvalConfig) -> Result<Vec<EvalResult>> {
    let split = split_and_scale(data, config.train_size, config.split_seed)?;
    let subsets = selected_subsets(data, config.subsets.as_deref())?;
    let jobs: Vec<(&str, &FeatureMatrix, ModelKind)> = subsets
        .iter()
        .flat_map(|&(name, x)| config.models.iter().map(move |&k| (name, x, k)))
        .collect();
    let results = jobs
        .into_par_iter()
        .map(|(name, x, kind)| {
            // A fitted model keeps its coefficient count even when tau is
            // undefined (constant predictions).
            let (tau, coefs, error) = match fit_and_predict(name, x, &split, kind, config) {
                Ok((pred, coefs)) => match kendall_tau(&pred, &split.y_test) {
                    Ok(tau) => (Some(tau), coefs, None),
                    Err(e) => (None, coefs, Some(e.to_string())),
                },
                Err(e) => (None, None, Some(e.to_string())),
            };
            EvalResult {
                subset: name.to_string(),
                model: kind,
                n_hidden: data.meta.topology.n_hidden,
                replication: data.meta.replication,
                kendall_tau: tau,
                n_coefficients: coefs,
                train_size: split.train.len(),
                test_size: split.test.len(),
                error,
            }
        })
        .collect();
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PcaResult {
    pub subset: String,
    pub n_hidden: usize,
    pub replication: u64,
    pub dim: usize,
    pub components: Option<usize>,
    pub error: Option<String>,
}

/// Components needed to explain `fraction` of the variance of each subset,
/// over all rows of the dataset.
pub fn analyze_pca(
    data: &Dataset,
    fraction: f64,
    mode: PcaMode,
    filter: Option<&[String]>,
) -> Result<Vec<PcaResult>> {
    let subsets = selected_subsets(data, filter)?;
    Ok(subsets
        .into_par_iter()
        .map(|(name, x)| {
            let (components, error) = match pca_components(x, fraction, mode) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(e.to_string())),
            };
            PcaResult {
                subset: name.to_string(),
                n_hidden: data.meta.topology.n_hidden,
                replication: data.meta.replication,
                dim: pheno_dim(name).unwrap_or(x.cols()),
                components,
                error,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::DatasetMeta;

    fn dataset(n: usize) -> Dataset {
        let w: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let p: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i as f64).sin(), (i as f64).cos(), 0.1 * i as f64, 1.0])
            .collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        Dataset::new(
            vec![
                ("weights".into(), FeatureMatrix::from_rows(w).unwrap()),
                ("pheno_4".into(), FeatureMatrix::from_rows(p).unwrap()),
            ],
            y,
            DatasetMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = dataset(900);
        let s = split_and_scale(&d, 400, 11).unwrap();
        assert_eq!(s.train.len(), 400);
        assert_eq!(s.test.len(), 500);
        assert_eq!(s, split_and_scale(&d, 400, 11).unwrap());
        assert_ne!(s.train, split_and_scale(&d, 400, 12).unwrap().train);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..900).collect::<Vec<_>>());
        assert!(split_and_scale(&d, 900, 0).is_err());
    }

    #[test]
    fn undefined_tau_keeps_coefficient_count() {
        // a constant feature is never selected, so predictions are constant
        let n = 60;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![3.0]).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 + ((i * 53) % 17) as f64).collect();
        let d = Dataset::new(
            vec![("weights".into(), FeatureMatrix::from_rows(x).unwrap())],
            y,
            DatasetMeta::default(),
        )
        .unwrap();
        let config = EvalConfig {
            train_size: 40,
            models: vec![ModelKind::Linear],
            ..EvalConfig::default()
        };
        let r = &evaluate_models(&d, &config).unwrap()[0];
        assert_eq!(r.n_coefficients, Some(0));
        assert!(r.kendall_tau.is_none());
        assert!(r.error.as_deref().is_some_and(|e| e.contains("constant")));
    }

    #[test]
    fn log_scaling() {
        assert!((log_scale(std::f64::consts::E.powi(2)) - 2.0).abs() < 1e-6);
        assert!(log_scale(0.0).is_finite());
    }

    #[test]
    fn cartesian_results_and_filters() {
        let d = dataset(60);
        let config = EvalConfig {
            train_size: 30,
            kriging: KrigingConfig {
                mle_budget: 200,
                ..KrigingConfig::default()
            },
            ..EvalConfig::default()
        };
        let r = evaluate_models(&d, &config).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|e| e.train_size + e.test_size == 60));
        assert!(r
            .iter()
            .filter(|e| e.model == ModelKind::Linear)
            .all(|e| e.n_coefficients.is_some()));
        assert_eq!(r, evaluate_models(&d, &config).unwrap());

        let only = EvalConfig {
            subsets: Some(vec!["pheno_4".into()]),
            models: vec![ModelKind::Kriging],
            ..config.clone()
        };
        let r = evaluate_models(&d, &only).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].subset, "pheno_4");

        let missing = EvalConfig {
            subsets: Some(vec!["pheno_8".into()]),
            ..config
        };
        assert!(evaluate_models(&d, &missing).is_err());
    }

    #[test]
    fn pca_per_subset() {
        let d = dataset(50);
        let r = analyze_pca(&d, 0.9, PcaMode::Covariance, None).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].dim, 4);
        assert!(r.iter().all(|p| p.components.is_some()));
    }
}
