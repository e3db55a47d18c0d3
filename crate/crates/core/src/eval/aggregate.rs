//! Reduction of per-replication results into medians, quartiles and
//! bootstrap intervals, plus the plot-data tables built from them.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::pheno_dim;
use super::pipeline::{EvalResult, ModelKind, PcaResult};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const SUMMARY_SCHEMA: &str = "1.0";

/// Sort key placing `weights` first and phenotype subsets by dimension.
pub fn subset_order(name: &str) -> (usize, String) {
    match pheno_dim(name) {
        Some(d) => (d, name.to_string()),
        None if name == "weights" => (0, String::new()),
        None => (usize::MAX, name.to_string()),
    }
}

/// Linearly interpolated quantile of ascending `sorted` values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| quantile(&sorted(values), 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        Some(Stats {
            n: s.len(),
            median: quantile(&s, 0.5),
            q1: quantile(&s, 0.25),
            q3: quantile(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ci {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

fn percentile_ci(mut stats: Vec<f64>, level: f64) -> Ci {
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ci {
        lower: quantile(&stats, alpha),
        upper: quantile(&stats, 1.0 - alpha),
        level,
    }
}

/// Percentile bootstrap interval for the median.
pub fn bootstrap_median_ci<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Option<Ci> {
    if values.is_empty() || resamples == 0 {
        return None;
    }
    let n = values.len();
    let mut buf = vec![0.0; n];
    let meds = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            buf.sort_by(f64::total_cmp);
            quantile(&buf, 0.5)
        })
        .collect();
    Some(percentile_ci(meds, level))
}

/// Median of the paired differences `a[i] - b[i]` with its bootstrap interval.
pub fn paired_median_diff_ci<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Option<(f64, Ci)> {
    if a.len() != b.len() {
        return None;
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = median(&diffs)?;
    Some((m, bootstrap_median_ci(&diffs, resamples, level, rng)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AggregateOptions {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            resamples: 1000,
            level: 0.9,
            seed: 0,
        }
    }
}

impl AggregateOptions {
    /// Independent stream per summary key, so intervals do not depend on
    /// which other groups are present.
    fn rng(&self, key: &str) -> rng::StreamRng {
        let h = key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        });
        rng::stream_rng(self.seed, h, Stream::Bootstrap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TauSummary {
    pub subset: String,
    pub model: ModelKind,
    pub n_hidden: usize,
    pub replications: Vec<u64>,
    /// Kendall tau per entry of `replications`.
    pub values: Vec<f64>,
    pub failures: usize,
    pub stats: Option<Stats>,
    pub median_ci: Option<Ci>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CountSummary {
    pub subset: String,
    pub n_hidden: usize,
    pub replications: Vec<u64>,
    pub values: Vec<usize>,
    pub stats: Option<Stats>,
}

/// Kriging minus linear tau, paired by replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comparison {
    pub subset: String,
    pub n_hidden: usize,
    pub pairs: usize,
    pub median_diff: Option<f64>,
    pub ci: Option<Ci>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub schema_version: String,
    pub bootstrap: AggregateOptions,
    pub tau: Vec<TauSummary>,
    pub pca: Vec<CountSummary>,
    pub coefficients: Vec<CountSummary>,
    pub comparisons: Vec<Comparison>,
}

type GroupKey = (usize, (usize, String), ModelKind);

pub fn aggregate(
    results: &[EvalResult],
    pca: &[PcaResult],
    opts: &AggregateOptions,
) -> Result<Summary> {
    if results.is_empty() && pca.is_empty() {
        return Err(Error::input("nothing to aggregate: no results"));
    }
    let mut groups: BTreeMap<GroupKey, Vec<&EvalResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.n_hidden, subset_order(&r.subset), r.model))
            .or_default()
            .push(r);
    }

    let mut tau = Vec::new();
    let mut coefficients = Vec::new();
    for ((n_hidden, _, model), mut rs) in groups {
        rs.sort_by_key(|r| r.replication);
        let subset = rs[0].subset.clone();
        let ok: Vec<&EvalResult> = rs
            .iter()
            .copied()
            .filter(|r| r.kendall_tau.is_some())
            .collect();
        let values: Vec<f64> = ok.iter().filter_map(|r| r.kendall_tau).collect();
        let key = format!("tau/{n_hidden}/{subset}/{model}");
        tau.push(TauSummary {
            stats: Stats::of(&values),
            median_ci: bootstrap_median_ci(
                &values,
                opts.resamples,
                opts.level,
                &mut opts.rng(&key),
            ),
            replications: ok.iter().map(|r| r.replication).collect(),
            failures: rs.len() - ok.len(),
            values,
            subset: subset.clone(),
            model,
            n_hidden,
        });
        if model == ModelKind::Linear {
            let with: Vec<&EvalResult> = rs
                .iter()
                .copied()
                .filter(|r| r.n_coefficients.is_some())
                .collect();
            let values: Vec<usize> = with.iter().filter_map(|r| r.n_coefficients).collect();
            coefficients.push(CountSummary {
                stats: Stats::of(&values.iter().map(|&v| v as f64).collect::<Vec<_>>()),
                replications: with.iter().map(|r| r.replication).collect(),
                values,
                subset,
                n_hidden,
            });
        }
    }

    let mut comparisons = Vec::new();
    let krig: Vec<&TauSummary> = tau
        .iter()
        .filter(|t| t.model == ModelKind::Kriging)
        .collect();
    for k in krig {
        let Some(l) = tau.iter().find(|t| {
            t.model == ModelKind::Linear && t.subset == k.subset && t.n_hidden == k.n_hidden
        }) else {
            continue;
        };
        let (a, b): (Vec<f64>, Vec<f64>) = k
            .replications
            .iter()
            .zip(&k.values)
            .filter_map(|(rep, kv)| {
                l.replications
                    .iter()
                    .position(|r| r == rep)
                    .map(|i| (*kv, l.values[i]))
            })
            .unzip();
        let key = format!("diff/{}/{}", k.n_hidden, k.subset);
        let diff = paired_median_diff_ci(&a, &b, opts.resamples, opts.level, &mut opts.rng(&key));
        comparisons.push(Comparison {
            subset: k.subset.clone(),
            n_hidden: k.n_hidden,
            pairs: a.len(),
            median_diff: diff.map(|d| d.0),
            ci: diff.map(|d| d.1),
        });
    }

    let mut pca_groups: BTreeMap<(usize, (usize, String)), Vec<&PcaResult>> = BTreeMap::new();
    for p in pca {
        pca_groups
            .entry((p.n_hidden, subset_order(&p.subset)))
            .or_default()
            .push(p);
    }
    let pca = pca_groups
        .into_iter()
        .map(|((n_hidden, _), mut ps)| {
            ps.sort_by_key(|p| p.replication);
            let with: Vec<&PcaResult> = ps
                .iter()
                .copied()
                .filter(|p| p.components.is_some())
                .collect();
            let values: Vec<usize> = with.iter().filter_map(|p| p.components).collect();
            CountSummary {
                subset: ps[0].subset.clone(),
                n_hidden,
                replications: with.iter().map(|p| p.replication).collect(),
                stats: Stats::of(&values.iter().map(|&v| v as f64).collect::<Vec<_>>()),
                values,
            }
        })
        .collect();

    Ok(Summary {
        schema_version: SUMMARY_SCHEMA.to_string(),
        bootstrap: *opts,
        tau,
        pca,
        coefficients,
        comparisons,
    })
}

fn dim_of(subset: &str) -> Value {
    pheno_dim(subset).map_or(Value::Null, |d| json!(d))
}

impl Summary {
    pub fn tau_for(&self, subset: &str, model: ModelKind, n_hidden: usize) -> Option<&TauSummary> {
        self.tau
            .iter()
            .find(|t| t.subset == subset && t.model == model && t.n_hidden == n_hidden)
    }

    pub fn pca_for(&self, subset: &str, n_hidden: usize) -> Option<&CountSummary> {
        self.pca
            .iter()
            .find(|t| t.subset == subset && t.n_hidden == n_hidden)
    }

    pub fn coefficients_for(&self, subset: &str, n_hidden: usize) -> Option<&CountSummary> {
        self.coefficients
            .iter()
            .find(|t| t.subset == subset && t.n_hidden == n_hidden)
    }

    /// Kendall tau distributions per subset, one series per hidden-layer
    /// size and model kind.
    pub fn fig6(&self) -> Value {
        let mut series: BTreeMap<(usize, ModelKind), Vec<Value>> = BTreeMap::new();
        for t in &self.tau {
            series
                .entry((t.n_hidden, t.model))
                .or_default()
                .push(json!({
                    "subset": t.subset,
                    "dim": dim_of(&t.subset),
                    "replications": t.replications,
                    "values": t.values,
                    "failures": t.failures,
                    "stats": t.stats,
                    "medianCi": t.median_ci,
                }));
        }
        json!({
            "schemaVersion": SUMMARY_SCHEMA,
            "metric": "kendallTau",
            "series": series.into_iter().map(|((nh, model), points)| json!({
                "nHidden": nh,
                "model": model,
                "points": points,
            })).collect::<Vec<_>>(),
        })
    }

    fn count_figure(metric: &str, rows: &[CountSummary]) -> Value {
        json!({
            "schemaVersion": SUMMARY_SCHEMA,
            "metric": metric,
            "series": rows.iter().map(|c| json!({
                "subset": c.subset,
                "dim": dim_of(&c.subset),
                "nHidden": c.n_hidden,
                "replications": c.replications,
                "values": c.values,
                "stats": c.stats,
            })).collect::<Vec<_>>(),
        })
    }

    /// Principal components explaining 90% of the variance, one series per
    /// subset and hidden-layer size.
    pub fn fig7(&self) -> Value {
        Self::count_figure("pcaComponents", &self.pca)
    }

    /// Linear-model coefficient counts, one series per subset and
    /// hidden-layer size.
    pub fn fig8(&self) -> Value {
        Self::count_figure("linearCoefficients", &self.coefficients)
    }
}
