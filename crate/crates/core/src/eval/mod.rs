//! Experiment evaluation: datasets, rank correlation, PCA and aggregation.

mod aggregate;
mod dataset;
mod kendall;
mod pca;
mod pipeline;

pub use aggregate::{
    aggregate, bootstrap_median_ci, median, paired_median_diff_ci, quantile, subset_order,
    AggregateOptions, Ci, Comparison, CountSummary, Stats, Summary, TauSummary, SUMMARY_SCHEMA,
};
pub use dataset::{pheno_dim, Dataset, DatasetMeta, FeatureMatrix, ProbeInfo, DATASET_SCHEMA};
pub use kendall::{kendall_tau, pair_counts, PairCounts};
pub use pca::{components_for, pca_components, pca_components90, pca_spectrum, PcaMode};
pub use pipeline::{
    analyze_pca, evaluate_models, log_scale, split_and_scale, EvalConfig, EvalResult, ModelKind,
    PcaResult, Split, LOG_EPSILON,
};
