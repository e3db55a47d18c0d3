//! Similarity-based surrogate models of controller fitness.

pub mod direct;
mod distance;
mod kriging;
mod linear;

pub use distance::{kernel, manhattan, DistanceKind, DistanceMatrix};
pub use kriging::{
    fit_kriging, fit_kriging_with_distances, row_hash, ConcentratedLikelihood, KrigingConfig,
    KrigingModel, KrigingSummary, MleOptimizer, NuggetMode, Prediction,
};
pub use linear::{aic, fit_linear_aic, least_squares, LinearModel};
