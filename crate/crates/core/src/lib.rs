//! Surrogate models of controller fitness built from genotypic (weight) or
//! phenotypic (probe-response) distances.
//!
//! The pipeline has four stages:
//!
//! * [`sim`]: a deterministic ring maze with a differential-drive robot.
//! * [`controller`]: fixed-topology feed-forward controllers, probe sequences
//!   and phenotype sampling.
//! * [`qd`]: MAP-Elites over end-position niches, producing the datasets.
//! * [`surrogate`] and [`eval`]: Kriging and forward-selected linear models,
//!   Kendall rank scoring and PCA intrinsic-dimensionality analysis.
//!
//! [`experiment`] chains the stages through files; [`io`] and [`config`] hold
//! the on-disk formats and the experiment configuration.

pub mod config;
pub mod controller;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod qd;
pub mod rng;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};
