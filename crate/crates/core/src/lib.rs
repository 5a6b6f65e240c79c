//! Wasserstein random forests.
//!
//! Random forests whose leaves are read as weighted empirical measures, so
//! that a trained forest estimates the whole conditional law `L(Y | X = x)`
//! rather than only its mean. Splits maximize either the classical
//! variance-reduction gain (which equals a quadratic Wasserstein gain between
//! Diracs and cell measures, and extends to multivariate responses) or an
//! inter-class Wasserstein gain between child and parent cell measures.
//!
//! Modules:
//! - [`measure`]: discrete measures, 1D / exact / entropic Wasserstein distances
//! - [`forest`]: splitting criteria, tree construction, forest weights and predictions
//! - [`synth`]: simulation scenarios with ground-truth conditional laws
//! - [`hte`]: per-arm forests for heterogeneous treatment effects
//! - [`eval`]: benchmark harness and baseline forests

pub mod error;
pub mod eval;
pub mod forest;
pub mod hte;
pub mod measure;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use measure::{make_measure, DiscreteMeasure};
