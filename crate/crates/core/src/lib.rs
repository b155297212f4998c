//! Bilateral relation indices from coded political events, and panel
//! impulse-response estimation of their effect on growth.
//!
//! The pipeline runs:
//!
//! - [`events`]: parse and validate event records; filter them.
//! - [`relations`]: dynamic pair scores and GDP-weighted country indices.
//! - [`panel`]: country-year frames, lags, fixed-effect demeaning.
//! - [`lp`]: local projections with Driscoll-Kraay covariance.
//! - [`iv`]: instrumental-variables local projections.
//! - [`dynamics`]: ARDL fits, their responses, and the transitory/permanent
//!   decomposition.
//! - [`infer`]: country-block and wild bootstraps.
//! - [`account`]: decade effects and median-path counterfactuals.
//! - [`sim`]: synthetic panels and event streams with known truth.
//!
//! With the default `parallel` feature, horizons, bootstrap replicates and
//! simulated countries run on the rayon pool; results are identical either way.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod account;
pub mod dynamics;
pub mod error;
pub mod events;
pub mod exec;
pub mod infer;
pub mod iv;
pub mod linalg;
pub mod lp;
pub mod panel;
pub mod relations;
pub mod rng;
pub mod sim;

pub use error::{Error, ErrorKind, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
