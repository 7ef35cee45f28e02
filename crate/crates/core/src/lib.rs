//! Continuous emotion annotation fusion, signal summarisation and
//! engagement regression.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`signal`]: annotation traces, EWE fusion and z-standardisation
//! - [`features`]: the 24 summary features of a gold-standard signal
//! - [`stats`]: Pearson correlation, two-tailed significance, correlation matrices
//! - [`engagement`]: per-day indicators, comment sentiment ratios, label fusion
//! - [`selection`]: cross-task thresholding and univariate top-k selection
//! - [`regression`]: linear epsilon-insensitive SVR and the train/dev/test protocol
//! - [`pipeline`]: the end-to-end experiment runner and its report
//! - [`fixture`]: seeded synthetic corpora with a planted linear target

// `!(x > 0.0)` style checks are used on purpose to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engagement;
pub mod error;
pub mod features;
pub mod fixture;
pub mod io;
pub mod pipeline;
pub mod regression;
pub mod report;
pub mod rng;
pub mod selection;
pub mod signal;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
