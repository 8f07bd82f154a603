//! Growth-model analysis of cumulative view-count series.
//!
//! The crate fits seven closed-form growth curves (linear, negative
//! exponential, logistic and Gompertz, the last three also with an additive
//! immigration term) to normalized cumulative series, picks the best model per
//! series by mean error rate and goodness of fit, and measures how far a model
//! fitted on a prefix keeps predicting the rest of the series within an error
//! bound.
//!
//! Modules, bottom-up:
//!
//! - [`series`]: records, validation, normalization, CSV/JSON I/O
//! - [`models`]: closed forms, gradients, growth-equation right-hand sides
//! - [`regress`]: linear regression and Levenberg-Marquardt
//! - [`classify`]: scoring, model selection, linear-tail detection, reports
//! - [`predict`]: soft/hard prediction windows and scenario tables
//! - [`synth`]: seeded synthetic corpora with ground-truth labels

pub mod classify;
pub mod error;
pub mod models;
pub mod predict;
pub mod regress;
pub mod rng;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use models::{ModelKind, ParamSet};
pub use series::{NormalizedSeries, Observation, SeriesRecord};
