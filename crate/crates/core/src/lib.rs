//! Forecasting and backtesting of Expected Shortfall contributions.
//!
//! The crate covers the whole pipeline: loss panels and forecast records,
//! strictly consistent scores and identification functions, Murphy
//! diagrams, compositional weight dynamics, reference forecasting models,
//! comparative and calibration tests, and a rolling-window harness that
//! ties them together.

pub mod composition;
pub mod error;
pub mod harness;
pub mod identification;
pub mod models;
pub mod murphy;
pub mod numeric;
pub mod optim;
pub mod panel;
pub mod scoring;
pub mod stattests;

pub use error::{EscError, Result};
pub use panel::{ForecastRecord, LossPanel, ScorePair, SimplexWeights};
