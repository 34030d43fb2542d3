//! Reference forecasting models.
//!
//! Every model emits [`crate::ForecastRecord`]s whose contributions add up to
//! the total ES forecast.

pub mod cr;
pub mod elliptical;
pub mod garch;
pub mod hs;

pub use cr::{cr_forecast, cr_lse_fit, cr_opt_fit, cr_weight_path, window_covariates, CrFit};
pub use elliptical::{
    elliptical_allocation, elliptical_forecast, elliptical_weights, ewma_cov, ewma_cov_path,
    EwmaCovSpec,
};
pub use garch::{
    garch11_forecast, garch11_qmle_fit, garch11_variance_path, gaussian_var_es, Garch11Fit,
    Garch11Params,
};
pub use hs::{empirical_var, hs_forecast};
