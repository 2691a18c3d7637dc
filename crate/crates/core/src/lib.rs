//! Hierarchical realized-measure factor models for large conditional
//! covariance matrices.
//!
//! The library builds monthly realized measures from daily returns, fits a
//! two-layer dynamic model (a small factor core plus per-asset equations
//! linked through factor loadings), produces one-step-ahead covariance
//! forecasts
//!
//!   H_hat_t = B_t H_t^c B_t' + Sigma_eps,
//!
//! and evaluates them statistically (matrix losses with model confidence
//! sets) and economically (minimum variance portfolios, turnover, and
//! utility-based switching fees). A simulation module generates synthetic
//! panels from fully specified parameters for oracle and recovery testing,
//! and a pipeline module drives everything from a single configuration
//! file.
//!
//! Estimation is stepwise quasi-maximum likelihood: factor variances, then
//! factor correlations, then realized-measure counterparts, then the
//! per-asset equations, each stage conditioning on the previous ones.
//! Infeasible parameter points yield `-inf` objectives rather than errors;
//! errors are reserved for broken inputs and unrecoverable numerical
//! failures.

pub mod asset_model;
pub mod core_model;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod linalg;
pub mod measures;
pub mod optim;
pub mod panel;
pub mod pipeline;
pub mod report;
pub mod shrinkage;
pub mod simulate;

pub use error::{HeavyError, Result};
pub use eval::{
    euclidean_loss, frobenius_loss, gmvp_weights, gmvp_weights_long_only, model_confidence_set,
    summarize_track, track_portfolio, utility_fee, McsOptions, McsResult, PortfolioSummary,
    PortfolioTrack, WeightPolicy,
};
pub use forecast::{
    fit_model, forecast_one_step, rolling_forecasts, CovarianceForecast, FitOptions, FittedModel,
    RollingOptions, RollingOutput,
};
pub use measures::{build_measures, RealizedMeasures};
pub use panel::{load_panel, IngestOptions, ReturnPanel, YearMonth};
pub use pipeline::{load_config, run, RunConfig, RunSummary, Variant};
pub use simulate::{baseline_spec, simulate, DgpSpec, SimulatedData};
