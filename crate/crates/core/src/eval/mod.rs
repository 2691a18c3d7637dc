//! Forecast evaluation: statistical loss functions, minimum-variance
//! portfolio construction, portfolio tracking with utility-based fees, and
//! the model confidence set.

pub mod gmvp;
pub mod losses;
pub mod mcs;
pub mod portfolio;

pub use gmvp::{gmvp_weights, gmvp_weights_long_only};
pub use losses::{euclidean_loss, frobenius_loss};
pub use mcs::{model_confidence_set, McsOptions, McsResult};
pub use portfolio::{
    summarize_track, track_portfolio, utility_fee, PortfolioSummary, PortfolioTrack, WeightPolicy,
};
