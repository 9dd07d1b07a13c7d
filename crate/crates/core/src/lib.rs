//! Training implicit generative models with the invariant statistical loss.
//!
//! The loss compares the histogram of rank statistics, the number of
//! generator samples falling below each observation, against the discrete
//! uniform law that the ranks follow when model and data agree. A sigmoid
//! soft count and RBF binning make the histogram differentiable.
//!
//! Modules:
//! - [`distributions`]: analytic targets, latent noise, optimal transforms.
//! - [`nn`]: reverse-mode tape, MLP and Elman RNN layers, Adam.
//! - [`stats`]: exact rank statistics, χ² uniformity test, quadrature oracles.
//! - [`loss`]: soft counts, soft histograms, the loss itself.
//! - [`trainer`]: mini-batch training with a progressive-K schedule.
//! - [`timeseries`]: RNN-conditioned generator, windowed training, forecasting.
//! - [`metrics`]: KSD, transform MAE/MSE, ND/RMSE/quantile loss.

pub mod distributions;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod timeseries;
pub mod trainer;

pub use distributions::{optimal_transform, NoiseKind, NoiseSource, TargetDistribution};
pub use error::{IslError, Result};
pub use loss::{isl_loss, soft_count, soft_histogram, theoretical_isl, IslConfig, SoftHistogram};
pub use stats::{
    chi_square_uniformity, moment_uniformity_check, q_k_oracle, rank_statistic, verify_tv_bound,
    ChiSquareReport, RankHistogram,
};
