//! Statistical and economic evaluation of probabilistic day-ahead
//! electricity-price forecasts.
//!
//! The crate covers both sides of forecast assessment at desk scale:
//!
//! * **Statistical**: proper scoring rules for ensembles (CRPS, energy,
//!   variogram, Dawid-Sebastiani, a Kendall-tau kernel score), rank-based
//!   scores (multi-class Brier, RPS, top-k and storage-tradability
//!   variants), marginal calibration, the joint VaR/CVaR score and
//!   Diebold-Mariano comparisons.
//! * **Economic**: quantile-based limit-order trading strategies and their
//!   acceptance-probability analytics, plus scenario-based battery
//!   arbitrage optimizers (single-pair enumeration and a full MILP with
//!   CVaR linearization) wired into backtests, economic performance
//!   measures and decision-quality cross-scoring.
//!
//! Synthetic price processes, Gaussian-copula scenario sampling with rank
//! reordering, and simple benchmark forecasters make the studies
//! self-contained; the `arbscore` CLI drives them from config files.

pub mod domain;
pub mod evaluate;
pub mod optimize;
pub mod parallel;
pub mod qbts;
pub mod scoring;
pub mod simulate;
