//! Statistical forecast evaluation: point errors, univariate and
//! multivariate proper scoring rules, rank-based scores, calibration
//! diagnostics, the joint VaR/CVaR score and the Diebold-Mariano test.
//!
//! All per-day scores are lower-is-better.

mod ranks;

use crate::domain::{DomainError, PriceDay, QuantileForecast, ScenarioEnsemble, ScoreSeries};
use nalgebra::DMatrix;
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

pub use ranks::{rank_scores, RankEnsemble, RankScores, TopKScores, DEFAULT_TOP_KS};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("need at least {need} ensemble members, got {got}")]
    TooFewMembers { need: usize, got: usize },
    #[error("hour counts differ: forecast {forecast}, observation {observation}")]
    HourMismatch { forecast: usize, observation: usize },
    #[error("Kendall's tau undefined for constant vector ({0})")]
    ConstantVector(String),
    #[error("ensemble covariance is singular after regularization")]
    SingularCovariance,
    #[error("series length mismatch: {a} vs {b}")]
    SeriesLength { a: usize, b: usize },
    #[error("score series orientations differ")]
    OrientationMismatch,
    #[error("invalid input: {0}")]
    BadInput(String),
}

fn check_alignment(forecast: &ScenarioEnsemble, day: &PriceDay) -> Result<(), ScoringError> {
    if forecast.hours() != day.hours() {
        return Err(ScoringError::HourMismatch {
            forecast: forecast.hours(),
            observation: day.hours(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScores {
    /// Mean absolute error of the per-hour ensemble median.
    pub mae: f64,
    /// Root mean squared error of the per-hour ensemble mean.
    pub rmse: f64,
}

pub fn point_scores(
    forecast: &ScenarioEnsemble,
    day: &PriceDay,
) -> Result<PointScores, ScoringError> {
    check_alignment(forecast, day)?;
    let hours = day.hours() as f64;
    let median = forecast.median_path();
    let mean = forecast.mean_path();
    let mae = median
        .iter()
        .zip(day.prices())
        .map(|(f, y)| (f - y).abs())
        .sum::<f64>()
        / hours;
    let mse = mean
        .iter()
        .zip(day.prices())
        .map(|(f, y)| (f - y) * (f - y))
        .sum::<f64>()
        / hours;
    Ok(PointScores {
        mae,
        rmse: mse.sqrt(),
    })
}

/// CRPS of an ensemble for one observation via the energy estimator
/// `1/M sum |y - x_m| - 1/(2 M^2) sum_mn |x_m - x_n|`.
pub fn crps_sample(samples: &[f64], observed: f64) -> Result<f64, ScoringError> {
    let m = samples.len();
    if m < 2 {
        return Err(ScoringError::TooFewMembers { need: 2, got: m });
    }
    let term1 = samples.iter().map(|x| (observed - x).abs()).sum::<f64>() / m as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // sum over ordered pairs of |x_i - x_j| equals 2 * sum_i (2i - M + 1) x_(i).
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - (m as f64 - 1.0)) * x)
        .sum();
    Ok(term1 - pair_sum / (m * m) as f64)
}

/// Hour-averaged CRPS for a full day.
pub fn crps_day(forecast: &ScenarioEnsemble, day: &PriceDay) -> Result<f64, ScoringError> {
    check_alignment(forecast, day)?;
    let mut total = 0.0;
    for h in 0..day.hours() {
        total += crps_sample(&forecast.hour_column(h), day.prices()[h])?;
    }
    Ok(total / day.hours() as f64)
}

/// Energy score: the multivariate CRPS generalization with Euclidean norms
/// on full daily paths. Coincides with the CRPS on one-hour days.
pub fn energy_score(forecast: &ScenarioEnsemble, day: &PriceDay) -> Result<f64, ScoringError> {
    check_alignment(forecast, day)?;
    let m = forecast.members();
    if m < 2 {
        return Err(ScoringError::TooFewMembers { need: 2, got: m });
    }
    let norm = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let paths = forecast.paths();
    let term1 = paths.iter().map(|p| norm(p, day.prices())).sum::<f64>() / m as f64;
    let mut pair_sum = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            pair_sum += norm(&paths[i], &paths[j]);
        }
    }
    Ok(term1 - pair_sum / (m * m) as f64)
}

/// Variogram score of order `p`, normalized by `H^(1/p)`.
pub fn variogram_score(
    forecast: &ScenarioEnsemble,
    day: &PriceDay,
    p: f64,
) -> Result<f64, ScoringError> {
    check_alignment(forecast, day)?;
    if p <= 0.0 {
        return Err(ScoringError::BadInput(format!("variogram order {p} must be > 0")));
    }
    let hours = day.hours();
    let m = forecast.members() as f64;
    let y = day.prices();
    let mut total = 0.0;
    for i in 0..hours {
        for j in 0..hours {
            if i == j {
                continue;
            }
            let observed = (y[i] - y[j]).abs().powf(p);
            let expected = forecast
                .paths()
                .iter()
                .map(|path| (path[i] - path[j]).abs().powf(p))
                .sum::<f64>()
                / m;
            let diff = observed - expected;
            total += diff * diff;
        }
    }
    Ok(total / (hours as f64).powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DssScore {
    pub value: f64,
    /// Whether the diagonal was regularized (small member counts).
    pub regularized: bool,
}

/// Dawid-Sebastiani score `(y - mu)' S^-1 (y - mu) + log |S|` with the
/// ensemble sample mean and covariance.
///
/// For `M <= H + 1` the sample covariance is rank-deficient; a ridge of
/// `1e-8 * trace / (H + 1)` is added to the diagonal and flagged.
pub fn dawid_sebastiani(
    forecast: &ScenarioEnsemble,
    day: &PriceDay,
) -> Result<DssScore, ScoringError> {
    check_alignment(forecast, day)?;
    let m = forecast.members();
    if m < 2 {
        return Err(ScoringError::TooFewMembers { need: 2, got: m });
    }
    let hours = day.hours();
    let mean = forecast.mean_path();
    let mut cov = DMatrix::zeros(hours, hours);
    for path in forecast.paths() {
        for i in 0..hours {
            let di = path[i] - mean[i];
            for j in i..hours {
                cov[(i, j)] += di * (path[j] - mean[j]);
            }
        }
    }
    cov /= (m - 1) as f64;
    for i in 0..hours {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    let regularized = m <= hours + 1;
    if regularized {
        let ridge = 1e-8 * cov.trace() / hours as f64;
        for i in 0..hours {
            cov[(i, i)] += ridge;
        }
    }
    let chol = cov.cholesky().ok_or(ScoringError::SingularCovariance)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let residual = nalgebra::DVector::from_iterator(
        hours,
        day.prices().iter().zip(&mean).map(|(y, mu)| y - mu),
    );
    let solved = chol.solve(&residual);
    let quad = residual.dot(&solved);
    Ok(DssScore {
        value: quad + log_det,
        regularized,
    })
}

/// Kendall's tau-b (tie-adjusted) between two equally long vectors.
///
/// Undefined (error) when either vector is constant.
pub fn kendall_tau(x: &[f64], y: &[f64], label: &str) -> Result<f64, ScoringError> {
    let n = x.len();
    if n != y.len() {
        return Err(ScoringError::SeriesLength { a: n, b: y.len() });
    }
    if n < 2 {
        return Err(ScoringError::BadInput("tau needs at least two entries".into()));
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut tied_x = 0i64;
    let mut tied_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tied_x += 1;
            }
            if dy == 0.0 {
                tied_y += 1;
            }
            if dx == 0.0 || dy == 0.0 {
                continue;
            }
            if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    if tied_x == n0 || tied_y == n0 {
        return Err(ScoringError::ConstantVector(label.to_string()));
    }
    let denom = (((n0 - tied_x) as f64) * ((n0 - tied_y) as f64)).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

/// Which arrangement of the Kendall-tau kernel score to evaluate. Both are
/// first-class: `AsWritten` follows the published display, `StandardKernel`
/// the usual kernel-score template the propriety argument builds on;
/// neither silently replaces the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KendallMode {
    /// `1/2 E[tau(F, y)] - E[tau(F, F')] - tau(y, y)`.
    AsWritten,
    /// `1/2 E[tau(F, F')] - E[tau(F, y)] + 1/2 tau(y, y)`.
    StandardKernel,
}

/// Association-based score built on Kendall's tau between forecast paths
/// and the realization. Pair expectations average over ordered member
/// pairs `m != n`.
pub fn kendall_score(
    forecast: &ScenarioEnsemble,
    day: &PriceDay,
    mode: KendallMode,
) -> Result<f64, ScoringError> {
    check_alignment(forecast, day)?;
    let m = forecast.members();
    if m < 2 {
        return Err(ScoringError::TooFewMembers { need: 2, got: m });
    }
    let tag = day.date_tag();
    let paths = forecast.paths();
    let tau_obs = kendall_tau(day.prices(), day.prices(), &format!("observation of {tag}"))?;
    let mut tau_fy = 0.0;
    for (i, path) in paths.iter().enumerate() {
        tau_fy += kendall_tau(path, day.prices(), &format!("member {i} of {tag}"))?;
    }
    tau_fy /= m as f64;
    let mut tau_ff = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                tau_ff += kendall_tau(&paths[i], &paths[j], &format!("members {i},{j} of {tag}"))?;
            }
        }
    }
    tau_ff /= (m * (m - 1)) as f64;
    Ok(match mode {
        KendallMode::AsWritten => 0.5 * tau_fy - tau_ff - tau_obs,
        KendallMode::StandardKernel => 0.5 * tau_ff - tau_fy + 0.5 * tau_obs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpdMhd {
    /// Mean profit deviation `|p^_max - p_max| - |p^_min - p_min|`, exactly
    /// as printed (the subtraction can make it negative).
    pub mpd: f64,
    /// Mean hour deviation `|h^_max - h_max| + |h^_min - h_min|`.
    pub mhd: f64,
}

/// Extreme-hour diagnostics of a point path against the realized day.
/// Ties in the extremes resolve to the earliest hour.
pub fn mpd_mhd(point_path: &[f64], day: &PriceDay) -> Result<MpdMhd, ScoringError> {
    if point_path.len() != day.hours() {
        return Err(ScoringError::HourMismatch {
            forecast: point_path.len(),
            observation: day.hours(),
        });
    }
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &x)| {
                if x > acc.1 {
                    (i, x)
                } else {
                    acc
                }
            })
    };
    let argmin = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |acc, (i, &x)| {
                if x < acc.1 {
                    (i, x)
                } else {
                    acc
                }
            })
    };
    let (fh_max, fp_max) = argmax(point_path);
    let (fh_min, fp_min) = argmin(point_path);
    let (yh_max, yp_max) = argmax(day.prices());
    let (yh_min, yp_min) = argmin(day.prices());
    Ok(MpdMhd {
        mpd: (fp_max - yp_max).abs() - (fp_min - yp_min).abs(),
        mhd: (fh_max as f64 - yh_max as f64).abs() + (fh_min as f64 - yh_min as f64).abs(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub levels: Vec<f64>,
    /// `MC_alpha = alpha - freq(y < Q^alpha)`, pooled over days and hours.
    pub mc: Vec<f64>,
    /// The raw observed frequencies (the calibration curve).
    pub observed_freq: Vec<f64>,
}

pub fn marginal_calibration(
    forecasts: &[QuantileForecast],
    days: &[PriceDay],
    levels: &[f64],
) -> Result<CalibrationReport, ScoringError> {
    if forecasts.len() != days.len() {
        return Err(ScoringError::SeriesLength {
            a: forecasts.len(),
            b: days.len(),
        });
    }
    if forecasts.is_empty() || levels.is_empty() {
        return Err(ScoringError::BadInput("empty calibration input".into()));
    }
    let mut below = vec![0usize; levels.len()];
    let mut total = 0usize;
    for (forecast, day) in forecasts.iter().zip(days) {
        if forecast.hours() != day.hours() {
            return Err(ScoringError::HourMismatch {
                forecast: forecast.hours(),
                observation: day.hours(),
            });
        }
        for h in 0..day.hours() {
            let y = day.prices()[h];
            for (li, &level) in levels.iter().enumerate() {
                if y < forecast.quantile(h, level)? {
                    below[li] += 1;
                }
            }
            total += 1;
        }
    }
    let observed_freq: Vec<f64> = below.iter().map(|&b| b as f64 / total as f64).collect();
    let mc = levels
        .iter()
        .zip(&observed_freq)
        .map(|(l, f)| l - f)
        .collect();
    Ok(CalibrationReport {
        levels: levels.to_vec(),
        mc,
        observed_freq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointVarCvarScore {
    /// The standalone pinball term `(1{y <= v} - alpha) (v - y)`.
    pub pinball: f64,
    /// The full joint score for the `(VaR, CVaR)` pair.
    pub joint: f64,
}

/// Strictly proper joint score for a `(VaR, CVaR)` forecast `(v, e)` at
/// tail probability `alpha`, specialized with `G1(v) = v`,
/// `G2(e) = exp(e)/(1+exp(e))` and `curly-G2(e) = log(1+exp(e))`:
///
/// `S = (1{y<=v} - alpha)(v - y) + G2(e)/alpha * 1{y<=v} (v - y)
///    + G2(e)(e - v) - log(1 + exp(e))`
///
/// `alpha` here is the tail probability; a CVaR risk spec at level `a`
/// (lower tail of mass `1 - a`) scores with `alpha = 1 - a`. The CVaR
/// forecast may not exceed the VaR forecast.
pub fn pinball_and_joint_var_cvar(
    v: f64,
    e: f64,
    y: f64,
    alpha: f64,
) -> Result<JointVarCvarScore, ScoringError> {
    if !(v.is_finite() && e.is_finite() && y.is_finite()) {
        return Err(ScoringError::BadInput("non-finite VaR/CVaR/observation".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScoringError::BadInput(format!("tail probability {alpha} outside (0,1)")));
    }
    if e > v + 1e-9 * (1.0 + v.abs()) {
        return Err(ScoringError::BadInput(format!(
            "CVaR forecast {e} exceeds VaR forecast {v}"
        )));
    }
    let hit = if y <= v { 1.0 } else { 0.0 };
    let pinball = (hit - alpha) * (v - y);
    // Stable log(1 + exp(e)) and its derivative.
    let (g2, curly_g2) = if e > 0.0 {
        (1.0 / (1.0 + (-e).exp()), e + (-e).exp().ln_1p())
    } else {
        (e.exp() / (1.0 + e.exp()), e.exp().ln_1p())
    };
    let joint = pinball + g2 / alpha * hit * (v - y) + g2 * (e - v) - curly_g2;
    Ok(JointVarCvarScore { pinball, joint })
}

/// Null-hypothesis direction of the one-sided Diebold-Mariano test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmHypothesis {
    /// H0: series A does not score better than series B; rejection means
    /// A's scores are significantly better.
    ANoBetterThanB,
    /// H0: series B does not score better than series A.
    BNoBetterThanA,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DmOutcome {
    Statistic { statistic: f64, p_value: f64 },
    /// Zero-variance loss differential; no p-value is meaningful.
    Degenerate,
}

/// One-sided Diebold-Mariano test on the loss differential `a_t - b_t`,
/// with plain lag-0 variance by default and an optional Bartlett-weighted
/// HAC correction (`hac_lags > 0`). Normal-approximation p-values; 30 or
/// more observations recommended.
pub fn dm_test(
    a: &ScoreSeries,
    b: &ScoreSeries,
    h0: DmHypothesis,
    hac_lags: usize,
) -> Result<DmOutcome, ScoringError> {
    if a.values.len() != b.values.len() {
        return Err(ScoringError::SeriesLength {
            a: a.values.len(),
            b: b.values.len(),
        });
    }
    if a.lower_is_better != b.lower_is_better {
        return Err(ScoringError::OrientationMismatch);
    }
    let n = a.values.len();
    if n < 2 {
        return Err(ScoringError::BadInput("need at least two observations".into()));
    }
    let sign = if a.lower_is_better { 1.0 } else { -1.0 };
    let d: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| sign * (x - y))
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let gamma = |lag: usize| -> f64 {
        d.iter()
            .skip(lag)
            .zip(d.iter())
            .map(|(x, y)| (x - mean) * (y - mean))
            .sum::<f64>()
            / n as f64
    };
    let mut long_run = gamma(0);
    for lag in 1..=hac_lags.min(n - 1) {
        let w = 1.0 - lag as f64 / (hac_lags as f64 + 1.0);
        long_run += 2.0 * w * gamma(lag);
    }
    let variance_of_mean = long_run / n as f64;
    if variance_of_mean <= 1e-300 {
        return Ok(DmOutcome::Degenerate);
    }
    let statistic = mean / variance_of_mean.sqrt();
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    let p_value = match h0 {
        // Reject when A scores much better, i.e. the differential is very
        // negative.
        DmHypothesis::ANoBetterThanB => normal.cdf(statistic),
        DmHypothesis::BNoBetterThanA => normal.cdf(-statistic),
    };
    Ok(DmOutcome::Statistic { statistic, p_value })
}

/// Summary score table in `model,score,value` layout.
pub fn write_score_summary_csv(
    path: &std::path::Path,
    rows: &[(String, String, f64)],
) -> Result<(), ScoringError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| ScoringError::BadInput(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["model", "score", "value"])
        .map_err(|e| ScoringError::BadInput(e.to_string()))?;
    for (model, score, value) in rows {
        writer
            .write_record([model.as_str(), score.as_str(), &format!("{value:?}")])
            .map_err(|e| ScoringError::BadInput(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| ScoringError::BadInput(e.to_string()))?;
    Ok(())
}

/// Per-day score table in `date,model,score,value` layout, the input
/// format for downstream DM testing.
pub fn write_daily_scores_csv(
    path: &std::path::Path,
    rows: &[(String, String, String, f64)],
) -> Result<(), ScoringError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| ScoringError::BadInput(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["date", "model", "score", "value"])
        .map_err(|e| ScoringError::BadInput(e.to_string()))?;
    for (date, model, score, value) in rows {
        writer
            .write_record([
                date.as_str(),
                model.as_str(),
                score.as_str(),
                &format!("{value:?}"),
            ])
            .map_err(|e| ScoringError::BadInput(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| ScoringError::BadInput(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ScoreSeries;

    fn ensemble(paths: Vec<Vec<f64>>) -> ScenarioEnsemble {
        ScenarioEnsemble::new("2021-01-01", paths).unwrap()
    }

    fn day(prices: Vec<f64>) -> PriceDay {
        PriceDay::new("2021-01-01", prices).unwrap()
    }

    #[test]
    fn point_scores_examples() {
        // Degenerate ensemble equal to realization.
        let ens = ensemble(vec![vec![10.0, 20.0]; 3]);
        let d = day(vec![10.0, 20.0]);
        let ps = point_scores(&ens, &d).unwrap();
        assert_eq!((ps.mae, ps.rmse), (0.0, 0.0));

        // Constant +2 bias.
        let ens = ensemble(vec![vec![12.0, 22.0]; 3]);
        let ps = point_scores(&ens, &d).unwrap();
        assert!((ps.mae - 2.0).abs() < 1e-12);
        assert!((ps.rmse - 2.0).abs() < 1e-12);

        // Members {0, 4} each hour, y = 1: median = mean = 2.
        let ens = ensemble(vec![vec![0.0, 0.0], vec![4.0, 4.0]]);
        let ps = point_scores(&ens, &day(vec![1.0, 1.0])).unwrap();
        assert!((ps.mae - 1.0).abs() < 1e-12);
        assert!((ps.rmse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crps_examples() {
        assert_eq!(crps_sample(&[0.5, 0.5], 0.5).unwrap(), 0.0);
        let v = crps_sample(&[0.0, 1.0], 0.5).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!(crps_sample(&[1.0], 0.5).is_err());
    }

    #[test]
    fn energy_score_reduces_to_crps_in_one_dimension() {
        let ens = ensemble(vec![vec![1.0], vec![4.0], vec![6.5], vec![-2.0]]);
        let d = day(vec![2.0]);
        let es = energy_score(&ens, &d).unwrap();
        let crps = crps_day(&ens, &d).unwrap();
        assert!((es - crps).abs() < 1e-12);
    }

    #[test]
    fn variogram_examples() {
        // Ensemble of copies of y scores zero.
        let d = day(vec![1.0, 5.0, 3.0]);
        let ens = ensemble(vec![d.prices().to_vec(); 4]);
        assert_eq!(variogram_score(&ens, &d, 1.0).unwrap(), 0.0);

        // Invariance under a common constant shift.
        let ens = ensemble(vec![vec![1.0, 2.0, 4.0], vec![0.0, 3.0, 5.0]]);
        let base = variogram_score(&ens, &d, 0.5).unwrap();
        let shifted_ens = ensemble(vec![vec![8.0, 9.0, 11.0], vec![7.0, 10.0, 12.0]]);
        let shifted_day = day(vec![8.0, 12.0, 10.0]);
        let shifted = variogram_score(&shifted_ens, &shifted_day, 0.5).unwrap();
        assert!((base - shifted).abs() < 1e-9);

        // Hand-computed two-hour case: the expected variogram matches the
        // observed one exactly, so the score is 0.
        let ens = ensemble(vec![vec![0.0, 0.0], vec![0.0, 2.0]]);
        let d2 = day(vec![0.0, 1.0]);
        assert!(variogram_score(&ens, &d2, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dss_examples() {
        // Members engineered so the sample covariance is diag(4, 1):
        // pairs mu +/- (2a, 0) and mu +/- (0, b) with a = b = sqrt(3/2).
        let a = (1.5f64).sqrt();
        let mu = [10.0, 20.0];
        let ens = ensemble(vec![
            vec![mu[0] + 2.0 * a, mu[1]],
            vec![mu[0] - 2.0 * a, mu[1]],
            vec![mu[0], mu[1] + a],
            vec![mu[0], mu[1] - a],
        ]);
        // Residual (2, 1): quad = 4/4 + 1/1 = 2, logdet = log 4.
        let d = day(vec![mu[0] + 2.0, mu[1] + 1.0]);
        let score = dawid_sebastiani(&ens, &d).unwrap();
        assert!(!score.regularized, "M = 4 > H + 1 = 3 needs no ridge");
        let expected = 2.0 + 4.0f64.ln();
        assert!((score.value - expected).abs() < 1e-6, "{}", score.value);

        // Residual zero with the same covariance: only the log-det term.
        let d0 = day(vec![mu[0], mu[1]]);
        let s0 = dawid_sebastiani(&ens, &d0).unwrap();
        assert!((s0.value - 4.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn kendall_tau_and_score() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&y, &y, "t").unwrap(), 1.0);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&y, &rev, "t").unwrap(), -1.0);
        assert!(kendall_tau(&[1.0, 1.0], &y[..2], "t").is_err());

        // All members share y's ordering: as-written mode gives
        // 1/2 - 1 - 1 = -1.5.
        let ens = ensemble(vec![vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0]]);
        let d = day(vec![5.0, 6.0, 7.0]);
        let ks = kendall_score(&ens, &d, KendallMode::AsWritten).unwrap();
        assert!((ks + 1.5).abs() < 1e-12);

        // Degenerate ensemble at y: standard mode sits at its minimum 0.
        let ens = ensemble(vec![vec![5.0, 6.0, 7.0]; 3]);
        let ks = kendall_score(&ens, &d, KendallMode::StandardKernel).unwrap();
        assert!(ks.abs() < 1e-12);
    }

    #[test]
    fn mpd_mhd_examples() {
        let d = day(vec![10.0, 50.0, 30.0]);
        // Perfect point forecast.
        let m = mpd_mhd(&[10.0, 50.0, 30.0], &d).unwrap();
        assert_eq!((m.mpd, m.mhd), (0.0, 0.0));
        // Max level off by +3, extreme hours right.
        let m = mpd_mhd(&[10.0, 53.0, 30.0], &d).unwrap();
        assert_eq!((m.mpd, m.mhd), (3.0, 0.0));
        // Max hour off by 2, min hour off by 1, levels exact.
        let m = mpd_mhd(&[50.0, 30.0, 10.0], &d).unwrap();
        assert_eq!(m.mhd, 3.0);
    }

    #[test]
    fn marginal_calibration_extreme_quantile() {
        // Q^alpha effectively +inf: observed frequency 1, MC = alpha - 1.
        let qf = QuantileForecast::new(vec![0.5], vec![vec![1e12]; 2]).unwrap();
        let d = day(vec![10.0, 20.0]);
        let report = marginal_calibration(&[qf], &[d], &[0.5]).unwrap();
        assert!((report.observed_freq[0] - 1.0).abs() < 1e-12);
        assert!((report.mc[0] - (0.5 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn joint_var_cvar_examples() {
        // y = v = e: pinball 0, joint = -log(1 + exp(e)).
        let s = pinball_and_joint_var_cvar(-1.0, -1.0, -1.0, 0.1).unwrap();
        assert_eq!(s.pinball, 0.0);
        assert!((s.joint - (-(1.0 + (-1.0f64).exp()).ln())).abs() < 1e-12);

        // y far above v: indicator 0, pinball = -alpha (v - y) > 0.
        let s = pinball_and_joint_var_cvar(1.0, 0.0, 100.0, 0.25).unwrap();
        assert!((s.pinball - (-0.25) * (1.0 - 100.0)).abs() < 1e-12);
        assert!(s.pinball > 0.0);

        // CVaR above VaR is rejected.
        assert!(pinball_and_joint_var_cvar(0.0, 1.0, 0.0, 0.25).is_err());
    }

    #[test]
    fn joint_var_cvar_dual_implementation() {
        // Independent re-implementation of the formula, term by term.
        let (v, e, y, alpha) = (-1.0, -2.0, -3.0, 0.9);
        let s = pinball_and_joint_var_cvar(v, e, y, alpha).unwrap();
        let hit = if y <= v { 1.0 } else { 0.0 };
        let g1 = |x: f64| x;
        let g2 = (e as f64).exp() / (1.0 + (e as f64).exp());
        let curly = (1.0 + (e as f64).exp()).ln();
        let expected = (hit - alpha) * (g1(v) - g1(y)) + g2 / alpha * hit * (v - y)
            + g2 * (e - v)
            - curly;
        assert!((s.joint - expected).abs() < 1e-12);
    }

    fn series(values: Vec<f64>) -> ScoreSeries {
        ScoreSeries::new("m", "s", values, true).unwrap()
    }

    #[test]
    fn dm_identical_series_is_degenerate() {
        let a = series(vec![1.0, 2.0, 3.0]);
        let outcome = dm_test(&a, &a.clone(), DmHypothesis::ANoBetterThanB, 0).unwrap();
        assert_eq!(outcome, DmOutcome::Degenerate);
    }

    #[test]
    fn dm_detects_unit_gap() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let a_vals: Vec<f64> = (0..100)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.1)
            .collect();
        let b_vals: Vec<f64> = a_vals.iter().map(|v| v + 1.0).collect();
        let a = series(a_vals);
        let b = series(b_vals);
        match dm_test(&a, &b, DmHypothesis::ANoBetterThanB, 0).unwrap() {
            DmOutcome::Statistic { p_value, .. } => assert!(p_value < 1e-6, "p {p_value}"),
            DmOutcome::Degenerate => panic!(),
        }
    }

    #[test]
    fn dm_statistic_is_antisymmetric() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let a = series((0..50).map(|_| rng.random_range(0.0..1.0)).collect());
        let b = series((0..50).map(|_| rng.random_range(0.0..1.0)).collect());
        let s_ab = match dm_test(&a, &b, DmHypothesis::ANoBetterThanB, 0).unwrap() {
            DmOutcome::Statistic { statistic, .. } => statistic,
            _ => panic!(),
        };
        let s_ba = match dm_test(&b, &a, DmHypothesis::ANoBetterThanB, 0).unwrap() {
            DmOutcome::Statistic { statistic, .. } => statistic,
            _ => panic!(),
        };
        assert!((s_ab + s_ba).abs() < 1e-12);
    }
}
