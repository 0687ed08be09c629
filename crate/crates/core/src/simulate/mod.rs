//! Synthetic price-process generation, Gaussian-copula scenario sampling
//! with rank reordering, benchmark forecasters and CSV ingestion.
//!
//! All samplers take explicit seeds and are bit-reproducible: the same
//! seed yields the same ensemble regardless of execution mode.

mod csv_io;

use crate::domain::{DomainError, GaussianPriceSpec, PriceDay, ScenarioEnsemble};
use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

pub use csv_io::{load_ensemble_csv, load_price_csv, write_ensemble_csv};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eig})")]
    NotPsd { min_eig: f64 },
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("PIT residuals for hour {hour} are constant; correlation undefined")]
    ConstantColumn { hour: usize },
    #[error("PIT residual outside (0, 1) at row {row}, hour {hour}")]
    PitOutOfRange { row: usize, hour: usize },
    #[error("weekday tags required: {0}")]
    WeekdayTags(String),
    #[error("history is empty")]
    EmptyHistory,
    #[error("history days disagree on hour count")]
    RaggedHistory,
    #[error("no price day found for {date} (lag-7 base of the naive bootstrap)")]
    MissingLag7 { date: NaiveDate },
    #[error("no same-weekday residual days available before {date}")]
    EmptyResidualPool { date: NaiveDate },
    #[error("date tag {tag:?} is not an ISO date (YYYY-MM-DD)")]
    BadDateTag { tag: String },
    #[error("csv: {0}")]
    Csv(String),
}

/// Dependence model on the Gaussian-copula scale.
#[derive(Debug, Clone, PartialEq)]
pub enum CopulaModel {
    /// Product copula; sampling is independent across hours.
    Independent { hours: usize },
    /// One correlation matrix for all days.
    Empirical { correlation: Vec<Vec<f64>> },
    /// Separate correlation matrices per weekday, indexed Monday = 0.
    Weekday { correlations: Box<[Vec<Vec<f64>>; 7]> },
}

impl CopulaModel {
    pub fn hours(&self) -> usize {
        match self {
            CopulaModel::Independent { hours } => *hours,
            CopulaModel::Empirical { correlation } => correlation.len(),
            CopulaModel::Weekday { correlations } => correlations[0].len(),
        }
    }

    fn correlation_for(&self, weekday: Option<Weekday>) -> Result<Option<&[Vec<f64>]>, SimulateError> {
        match self {
            CopulaModel::Independent { .. } => Ok(None),
            CopulaModel::Empirical { correlation } => Ok(Some(correlation)),
            CopulaModel::Weekday { correlations } => {
                let wd = weekday.ok_or_else(|| {
                    SimulateError::WeekdayTags("sampling from a weekday copula".into())
                })?;
                Ok(Some(&correlations[wd.num_days_from_monday() as usize]))
            }
        }
    }
}

/// Which dependence structure to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopulaKind {
    Independent,
    Empirical,
    Weekday,
}

/// Parametric family for an hour's marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParametricDist {
    Normal,
    /// Location-scale Student's t; `shape` is the degrees of freedom.
    StudentT { dof: f64 },
}

/// Inverse-CDF representation of one hour's predictive marginal.
#[derive(Debug, Clone, PartialEq)]
pub enum HourMarginal {
    /// Empirical pool; quantiles interpolate the sorted sample on the
    /// midpoint grid `(i - 0.5) / n` and clamp outside it.
    Empirical { pool: Vec<f64> },
    Parametric {
        dist: ParametricDist,
        location: f64,
        scale: f64,
    },
}

impl HourMarginal {
    pub fn empirical(mut pool: Vec<f64>) -> Result<Self, SimulateError> {
        if pool.is_empty() {
            return Err(SimulateError::TooFewRows { need: 1, got: 0 });
        }
        if pool.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite("marginal pool").into());
        }
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(HourMarginal::Empirical { pool })
    }

    /// Inverse CDF; non-decreasing on (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        debug_assert!(p > 0.0 && p < 1.0);
        match self {
            HourMarginal::Empirical { pool } => {
                let n = pool.len();
                let pos = p * n as f64 - 0.5;
                if pos <= 0.0 {
                    pool[0]
                } else if pos >= (n - 1) as f64 {
                    pool[n - 1]
                } else {
                    let i = pos.floor() as usize;
                    let w = pos - i as f64;
                    pool[i] + w * (pool[i + 1] - pool[i])
                }
            }
            HourMarginal::Parametric {
                dist,
                location,
                scale,
            } => match dist {
                ParametricDist::Normal => location + scale * std_normal().inverse_cdf(p),
                ParametricDist::StudentT { dof } => {
                    let t = StudentsT::new(0.0, 1.0, *dof).expect("valid dof");
                    location + scale * t.inverse_cdf(p)
                }
            },
        }
    }
}

/// Per-hour marginals of a multivariate predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalModel {
    hours: Vec<HourMarginal>,
}

impl MarginalModel {
    pub fn new(hours: Vec<HourMarginal>) -> Result<Self, SimulateError> {
        if hours.is_empty() {
            return Err(SimulateError::TooFewRows { need: 1, got: 0 });
        }
        Ok(Self { hours })
    }

    pub fn hours(&self) -> usize {
        self.hours.len()
    }

    pub fn quantile(&self, hour: usize, p: f64) -> f64 {
        self.hours[hour].quantile(p)
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Factor `L` with `L L' = cov`, via Cholesky with a symmetric-eigen
/// fallback for semidefinite inputs. Eigenvalues more negative than a
/// relative tolerance are rejected.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, SimulateError> {
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 * max_eig.max(1.0) {
        return Err(SimulateError::NotPsd { min_eig });
    }
    let sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let mut factor = eig.eigenvectors;
    for (j, s) in sqrt.iter().enumerate() {
        factor.column_mut(j).scale_mut(*s);
    }
    Ok(factor)
}

/// Draw `count` paths from `N(mu, D sigma D)` with `D = diag(dispersion_b)`.
pub fn sample_gaussian_prices(
    spec: &GaussianPriceSpec,
    count: usize,
    seed: u64,
) -> Result<ScenarioEnsemble, SimulateError> {
    if count == 0 {
        return Err(SimulateError::TooFewRows { need: 1, got: 0 });
    }
    let n = spec.dim();
    let cov = DMatrix::from_fn(n, n, {
        let scaled = spec.scaled_covariance();
        move |i, j| scaled[i][j]
    });
    let factor = psd_factor(&cov)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut paths = Vec::with_capacity(count);
    let mut z = DVector::zeros(n);
    for _ in 0..count {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let correlated = &factor * &z;
        paths.push(
            (0..n)
                .map(|h| spec.mu()[h] + correlated[h])
                .collect::<Vec<f64>>(),
        );
    }
    Ok(ScenarioEnsemble::new("synthetic", paths)?)
}

/// Estimate a Gaussian copula from PIT residuals (rows = observations,
/// columns = hours, entries strictly inside (0, 1)).
///
/// Ties are resolved by average ranks, then ranks are strictly
/// uniformized to `(rank - 0.5) / n` before the probit transform;
/// indefinite estimates are repaired by clipping eigenvalues at `1e-8` and
/// rescaling to unit diagonal.
pub fn fit_copula(
    pit_residuals: &[Vec<f64>],
    kind: CopulaKind,
    weekday_tags: Option<&[Weekday]>,
) -> Result<CopulaModel, SimulateError> {
    let rows = pit_residuals.len();
    if rows < 2 {
        return Err(SimulateError::TooFewRows { need: 2, got: rows });
    }
    let hours = pit_residuals[0].len();
    if hours == 0 || pit_residuals.iter().any(|r| r.len() != hours) {
        return Err(DomainError::Invalid {
            what: "pit_residuals",
            reason: "empty or ragged rows".into(),
        }
        .into());
    }
    for (r, row) in pit_residuals.iter().enumerate() {
        for (h, &u) in row.iter().enumerate() {
            if !(u > 0.0 && u < 1.0) {
                return Err(SimulateError::PitOutOfRange { row: r, hour: h });
            }
        }
    }

    match kind {
        CopulaKind::Independent => Ok(CopulaModel::Independent { hours }),
        CopulaKind::Empirical => Ok(CopulaModel::Empirical {
            correlation: gaussian_rank_correlation(pit_residuals, hours)?,
        }),
        CopulaKind::Weekday => {
            let tags = weekday_tags
                .ok_or_else(|| SimulateError::WeekdayTags("estimating a weekday copula".into()))?;
            if tags.len() != rows {
                return Err(SimulateError::WeekdayTags(format!(
                    "{} tags for {} rows",
                    tags.len(),
                    rows
                )));
            }
            let mut per_day: [Vec<Vec<f64>>; 7] = Default::default();
            for (row, wd) in pit_residuals.iter().zip(tags) {
                per_day[wd.num_days_from_monday() as usize].push(row.clone());
            }
            let mut correlations: Vec<Vec<Vec<f64>>> = Vec::with_capacity(7);
            for subset in per_day.iter() {
                if subset.len() < 2 {
                    return Err(SimulateError::TooFewRows {
                        need: 2,
                        got: subset.len(),
                    });
                }
                correlations.push(gaussian_rank_correlation(subset, hours)?);
            }
            let boxed: Box<[Vec<Vec<f64>>; 7]> =
                correlations.try_into().map_err(|_| SimulateError::WeekdayTags(
                    "internal weekday split".into(),
                ))?;
            Ok(CopulaModel::Weekday { correlations: boxed })
        }
    }
}

fn gaussian_rank_correlation(
    rows: &[Vec<f64>],
    hours: usize,
) -> Result<Vec<Vec<f64>>, SimulateError> {
    let n = rows.len();
    let normal = std_normal();
    // Columns of probit-transformed, rank-uniformized residuals.
    let mut g = vec![vec![0.0; n]; hours];
    for h in 0..hours {
        let col: Vec<f64> = rows.iter().map(|r| r[h]).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Err(SimulateError::ConstantColumn { hour: h });
        }
        let ranks = average_ranks(&col);
        for (i, r) in ranks.iter().enumerate() {
            g[h][i] = normal.inverse_cdf((r - 0.5) / n as f64);
        }
    }

    let mut corr = vec![vec![0.0; hours]; hours];
    let means: Vec<f64> = g.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let sds: Vec<f64> = g
        .iter()
        .zip(&means)
        .map(|(c, m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt())
        .collect();
    for i in 0..hours {
        corr[i][i] = 1.0;
        for j in (i + 1)..hours {
            let cov = g[i]
                .iter()
                .zip(&g[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / n as f64;
            let r = cov / (sds[i] * sds[j]);
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    Ok(repair_correlation(corr))
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Repair indefinite correlation estimates by clipping eigenvalues at
/// `1e-8` and rescaling to a unit diagonal. Positive-semidefinite inputs
/// (singular ones included) pass through untouched.
fn repair_correlation(corr: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = corr.len();
    let m = DMatrix::from_fn(n, n, |i, j| corr[i][j]);
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return corr;
    }
    let clipped = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.max(1e-8)));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let scale: Vec<f64> = (0..n).map(|i| rebuilt[(i, i)].sqrt()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        rebuilt[(i, j)] / (scale[i] * scale[j])
                    }
                })
                .collect()
        })
        .collect()
}

/// Sample `count` paths whose per-hour marginals are exactly the marginal
/// quantile grid `(i - 0.5) / count`, reordered to the rank structure of a
/// Gaussian-copula draw.
///
/// Because the per-hour value multiset is fixed by the grid, the sorted
/// columns are identical across any two copulas given the same marginals
/// and `count`.
pub fn sample_with_reordering(
    marginals: &MarginalModel,
    copula: &CopulaModel,
    count: usize,
    seed: u64,
    weekday: Option<Weekday>,
) -> Result<ScenarioEnsemble, SimulateError> {
    if count < 2 {
        return Err(SimulateError::TooFewRows { need: 2, got: count });
    }
    let hours = marginals.hours();
    if copula.hours() != hours {
        return Err(DomainError::DimensionMismatch {
            what: "copula vs marginals",
            expected: hours,
            got: copula.hours(),
        }
        .into());
    }

    // Gaussian draw with the requested dependence.
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut g = vec![vec![0.0; hours]; count];
    match copula.correlation_for(weekday)? {
        None => {
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
        }
        Some(corr) => {
            let m = DMatrix::from_fn(hours, hours, |i, j| corr[i][j]);
            let factor = psd_factor(&m)?;
            let mut z = DVector::zeros(hours);
            for row in g.iter_mut() {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let corr_z = &factor * &z;
                for (h, v) in row.iter_mut().enumerate() {
                    *v = corr_z[h];
                }
            }
        }
    }

    // Per hour: replace the Gaussian sample by the marginal quantile grid,
    // reordered to the sample's ranks.
    let grid_levels: Vec<f64> = (0..count).map(|i| (i as f64 + 0.5) / count as f64).collect();
    let mut paths = vec![vec![0.0; hours]; count];
    let mut order: Vec<usize> = Vec::with_capacity(count);
    for h in 0..hours {
        order.clear();
        order.extend(0..count);
        order.sort_by(|&a, &b| g[a][h].partial_cmp(&g[b][h]).unwrap().then(a.cmp(&b)));
        for (grid_pos, &member) in order.iter().enumerate() {
            paths[member][h] = marginals.quantile(h, grid_levels[grid_pos]);
        }
    }
    Ok(ScenarioEnsemble::new("synthetic", paths)?)
}

/// Climatology benchmark: whole historical days resampled uniformly with
/// replacement, preserving intra-day dependence.
pub fn climatology_forecast(
    history: &[PriceDay],
    count: usize,
    seed: u64,
) -> Result<ScenarioEnsemble, SimulateError> {
    if history.is_empty() {
        return Err(SimulateError::EmptyHistory);
    }
    if count == 0 {
        return Err(SimulateError::TooFewRows { need: 1, got: 0 });
    }
    let hours = history[0].hours();
    if history.iter().any(|d| d.hours() != hours) {
        return Err(SimulateError::RaggedHistory);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let paths = (0..count)
        .map(|_| history[rng.random_range(0..history.len())].prices().to_vec())
        .collect();
    Ok(ScenarioEnsemble::new("climatology", paths)?)
}

/// Naive seasonal bootstrap: last week's same-weekday path plus full-day
/// residual trajectories resampled from same-weekday residuals.
///
/// History date tags must be ISO dates; the lag-7 base day must be present
/// and at least one same-weekday residual day (a day whose own lag-7 is
/// also in history) is required.
pub fn naive_bootstrap_forecast(
    history: &[PriceDay],
    target_date: NaiveDate,
    count: usize,
    seed: u64,
) -> Result<ScenarioEnsemble, SimulateError> {
    if history.is_empty() {
        return Err(SimulateError::EmptyHistory);
    }
    if count == 0 {
        return Err(SimulateError::TooFewRows { need: 1, got: 0 });
    }
    let hours = history[0].hours();
    if history.iter().any(|d| d.hours() != hours) {
        return Err(SimulateError::RaggedHistory);
    }
    let mut by_date = std::collections::BTreeMap::new();
    for day in history {
        let date = NaiveDate::parse_from_str(day.date_tag(), "%Y-%m-%d").map_err(|_| {
            SimulateError::BadDateTag {
                tag: day.date_tag().to_string(),
            }
        })?;
        by_date.insert(date, day);
    }

    let base_date = target_date - Duration::days(7);
    let base = by_date
        .get(&base_date)
        .ok_or(SimulateError::MissingLag7 { date: base_date })?;

    // Full-day residual trajectories of same-weekday days.
    let mut residuals: Vec<Vec<f64>> = Vec::new();
    for (&date, day) in &by_date {
        if date.weekday() != target_date.weekday() {
            continue;
        }
        if let Some(prev) = by_date.get(&(date - Duration::days(7))) {
            residuals.push(
                day.prices()
                    .iter()
                    .zip(prev.prices())
                    .map(|(a, b)| a - b)
                    .collect(),
            );
        }
    }
    if residuals.is_empty() {
        return Err(SimulateError::EmptyResidualPool { date: target_date });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let paths = (0..count)
        .map(|_| {
            let res = &residuals[rng.random_range(0..residuals.len())];
            base.prices().iter().zip(res).map(|(p, r)| p + r).collect()
        })
        .collect();
    Ok(ScenarioEnsemble::new(target_date.to_string(), paths)?)
}
