//! Domain types shared by every other module: price days, scenario
//! ensembles, quantile forecasts, battery parameters, bid schedules and
//! risk-measure specifications.
//!
//! All types are immutable values after construction and every operation
//! here is pure, so they can be used freely from parallel workers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute feasibility tolerance (MWh) used by all schedule constraint
/// checks, sized to absorb LP round-off.
pub const FEASIBILITY_TOL_MWH: f64 = 1e-9;

/// Default number of delivery periods per day (hourly products).
pub const DEFAULT_HOURS: usize = 24;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

/// One delivery day's realized hourly prices in EUR/MWh.
///
/// Negative prices are legal everywhere in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceDay {
    date_tag: String,
    prices: Vec<f64>,
}

impl PriceDay {
    pub fn new(date_tag: impl Into<String>, prices: Vec<f64>) -> Result<Self, DomainError> {
        if prices.is_empty() {
            return Err(DomainError::Invalid {
                what: "PriceDay",
                reason: "no hours".into(),
            });
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(DomainError::NonFinite("PriceDay prices"));
        }
        Ok(Self {
            date_tag: date_tag.into(),
            prices,
        })
    }

    pub fn date_tag(&self) -> &str {
        &self.date_tag
    }

    pub fn hours(&self) -> usize {
        self.prices.len()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }
}

/// An ensemble of `M` sampled hourly price paths representing a
/// multivariate predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEnsemble {
    date_tag: String,
    paths: Vec<Vec<f64>>,
}

impl ScenarioEnsemble {
    pub fn new(date_tag: impl Into<String>, paths: Vec<Vec<f64>>) -> Result<Self, DomainError> {
        if paths.is_empty() {
            return Err(DomainError::Invalid {
                what: "ScenarioEnsemble",
                reason: "needs at least one member".into(),
            });
        }
        let hours = paths[0].len();
        if hours == 0 {
            return Err(DomainError::Invalid {
                what: "ScenarioEnsemble",
                reason: "paths have no hours".into(),
            });
        }
        for (m, path) in paths.iter().enumerate() {
            if path.len() != hours {
                return Err(DomainError::DimensionMismatch {
                    what: "ensemble path length",
                    expected: hours,
                    got: path.len(),
                });
            }
            if path.iter().any(|p| !p.is_finite()) {
                return Err(DomainError::NonFinite("ScenarioEnsemble paths"));
            }
            let _ = m;
        }
        Ok(Self {
            date_tag: date_tag.into(),
            paths,
        })
    }

    pub fn date_tag(&self) -> &str {
        &self.date_tag
    }

    /// Same ensemble under a different day identifier.
    pub fn with_date_tag(mut self, tag: impl Into<String>) -> Self {
        self.date_tag = tag.into();
        self
    }

    pub fn members(&self) -> usize {
        self.paths.len()
    }

    pub fn hours(&self) -> usize {
        self.paths[0].len()
    }

    pub fn paths(&self) -> &[Vec<f64>] {
        &self.paths
    }

    pub fn path(&self, m: usize) -> &[f64] {
        &self.paths[m]
    }

    /// Values of one hour across all members.
    pub fn hour_column(&self, hour: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[hour]).collect()
    }

    /// Per-hour ensemble mean path.
    pub fn mean_path(&self) -> Vec<f64> {
        let m = self.members() as f64;
        (0..self.hours())
            .map(|h| self.paths.iter().map(|p| p[h]).sum::<f64>() / m)
            .collect()
    }

    /// Per-hour ensemble median path (average of the two middle order
    /// statistics for even member counts).
    pub fn median_path(&self) -> Vec<f64> {
        (0..self.hours())
            .map(|h| {
                let mut col = self.hour_column(h);
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = col.len();
                if m % 2 == 1 {
                    col[m / 2]
                } else {
                    0.5 * (col[m / 2 - 1] + col[m / 2])
                }
            })
            .collect()
    }
}

/// Per-hour quantile predictions at a common set of probability levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    /// Strictly increasing probabilities in (0, 1).
    levels: Vec<f64>,
    /// `values[hour][level_index]`, non-decreasing across levels per hour.
    values: Vec<Vec<f64>>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, DomainError> {
        if levels.is_empty() {
            return Err(DomainError::Invalid {
                what: "QuantileForecast",
                reason: "no levels".into(),
            });
        }
        if levels.iter().any(|&l| !(0.0 < l && l < 1.0)) {
            return Err(DomainError::Invalid {
                what: "QuantileForecast",
                reason: "levels must lie in (0, 1)".into(),
            });
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DomainError::Invalid {
                what: "QuantileForecast",
                reason: "levels must be strictly increasing".into(),
            });
        }
        for (h, row) in values.iter().enumerate() {
            if row.len() != levels.len() {
                return Err(DomainError::DimensionMismatch {
                    what: "quantile row length",
                    expected: levels.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DomainError::NonFinite("QuantileForecast values"));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(DomainError::Invalid {
                    what: "QuantileForecast",
                    reason: format!("quantile crossing at hour {h}"),
                });
            }
        }
        Ok(Self { levels, values })
    }

    /// Build a quantile forecast from an ensemble on the midpoint grid
    /// `(i - 0.5) / M`, the same convention used by scenario reordering.
    pub fn from_ensemble(ensemble: &ScenarioEnsemble) -> Self {
        let m = ensemble.members();
        let levels: Vec<f64> = (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect();
        let values = (0..ensemble.hours())
            .map(|h| {
                let mut col = ensemble.hour_column(h);
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                col
            })
            .collect();
        Self { levels, values }
    }

    pub fn hours(&self) -> usize {
        self.values.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Quantile at `level` for `hour`, linearly interpolated in probability
    /// between available levels. Extrapolation beyond the outermost levels
    /// is an error.
    pub fn quantile(&self, hour: usize, level: f64) -> Result<f64, DomainError> {
        if hour >= self.values.len() {
            return Err(DomainError::DimensionMismatch {
                what: "hour index",
                expected: self.values.len(),
                got: hour,
            });
        }
        let levels = &self.levels;
        if level < levels[0] || level > *levels.last().unwrap() {
            return Err(DomainError::Invalid {
                what: "quantile level",
                reason: format!(
                    "level {level} outside available range [{}, {}]",
                    levels[0],
                    levels.last().unwrap()
                ),
            });
        }
        let row = &self.values[hour];
        match levels.binary_search_by(|l| l.partial_cmp(&level).unwrap()) {
            Ok(i) => Ok(row[i]),
            Err(i) => {
                let (l0, l1) = (levels[i - 1], levels[i]);
                let w = (level - l0) / (l1 - l0);
                Ok(row[i - 1] + w * (row[i] - row[i - 1]))
            }
        }
    }

    /// Median forecast path (level 0.5, interpolated if necessary).
    pub fn median_path(&self) -> Result<Vec<f64>, DomainError> {
        (0..self.hours()).map(|h| self.quantile(h, 0.5)).collect()
    }
}

/// A multivariate Gaussian price process `N(mu, D * sigma * D)` where
/// `D = diag(dispersion_b)`. `dispersion_b = 1` is the undistorted case;
/// other values over- or underdisperse the marginals while keeping the
/// mean and median unbiased.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPriceSpec {
    mu: Vec<f64>,
    /// Row-major covariance in (EUR/MWh)^2; symmetric positive semidefinite.
    sigma: Vec<Vec<f64>>,
    dispersion_b: f64,
}

impl GaussianPriceSpec {
    pub fn new(mu: Vec<f64>, sigma: Vec<Vec<f64>>, dispersion_b: f64) -> Result<Self, DomainError> {
        let n = mu.len();
        if n == 0 {
            return Err(DomainError::Invalid {
                what: "GaussianPriceSpec",
                reason: "empty mean vector".into(),
            });
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(DomainError::NonFinite("GaussianPriceSpec mu"));
        }
        if !(dispersion_b > 0.0 && dispersion_b.is_finite()) {
            return Err(DomainError::Invalid {
                what: "dispersion_b",
                reason: format!("must be positive and finite, got {dispersion_b}"),
            });
        }
        if sigma.len() != n || sigma.iter().any(|row| row.len() != n) {
            return Err(DomainError::DimensionMismatch {
                what: "covariance matrix",
                expected: n,
                got: sigma.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if !sigma[i][j].is_finite() {
                    return Err(DomainError::NonFinite("GaussianPriceSpec sigma"));
                }
                if (sigma[i][j] - sigma[j][i]).abs() > 1e-9 * (1.0 + sigma[i][j].abs()) {
                    return Err(DomainError::Invalid {
                        what: "covariance matrix",
                        reason: format!("not symmetric at ({i}, {j})"),
                    });
                }
            }
        }
        Ok(Self {
            mu,
            sigma,
            dispersion_b,
        })
    }

    /// Convenience constructor for a diagonal covariance from per-hour
    /// standard deviations.
    pub fn diagonal(mu: Vec<f64>, std_devs: &[f64], dispersion_b: f64) -> Result<Self, DomainError> {
        let n = mu.len();
        if std_devs.len() != n {
            return Err(DomainError::DimensionMismatch {
                what: "std_devs",
                expected: n,
                got: std_devs.len(),
            });
        }
        let mut sigma = vec![vec![0.0; n]; n];
        for (i, s) in std_devs.iter().enumerate() {
            sigma[i][i] = s * s;
        }
        Self::new(mu, sigma, dispersion_b)
    }

    /// Two-hour spec with marginal standard deviations and correlation,
    /// the workhorse of the trading-strategy simulation studies.
    pub fn bivariate(
        mu: [f64; 2],
        std_devs: [f64; 2],
        rho: f64,
        dispersion_b: f64,
    ) -> Result<Self, DomainError> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(DomainError::Invalid {
                what: "correlation",
                reason: format!("rho = {rho} outside [-1, 1]"),
            });
        }
        let cov = rho * std_devs[0] * std_devs[1];
        let sigma = vec![
            vec![std_devs[0] * std_devs[0], cov],
            vec![cov, std_devs[1] * std_devs[1]],
        ];
        Self::new(mu.to_vec(), sigma, dispersion_b)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[Vec<f64>] {
        &self.sigma
    }

    pub fn dispersion_b(&self) -> f64 {
        self.dispersion_b
    }

    /// Marginal standard deviation of hour `h` including the dispersion
    /// factor.
    pub fn marginal_std(&self, h: usize) -> f64 {
        self.dispersion_b * self.sigma[h][h].max(0.0).sqrt()
    }

    /// Correlation between two hours (dispersion-invariant).
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let denom = (self.sigma[i][i] * self.sigma[j][j]).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            self.sigma[i][j] / denom
        }
    }

    /// Dispersion-scaled covariance `D * sigma * D`.
    pub fn scaled_covariance(&self) -> Vec<Vec<f64>> {
        let b2 = self.dispersion_b * self.dispersion_b;
        self.sigma
            .iter()
            .map(|row| row.iter().map(|v| v * b2).collect())
            .collect()
    }
}

/// Physical and market parameters of the battery under management.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    /// Storage capacity in MWh.
    pub kappa: f64,
    /// One-way efficiency in (0, 1]; round-trip efficiency is `eta^2`.
    pub eta: f64,
    /// Charge/discharge power in MW; duration is `kappa / xi` hours.
    pub xi: f64,
    /// Maximum full cycles per day.
    pub cycles: u32,
    /// Maximum number of hours with a buy bid.
    pub n_buy: usize,
    /// Maximum number of hours with a sell bid.
    pub n_sell: usize,
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        let check = |ok: bool, what: &'static str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(DomainError::Invalid { what, reason })
            }
        };
        check(
            self.kappa > 0.0 && self.kappa.is_finite(),
            "kappa",
            format!("{} must be > 0", self.kappa),
        )?;
        check(
            self.eta > 0.0 && self.eta <= 1.0,
            "eta",
            format!("{} must lie in (0, 1]", self.eta),
        )?;
        check(
            self.xi > 0.0 && self.xi.is_finite(),
            "xi",
            format!("{} must be > 0", self.xi),
        )?;
        check(self.cycles >= 1, "cycles", format!("{} must be >= 1", self.cycles))?;
        check(self.n_buy >= 1, "n_buy", format!("{} must be >= 1", self.n_buy))?;
        check(self.n_sell >= 1, "n_sell", format!("{} must be >= 1", self.n_sell))?;
        Ok(())
    }

    /// Storage duration `kappa / xi` in hours.
    pub fn duration(&self) -> f64 {
        self.kappa / self.xi
    }

    /// Upper bound on market-side buy volume per hour, `(1/eta) * xi`.
    pub fn max_buy_per_hour(&self) -> f64 {
        self.xi / self.eta
    }

    /// Upper bound on market-side sell volume per hour, `eta * xi`.
    pub fn max_sell_per_hour(&self) -> f64 {
        self.eta * self.xi
    }
}

/// Risk measure used as the stochastic-program objective.
///
/// `CVaR { alpha }` is the mean of the worst `(1 - alpha) * 100%` of daily
/// return outcomes (lower tail); its threshold quantile is the VaR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RiskSpec {
    ExpectedProfit,
    #[serde(rename = "cvar")]
    CVaR { alpha: f64 },
}

impl RiskSpec {
    pub fn validate(&self) -> Result<(), DomainError> {
        match self {
            RiskSpec::ExpectedProfit => Ok(()),
            RiskSpec::CVaR { alpha } => {
                if *alpha > 0.0 && *alpha < 1.0 {
                    Ok(())
                } else {
                    Err(DomainError::Invalid {
                        what: "CVaR alpha",
                        reason: format!("{alpha} must lie in (0, 1)"),
                    })
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            RiskSpec::ExpectedProfit => "expected-profit".to_string(),
            RiskSpec::CVaR { alpha } => format!("cvar-{alpha}"),
        }
    }
}

/// Per-day values of one score for one model; the input to DM tests and
/// cross-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub model_tag: String,
    pub score_tag: String,
    pub values: Vec<f64>,
    pub lower_is_better: bool,
}

impl ScoreSeries {
    pub fn new(
        model_tag: impl Into<String>,
        score_tag: impl Into<String>,
        values: Vec<f64>,
        lower_is_better: bool,
    ) -> Result<Self, DomainError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite("ScoreSeries values"));
        }
        Ok(Self {
            model_tag: model_tag.into(),
            score_tag: score_tag.into(),
            values,
            lower_is_better,
        })
    }
}

/// Per-hour buy/sell volumes (market-side MWh) with optional limit prices.
///
/// Volume semantics follow the day-ahead settlement: `buy[h]` and `sell[h]`
/// are market-side energy, storage-side flows apply `eta` on charge and
/// `1/eta` on discharge.
#[derive(Debug, Clone, PartialEq)]
pub struct BidSchedule {
    buy: Vec<f64>,
    sell: Vec<f64>,
    /// Per-hour limit price for buy orders; `None` = unlimited order.
    buy_limit: Vec<Option<f64>>,
    /// Per-hour limit price for sell orders; `None` = unlimited order.
    sell_limit: Vec<Option<f64>>,
}

impl BidSchedule {
    /// A schedule of unlimited orders.
    pub fn unlimited(buy: Vec<f64>, sell: Vec<f64>) -> Result<Self, DomainError> {
        if buy.len() != sell.len() {
            return Err(DomainError::DimensionMismatch {
                what: "sell volumes",
                expected: buy.len(),
                got: sell.len(),
            });
        }
        if buy.iter().chain(sell.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DomainError::Invalid {
                what: "BidSchedule",
                reason: "volumes must be finite and non-negative".into(),
            });
        }
        let hours = buy.len();
        Ok(Self {
            buy,
            sell,
            buy_limit: vec![None; hours],
            sell_limit: vec![None; hours],
        })
    }

    /// The all-zero (no-action) schedule.
    pub fn zero(hours: usize) -> Self {
        Self {
            buy: vec![0.0; hours],
            sell: vec![0.0; hours],
            buy_limit: vec![None; hours],
            sell_limit: vec![None; hours],
        }
    }

    pub fn with_limits(
        mut self,
        buy_limit: Vec<Option<f64>>,
        sell_limit: Vec<Option<f64>>,
    ) -> Result<Self, DomainError> {
        if buy_limit.len() != self.hours() || sell_limit.len() != self.hours() {
            return Err(DomainError::DimensionMismatch {
                what: "limit prices",
                expected: self.hours(),
                got: buy_limit.len().max(sell_limit.len()),
            });
        }
        self.buy_limit = buy_limit;
        self.sell_limit = sell_limit;
        Ok(self)
    }

    pub fn hours(&self) -> usize {
        self.buy.len()
    }

    pub fn buy(&self) -> &[f64] {
        &self.buy
    }

    pub fn sell(&self) -> &[f64] {
        &self.sell
    }

    pub fn buy_limit(&self) -> &[Option<f64>] {
        &self.buy_limit
    }

    pub fn sell_limit(&self) -> &[Option<f64>] {
        &self.sell_limit
    }

    pub fn is_zero(&self) -> bool {
        self.buy.iter().all(|&v| v == 0.0) && self.sell.iter().all(|&v| v == 0.0)
    }

    /// Number of hours with a non-zero bid on either side.
    pub fn bid_count(&self) -> usize {
        (0..self.hours())
            .filter(|&h| self.buy[h] > 0.0 || self.sell[h] > 0.0)
            .count()
    }

    /// Canonical ordering key used to break ties among equally optimal
    /// schedules: the no-action schedule first, then earliest buy hour,
    /// earliest sell hour, smaller total volume, then the full volume
    /// vectors lexicographically.
    pub fn canonical_key(&self) -> impl PartialOrd + '_ {
        let first_buy = self.buy.iter().position(|&v| v > 0.0).unwrap_or(usize::MAX);
        let first_sell = self.sell.iter().position(|&v| v > 0.0).unwrap_or(usize::MAX);
        let total: f64 = self.buy.iter().chain(self.sell.iter()).sum();
        (
            !self.is_zero(),
            first_buy,
            first_sell,
            total,
            &self.buy,
            &self.sell,
        )
    }
}

/// One violated schedule constraint, naming the constraint family and the
/// offending hour where applicable.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintViolation {
    SimultaneousBuySell { hour: usize },
    BuyPowerLimit { hour: usize, volume: f64, limit: f64 },
    SellPowerLimit { hour: usize, volume: f64, limit: f64 },
    ChargeLimits { hour: usize, balance: f64 },
    TerminalBalance { balance: f64 },
    CycleLimit { charged: f64, limit: f64 },
}

impl std::fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SimultaneousBuySell { hour } => {
                write!(f, "simultaneous buy and sell at hour {hour}")
            }
            Self::BuyPowerLimit { hour, volume, limit } => {
                write!(f, "buy volume {volume} exceeds power limit {limit} at hour {hour}")
            }
            Self::SellPowerLimit { hour, volume, limit } => {
                write!(f, "sell volume {volume} exceeds power limit {limit} at hour {hour}")
            }
            Self::ChargeLimits { hour, balance } => {
                write!(f, "charge limits: storage balance {balance} outside [0, kappa] at hour {hour}")
            }
            Self::TerminalBalance { balance } => {
                write!(f, "terminal balance {balance} is not zero")
            }
            Self::CycleLimit { charged, limit } => {
                write!(f, "cycle limit: charged energy {charged} exceeds {limit}")
            }
        }
    }
}

/// Outcome of checking a schedule against a battery configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub violations: Vec<ConstraintViolation>,
}

impl ValidityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every schedule constraint and report all violations.
///
/// Uses the absolute tolerance [`FEASIBILITY_TOL_MWH`] so LP round-off does
/// not produce spurious failures.
pub fn validate_bid_schedule(
    schedule: &BidSchedule,
    config: &BatteryConfig,
) -> Result<ValidityReport, DomainError> {
    config.validate()?;
    let hours = schedule.hours();
    if hours == 0 {
        return Err(DomainError::DimensionMismatch {
            what: "schedule hours",
            expected: 1,
            got: 0,
        });
    }
    let tol = FEASIBILITY_TOL_MWH;
    let mut violations = Vec::new();

    let max_buy = config.max_buy_per_hour();
    let max_sell = config.max_sell_per_hour();
    let mut balance = 0.0;
    let mut charged = 0.0;
    for h in 0..hours {
        let (b, s) = (schedule.buy[h], schedule.sell[h]);
        if b > tol && s > tol {
            violations.push(ConstraintViolation::SimultaneousBuySell { hour: h });
        }
        if b > max_buy + tol {
            violations.push(ConstraintViolation::BuyPowerLimit {
                hour: h,
                volume: b,
                limit: max_buy,
            });
        }
        if s > max_sell + tol {
            violations.push(ConstraintViolation::SellPowerLimit {
                hour: h,
                volume: s,
                limit: max_sell,
            });
        }
        balance += config.eta * b - s / config.eta;
        charged += config.eta * b;
        if balance < -tol || balance > config.kappa + tol {
            violations.push(ConstraintViolation::ChargeLimits { hour: h, balance });
        }
    }
    if balance.abs() > tol {
        violations.push(ConstraintViolation::TerminalBalance { balance });
    }
    let cycle_cap = config.cycles as f64 * config.kappa;
    if charged > cycle_cap + tol {
        violations.push(ConstraintViolation::CycleLimit {
            charged,
            limit: cycle_cap,
        });
    }
    Ok(ValidityReport { violations })
}

/// Cash settlement of an (unlimited-execution) schedule against realized
/// prices: `sum_h (-buy_h * (1/eta) * p_h + sell_h * eta * p_h)` in EUR.
///
/// Limit-order settlement lives in the trading-strategy module; any limit
/// prices on the schedule are not interpreted here.
pub fn realized_return(
    schedule: &BidSchedule,
    config: &BatteryConfig,
    day: &PriceDay,
) -> Result<f64, DomainError> {
    if schedule.hours() != day.hours() {
        return Err(DomainError::DimensionMismatch {
            what: "schedule vs price day",
            expected: day.hours(),
            got: schedule.hours(),
        });
    }
    Ok(schedule_return_against(schedule, config, day.prices()))
}

/// Same settlement arithmetic against an arbitrary price path; shared with
/// the per-scenario revenue evaluation of the optimizers.
pub fn schedule_return_against(schedule: &BidSchedule, config: &BatteryConfig, prices: &[f64]) -> f64 {
    let inv_eta = 1.0 / config.eta;
    schedule
        .buy
        .iter()
        .zip(schedule.sell.iter())
        .zip(prices.iter())
        .map(|((b, s), p)| (-b * inv_eta + s * config.eta) * p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kappa: f64, eta: f64, xi: f64, cycles: u32) -> BatteryConfig {
        BatteryConfig {
            kappa,
            eta,
            xi,
            cycles,
            n_buy: 1,
            n_sell: 1,
        }
    }

    #[test]
    fn zero_schedule_passes_any_config() {
        let cfg = config(10.0, 0.95, 10.0, 1);
        let schedule = BidSchedule::zero(24);
        let report = validate_bid_schedule(&schedule, &cfg).unwrap();
        assert!(report.is_ok());
    }

    #[test]
    fn single_cycle_with_unit_efficiency_passes() {
        // buy 10 MWh at h=5, sell 10 * eta^2 at h=9 with eta = 1.
        let cfg = config(10.0, 1.0, 10.0, 1);
        let mut buy = vec![0.0; 24];
        let mut sell = vec![0.0; 24];
        buy[5] = 10.0;
        sell[9] = 10.0;
        let schedule = BidSchedule::unlimited(buy, sell).unwrap();
        let report = validate_bid_schedule(&schedule, &cfg).unwrap();
        assert!(report.is_ok(), "violations: {:?}", report.violations);
    }

    #[test]
    fn discharge_before_charge_fails_charge_limits() {
        let cfg = config(10.0, 1.0, 10.0, 1);
        let mut buy = vec![0.0; 24];
        let mut sell = vec![0.0; 24];
        buy[5] = 10.0;
        sell[3] = 10.0;
        let schedule = BidSchedule::unlimited(buy, sell).unwrap();
        let report = validate_bid_schedule(&schedule, &cfg).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ConstraintViolation::ChargeLimits { hour: 3, .. })));
    }

    #[test]
    fn simultaneous_buy_sell_detected() {
        let cfg = config(10.0, 1.0, 10.0, 1);
        let mut buy = vec![0.0; 4];
        let mut sell = vec![0.0; 4];
        buy[1] = 1.0;
        sell[1] = 1.0;
        let schedule = BidSchedule::unlimited(buy, sell).unwrap();
        let report = validate_bid_schedule(&schedule, &cfg).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ConstraintViolation::SimultaneousBuySell { hour: 1 })));
    }

    #[test]
    fn cycle_limit_counts_charged_storage_energy() {
        // Two full cycles with a 1-cycle config must fail.
        let cfg = config(10.0, 1.0, 10.0, 1);
        let mut buy = vec![0.0; 24];
        let mut sell = vec![0.0; 24];
        buy[0] = 10.0;
        sell[1] = 10.0;
        buy[2] = 10.0;
        sell[3] = 10.0;
        let schedule = BidSchedule::unlimited(buy, sell).unwrap();
        let report = validate_bid_schedule(&schedule, &cfg).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, ConstraintViolation::CycleLimit { .. })));
        // With 2 cycles allowed the same schedule passes.
        let cfg2 = config(10.0, 1.0, 10.0, 2);
        assert!(validate_bid_schedule(&schedule, &cfg2).unwrap().is_ok());
    }

    #[test]
    fn realized_return_examples() {
        let day =
            PriceDay::new("d", vec![10.0, 50.0]).unwrap();
        let cfg = config(10.0, 1.0, 10.0, 1);
        let zero = BidSchedule::zero(2);
        assert_eq!(realized_return(&zero, &cfg, &day).unwrap(), 0.0);

        let schedule =
            BidSchedule::unlimited(vec![10.0, 0.0], vec![0.0, 10.0]).unwrap();
        assert!((realized_return(&schedule, &cfg, &day).unwrap() - 400.0).abs() < 1e-12);

        // eta = 0.95: -(1/0.95)*10*10 + 0.95*10*50
        let cfg95 = config(10.0, 0.95, 10.0, 1);
        let expected = -(1.0 / 0.95) * 10.0 * 10.0 + 0.95 * 10.0 * 50.0;
        let got = realized_return(&schedule, &cfg95, &day).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 369.7368421052632).abs() < 1e-9);
    }

    #[test]
    fn quantile_forecast_interpolation_and_range() {
        let qf = QuantileForecast::new(
            vec![0.25, 0.5, 0.75],
            vec![vec![10.0, 20.0, 30.0], vec![5.0, 5.0, 9.0]],
        )
        .unwrap();
        assert_eq!(qf.quantile(0, 0.5).unwrap(), 20.0);
        assert!((qf.quantile(0, 0.375).unwrap() - 15.0).abs() < 1e-12);
        assert!(qf.quantile(0, 0.1).is_err());
        assert!(qf.quantile(0, 0.9).is_err());
    }

    #[test]
    fn quantile_crossing_rejected() {
        let res = QuantileForecast::new(vec![0.25, 0.75], vec![vec![10.0, 9.0]]);
        assert!(res.is_err());
    }

    #[test]
    fn gaussian_spec_validation() {
        assert!(GaussianPriceSpec::diagonal(vec![90.0, 100.0], &[20.0, 20.0], 1.0).is_ok());
        assert!(GaussianPriceSpec::diagonal(vec![90.0], &[1.0], 0.0).is_err());
        let asym = GaussianPriceSpec::new(
            vec![0.0, 0.0],
            vec![vec![1.0, 0.5], vec![0.1, 1.0]],
            1.0,
        );
        assert!(asym.is_err());
    }

    #[test]
    fn risk_spec_validation() {
        assert!(RiskSpec::ExpectedProfit.validate().is_ok());
        assert!(RiskSpec::CVaR { alpha: 0.9 }.validate().is_ok());
        assert!(RiskSpec::CVaR { alpha: 1.0 }.validate().is_err());
        assert!(RiskSpec::CVaR { alpha: 0.0 }.validate().is_err());
    }
}
