//! Quantile-based trading strategies: limit-order construction, coupled
//! settlement, and the acceptance-probability / expected-profit analytics
//! behind the dispersion and correlation simulation studies.

use crate::domain::{
    BatteryConfig, BidSchedule, DomainError, GaussianPriceSpec, PriceDay, QuantileForecast,
    ScenarioEnsemble,
};
use crate::parallel::{map_indexed, Parallelism};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QbtsError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("alpha {0} must lie in (0, 0.5)")]
    BadAlpha(f64),
    #[error("forecast needs at least two hours")]
    TooFewHours,
    #[error("hour {hour} outside 0..{hours}")]
    HourOutOfRange { hour: usize, hours: usize },
    #[error("buy hour must differ from sell hour")]
    SameHour,
    #[error("analytic acceptance probability requires zero correlation between the bid hours (got rho = {0})")]
    AnalyticNeedsIndependence(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// How the buy/sell hour pair is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairSelection {
    /// Only pairs with the buy hour before the sell hour (charge before
    /// discharge); the setting used throughout the analysis.
    #[default]
    ChargeBeforeDischarge,
    /// Plain argmin/argmax over all ordered pairs; kept for comparison
    /// with the wider literature.
    Unconstrained,
}

/// A coupled limit buy/sell order pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QbtsBid {
    pub buy_hour: usize,
    pub sell_hour: usize,
    /// Limit price of the buy leg, the (1 - alpha)-quantile at `buy_hour`.
    pub buy_limit: f64,
    /// Limit price of the sell leg, the alpha-quantile at `sell_hour`.
    pub sell_limit: f64,
    /// Market-side buy volume `(1/eta) * v` (storage-side `v`).
    pub buy_volume: f64,
    /// Market-side sell volume `eta * v`.
    pub sell_volume: f64,
    pub alpha: f64,
}

/// Settlement outcome of a coupled bid: both legs execute or neither does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyOutcome {
    pub accepted: bool,
    pub cash: f64,
    pub traded_mwh: f64,
}

fn check_alpha(alpha: f64) -> Result<(), QbtsError> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(QbtsError::BadAlpha(alpha))
    }
}

/// Storage-side volume a single coupled trade moves: the full capacity,
/// capped by what one hour of charging can deliver.
fn stored_volume(config: &BatteryConfig) -> f64 {
    config.kappa.min(config.xi)
}

/// Best pair for a linear hour score `eta * sell_score[s] - (1/eta) *
/// buy_score[b]`; ties resolved toward the lowest buy hour, then the
/// lowest sell hour.
fn best_pair(
    buy_score: &[f64],
    sell_score: &[f64],
    eta: f64,
    selection: PairSelection,
) -> Option<(usize, usize, f64)> {
    let hours = buy_score.len();
    let inv_eta = 1.0 / eta;
    let mut best: Option<(usize, usize, f64)> = None;
    for b in 0..hours {
        for s in 0..hours {
            let ordered = match selection {
                PairSelection::ChargeBeforeDischarge => b < s,
                PairSelection::Unconstrained => b != s,
            };
            if !ordered {
                continue;
            }
            let value = eta * sell_score[s] - inv_eta * buy_score[b];
            if best.map_or(true, |(_, _, v)| value > v) {
                best = Some((b, s, value));
            }
        }
    }
    best
}

/// Construct the coupled limit-order pair: hours chosen by the median
/// spread, the buy limit at the (1 - alpha)-quantile of the buy hour and
/// the sell limit at the alpha-quantile of the sell hour.
pub fn qbts_construct(
    forecast: &QuantileForecast,
    alpha: f64,
    config: &BatteryConfig,
    selection: PairSelection,
) -> Result<QbtsBid, QbtsError> {
    check_alpha(alpha)?;
    config.validate()?;
    if forecast.hours() < 2 {
        return Err(QbtsError::TooFewHours);
    }
    let medians = forecast.median_path()?;
    let (b, s, _) = best_pair(&medians, &medians, config.eta, selection).expect(">= 2 hours");
    let v = stored_volume(config);
    Ok(QbtsBid {
        buy_hour: b,
        sell_hour: s,
        buy_limit: forecast.quantile(b, 1.0 - alpha)?,
        sell_limit: forecast.quantile(s, alpha)?,
        buy_volume: v / config.eta,
        sell_volume: config.eta * v,
        alpha,
    })
}

/// Settle a coupled bid against realized prices: accepted iff the buy
/// price is at or below the buy limit and the sell price at or above the
/// sell limit (closed inequalities on both legs).
pub fn qbts_settle(bid: &QbtsBid, day: &PriceDay) -> Result<StrategyOutcome, QbtsError> {
    let hours = day.hours();
    for hour in [bid.buy_hour, bid.sell_hour] {
        if hour >= hours {
            return Err(QbtsError::HourOutOfRange { hour, hours });
        }
    }
    if bid.buy_hour == bid.sell_hour {
        return Err(QbtsError::SameHour);
    }
    let p_b = day.prices()[bid.buy_hour];
    let p_s = day.prices()[bid.sell_hour];
    if p_b <= bid.buy_limit && p_s >= bid.sell_limit {
        Ok(StrategyOutcome {
            accepted: true,
            cash: -bid.buy_volume * p_b + bid.sell_volume * p_s,
            traded_mwh: bid.buy_volume + bid.sell_volume,
        })
    } else {
        Ok(StrategyOutcome {
            accepted: false,
            cash: 0.0,
            traded_mwh: 0.0,
        })
    }
}

/// TS-1 variant: hours chosen by the quantile spread
/// `eta * Q_s^alpha - (1/eta) * Q_b^(1-alpha)`, unlimited orders placed.
/// With the no-trade filter (the default) the day is skipped when the best
/// spread value is non-positive.
pub fn ts1_construct(
    forecast: &QuantileForecast,
    alpha: f64,
    config: &BatteryConfig,
    no_trade_filter: bool,
    selection: PairSelection,
) -> Result<BidSchedule, QbtsError> {
    check_alpha(alpha)?;
    config.validate()?;
    let hours = forecast.hours();
    if hours < 2 {
        return Err(QbtsError::TooFewHours);
    }
    let buy_score: Vec<f64> = (0..hours)
        .map(|h| forecast.quantile(h, 1.0 - alpha))
        .collect::<Result<_, _>>()?;
    let sell_score: Vec<f64> = (0..hours)
        .map(|h| forecast.quantile(h, alpha))
        .collect::<Result<_, _>>()?;
    let (b, s, value) =
        best_pair(&buy_score, &sell_score, config.eta, selection).expect(">= 2 hours");
    if no_trade_filter && value <= 0.0 {
        return Ok(BidSchedule::zero(hours));
    }
    let v = stored_volume(config);
    let mut buy = vec![0.0; hours];
    let mut sell = vec![0.0; hours];
    buy[b] = v / config.eta;
    sell[s] = config.eta * v;
    Ok(BidSchedule::unlimited(buy, sell)?)
}

/// Estimation method for acceptance probabilities and expected profits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApMethod {
    /// Closed form via the standard normal CDF; only valid when the true
    /// process has zero correlation between the bid hours.
    AnalyticIndependent,
    /// Seeded sampling from the true bivariate law of the bid hours.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApEstimate {
    pub ap: f64,
    /// Binomial standard error for Monte-Carlo estimates.
    pub std_err: Option<f64>,
}

/// Joint acceptance probability and expected-profit decomposition of a
/// coupled bid whose limits come from a (possibly misspecified) forecast
/// law, evaluated under the true law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QbtsProfit {
    pub ap: f64,
    /// Expected cash conditional on acceptance; undefined when nothing is
    /// accepted.
    pub ep: Option<f64>,
    /// Unconditional expected cash, `ap * ep`.
    pub expected_profit: f64,
    /// Monte-Carlo standard error of `expected_profit`.
    pub std_err: Option<f64>,
}

struct PairLaw {
    mu_b: f64,
    mu_s: f64,
    sd_b: f64,
    sd_s: f64,
    rho: f64,
}

fn pair_law(spec: &GaussianPriceSpec, b: usize, s: usize) -> Result<PairLaw, QbtsError> {
    let dim = spec.dim();
    for hour in [b, s] {
        if hour >= dim {
            return Err(QbtsError::HourOutOfRange { hour, hours: dim });
        }
    }
    if b == s {
        return Err(QbtsError::SameHour);
    }
    Ok(PairLaw {
        mu_b: spec.mu()[b],
        mu_s: spec.mu()[s],
        sd_b: spec.marginal_std(b),
        sd_s: spec.marginal_std(s),
        rho: spec.correlation(b, s),
    })
}

/// Forecast limit prices for the pair: the (1 - alpha)- and alpha-quantiles
/// of the forecast marginals (dispersion included).
fn forecast_limits(
    forecast: &GaussianPriceSpec,
    b: usize,
    s: usize,
    alpha: f64,
) -> Result<(f64, f64), QbtsError> {
    let law = pair_law(forecast, b, s)?;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let z_hi = normal.inverse_cdf(1.0 - alpha);
    let z_lo = normal.inverse_cdf(alpha);
    Ok((law.mu_b + law.sd_b * z_hi, law.mu_s + law.sd_s * z_lo))
}

/// `P(P_b <= q)` for a Gaussian marginal, degenerate case included.
fn prob_below(mu: f64, sd: f64, q: f64) -> f64 {
    if sd == 0.0 {
        if mu <= q {
            1.0
        } else {
            0.0
        }
    } else {
        Normal::new(0.0, 1.0).unwrap().cdf((q - mu) / sd)
    }
}

/// Probability that true prices clear both forecast limits,
/// `P(P_b <= Q~_b^(1-alpha), P_s >= Q~_s^alpha)`.
pub fn qbts_acceptance_probability(
    true_spec: &GaussianPriceSpec,
    forecast_spec: &GaussianPriceSpec,
    b: usize,
    s: usize,
    alpha: f64,
    method: ApMethod,
) -> Result<ApEstimate, QbtsError> {
    check_alpha(alpha)?;
    let law = pair_law(true_spec, b, s)?;
    let (q_buy, q_sell) = forecast_limits(forecast_spec, b, s, alpha)?;
    match method {
        ApMethod::AnalyticIndependent => {
            if law.rho.abs() > 1e-12 {
                return Err(QbtsError::AnalyticNeedsIndependence(law.rho));
            }
            let ap = prob_below(law.mu_b, law.sd_b, q_buy)
                * (1.0 - prob_below(law.mu_s, law.sd_s, q_sell));
            Ok(ApEstimate { ap, std_err: None })
        }
        ApMethod::MonteCarlo { draws, seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let chol = (1.0 - law.rho * law.rho).max(0.0).sqrt();
            let mut accepted = 0usize;
            for _ in 0..draws {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let p_b = law.mu_b + law.sd_b * z1;
                let p_s = law.mu_s + law.sd_s * (law.rho * z1 + chol * z2);
                if p_b <= q_buy && p_s >= q_sell {
                    accepted += 1;
                }
            }
            let ap = accepted as f64 / draws as f64;
            Ok(ApEstimate {
                ap,
                std_err: Some((ap * (1.0 - ap) / draws as f64).sqrt()),
            })
        }
    }
}

/// Expected profit of the coupled bid with its acceptance-probability /
/// conditional-profit decomposition.
///
/// The analytic path uses truncated-normal means
/// `E[X | X <= q] = mu - sigma * phi(z) / Phi(z)` and requires
/// independence of the bid hours; the Monte-Carlo path averages settled
/// cash over seeded draws.
pub fn qbts_expected_profit(
    true_spec: &GaussianPriceSpec,
    forecast_spec: &GaussianPriceSpec,
    b: usize,
    s: usize,
    alpha: f64,
    config: &BatteryConfig,
    method: ApMethod,
) -> Result<QbtsProfit, QbtsError> {
    check_alpha(alpha)?;
    config.validate()?;
    let law = pair_law(true_spec, b, s)?;
    let (q_buy, q_sell) = forecast_limits(forecast_spec, b, s, alpha)?;
    let v = stored_volume(config);
    let buy_leg = v / config.eta;
    let sell_leg = config.eta * v;

    match method {
        ApMethod::AnalyticIndependent => {
            if law.rho.abs() > 1e-12 {
                return Err(QbtsError::AnalyticNeedsIndependence(law.rho));
            }
            let normal = Normal::new(0.0, 1.0).unwrap();
            let p_buy = prob_below(law.mu_b, law.sd_b, q_buy);
            let p_sell = 1.0 - prob_below(law.mu_s, law.sd_s, q_sell);
            let ap = p_buy * p_sell;
            if ap <= 0.0 {
                return Ok(QbtsProfit {
                    ap: 0.0,
                    ep: None,
                    expected_profit: 0.0,
                    std_err: None,
                });
            }
            let mean_buy = if law.sd_b == 0.0 {
                law.mu_b
            } else {
                let z = (q_buy - law.mu_b) / law.sd_b;
                law.mu_b - law.sd_b * normal.pdf(z) / normal.cdf(z)
            };
            let mean_sell = if law.sd_s == 0.0 {
                law.mu_s
            } else {
                let z = (q_sell - law.mu_s) / law.sd_s;
                law.mu_s + law.sd_s * normal.pdf(z) / (1.0 - normal.cdf(z))
            };
            let ep = -buy_leg * mean_buy + sell_leg * mean_sell;
            Ok(QbtsProfit {
                ap,
                ep: Some(ep),
                expected_profit: ap * ep,
                std_err: None,
            })
        }
        ApMethod::MonteCarlo { draws, seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let chol = (1.0 - law.rho * law.rho).max(0.0).sqrt();
            let mut accepted = 0usize;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut accepted_sum = 0.0;
            for _ in 0..draws {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let p_b = law.mu_b + law.sd_b * z1;
                let p_s = law.mu_s + law.sd_s * (law.rho * z1 + chol * z2);
                let cash = if p_b <= q_buy && p_s >= q_sell {
                    accepted += 1;
                    let c = -buy_leg * p_b + sell_leg * p_s;
                    accepted_sum += c;
                    c
                } else {
                    0.0
                };
                sum += cash;
                sum_sq += cash * cash;
            }
            let n = draws as f64;
            let mean = sum / n;
            let variance = (sum_sq / n - mean * mean).max(0.0);
            Ok(QbtsProfit {
                ap: accepted as f64 / n,
                ep: (accepted > 0).then(|| accepted_sum / accepted as f64),
                expected_profit: mean,
                std_err: Some((variance / n).sqrt()),
            })
        }
    }
}

/// Ensemble estimator of the acceptance probability: the fraction of
/// members clearing both limits simultaneously, which picks up the
/// forecast's own dependence structure.
pub fn empirical_acceptance_probability(
    forecast: &ScenarioEnsemble,
    bid: &QbtsBid,
) -> Result<f64, QbtsError> {
    let hours = forecast.hours();
    for hour in [bid.buy_hour, bid.sell_hour] {
        if hour >= hours {
            return Err(QbtsError::HourOutOfRange { hour, hours });
        }
    }
    let hits = forecast
        .paths()
        .iter()
        .filter(|path| path[bid.buy_hour] <= bid.buy_limit && path[bid.sell_hour] >= bid.sell_limit)
        .count();
    Ok(hits as f64 / forecast.members() as f64)
}

/// One `(mu_b, mu_s, sigma)` panel of the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelSpec {
    pub mu_b: f64,
    pub mu_s: f64,
    pub sigma: f64,
}

/// Grid specification for the dispersion/correlation simulation studies.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGridSpec {
    pub panels: Vec<PanelSpec>,
    /// Correlations between the buy and sell hour; `{0}` for the
    /// dispersion study.
    pub rhos: Vec<f64>,
    /// Dispersion factors applied to the forecast; must include 1 (the
    /// perfect-forecast reference).
    pub dispersions: Vec<f64>,
    pub alphas: Vec<f64>,
    pub draws: usize,
    pub config: BatteryConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGridRow {
    pub mu_b: f64,
    pub mu_s: f64,
    pub sigma: f64,
    pub rho: f64,
    pub dispersion: f64,
    pub alpha: f64,
    pub ap: f64,
    pub ep: Option<f64>,
    pub expected_profit: f64,
}

/// Deterministic per-cell seed derivation (splitmix64 over the root seed
/// and the cell index), so grid cells can be evaluated in any order.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte-Carlo sweep over `panels x rhos x dispersions x alphas` with the
/// buy hour first; rows come back in grid order regardless of execution
/// mode.
pub fn run_simulation_grid(
    spec: &SimGridSpec,
    seed: u64,
    mode: Parallelism,
) -> Result<Vec<SimGridRow>, QbtsError> {
    spec.config.validate()?;
    if spec.panels.iter().any(|p| p.sigma <= 0.0) {
        return Err(DomainError::Invalid {
            what: "panel sigma",
            reason: "sigma = 0 leaves the forecast quantiles undefined".into(),
        }
        .into());
    }
    if !spec.dispersions.iter().any(|&b| b == 1.0) {
        return Err(DomainError::Invalid {
            what: "dispersion grid",
            reason: "must include the perfect-forecast reference b = 1".into(),
        }
        .into());
    }
    let mut cells = Vec::new();
    for panel in &spec.panels {
        for &rho in &spec.rhos {
            for &dispersion in &spec.dispersions {
                for &alpha in &spec.alphas {
                    cells.push((*panel, rho, dispersion, alpha));
                }
            }
        }
    }
    let results = map_indexed(mode, cells.len(), |i| {
        let (panel, rho, dispersion, alpha) = cells[i];
        let truth = GaussianPriceSpec::bivariate(
            [panel.mu_b, panel.mu_s],
            [panel.sigma, panel.sigma],
            rho,
            1.0,
        )?;
        let forecast = GaussianPriceSpec::bivariate(
            [panel.mu_b, panel.mu_s],
            [panel.sigma, panel.sigma],
            rho,
            dispersion,
        )?;
        let profit = qbts_expected_profit(
            &truth,
            &forecast,
            0,
            1,
            alpha,
            &spec.config,
            ApMethod::MonteCarlo {
                draws: spec.draws,
                seed: derive_seed(seed, i as u64),
            },
        )?;
        Ok(SimGridRow {
            mu_b: panel.mu_b,
            mu_s: panel.mu_s,
            sigma: panel.sigma,
            rho,
            dispersion,
            alpha,
            ap: profit.ap,
            ep: profit.ep,
            expected_profit: profit.expected_profit,
        })
    });
    results.into_iter().collect()
}

/// Emit grid rows in the long-format schema
/// `mu_b,mu_s,sigma,rho,dispersion,alpha,ap,ep,expected_profit`.
pub fn write_sim_grid_csv(path: &std::path::Path, rows: &[SimGridRow]) -> Result<(), QbtsError> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| QbtsError::Csv(e.to_string()))?;
    writer
        .write_record([
            "mu_b",
            "mu_s",
            "sigma",
            "rho",
            "dispersion",
            "alpha",
            "ap",
            "ep",
            "expected_profit",
        ])
        .map_err(|e| QbtsError::Csv(e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                format!("{:?}", row.mu_b),
                format!("{:?}", row.mu_s),
                format!("{:?}", row.sigma),
                format!("{:?}", row.rho),
                format!("{:?}", row.dispersion),
                format!("{:?}", row.alpha),
                format!("{:?}", row.ap),
                row.ep.map_or(String::new(), |e| format!("{e:?}")),
                format!("{:?}", row.expected_profit),
            ])
            .map_err(|e| QbtsError::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|e| QbtsError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_config(eta: f64) -> BatteryConfig {
        BatteryConfig {
            kappa: 1.0,
            eta,
            xi: 1.0,
            cycles: 1,
            n_buy: 1,
            n_sell: 1,
        }
    }

    /// Gaussian quantile forecast on a small level grid.
    fn gaussian_forecast(mu: &[f64], sigma: f64, levels: &[f64]) -> QuantileForecast {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let values = mu
            .iter()
            .map(|&m| levels.iter().map(|&l| m + sigma * normal.inverse_cdf(l)).collect())
            .collect();
        QuantileForecast::new(levels.to_vec(), values).unwrap()
    }

    #[test]
    fn construct_monotone_medians_picks_extremes() {
        let levels = [0.25, 0.5, 0.75];
        let mu: Vec<f64> = (0..6).map(|h| 10.0 * h as f64).collect();
        let forecast = gaussian_forecast(&mu, 1.0, &levels);
        let bid = qbts_construct(
            &forecast,
            0.25,
            &unit_config(1.0),
            PairSelection::ChargeBeforeDischarge,
        )
        .unwrap();
        assert_eq!((bid.buy_hour, bid.sell_hour), (0, 5));
    }

    #[test]
    fn construct_limits_are_quantile_lookups() {
        let levels = [0.25, 0.5, 0.75];
        let forecast = gaussian_forecast(&[50.0, 100.0], 10.0, &levels);
        let bid = qbts_construct(
            &forecast,
            0.25,
            &unit_config(1.0),
            PairSelection::ChargeBeforeDischarge,
        )
        .unwrap();
        assert_eq!(bid.buy_limit, forecast.quantile(0, 0.75).unwrap());
        assert_eq!(bid.sell_limit, forecast.quantile(1, 0.25).unwrap());
    }

    #[test]
    fn construct_small_alpha_reaches_outermost_levels() {
        let levels = [0.05, 0.5, 0.95];
        let forecast = gaussian_forecast(&[50.0, 100.0], 10.0, &levels);
        let bid = qbts_construct(
            &forecast,
            0.05,
            &unit_config(1.0),
            PairSelection::ChargeBeforeDischarge,
        )
        .unwrap();
        assert_eq!(bid.buy_limit, forecast.quantile(0, 0.95).unwrap());
        assert_eq!(bid.sell_limit, forecast.quantile(1, 0.05).unwrap());
        // Below the outermost level extrapolation is refused.
        assert!(qbts_construct(
            &forecast,
            0.01,
            &unit_config(1.0),
            PairSelection::ChargeBeforeDischarge
        )
        .is_err());
    }

    #[test]
    fn settle_examples() {
        let bid = QbtsBid {
            buy_hour: 0,
            sell_hour: 1,
            buy_limit: 60.0,
            sell_limit: 80.0,
            buy_volume: 10.0,
            sell_volume: 10.0,
            alpha: 0.25,
        };
        let rejected = qbts_settle(&bid, &PriceDay::new("d", vec![70.0, 100.0]).unwrap()).unwrap();
        assert!(!rejected.accepted);
        assert_eq!(rejected.cash, 0.0);
        assert_eq!(rejected.traded_mwh, 0.0);

        let accepted = qbts_settle(&bid, &PriceDay::new("d", vec![50.0, 100.0]).unwrap()).unwrap();
        assert!(accepted.accepted);
        assert!((accepted.cash - 500.0).abs() < 1e-12);

        // Boundary: buy price exactly at the limit is accepted.
        let boundary = qbts_settle(&bid, &PriceDay::new("d", vec![60.0, 80.0]).unwrap()).unwrap();
        assert!(boundary.accepted);
    }

    #[test]
    fn ts1_zero_width_intervals_match_qbts_pair() {
        // A single level grid collapsed to the median.
        let levels = [0.49, 0.5, 0.51];
        let mu = [40.0, 10.0, 90.0, 60.0];
        let forecast = gaussian_forecast(&mu, 1e-9, &levels);
        let config = unit_config(0.95);
        let bid = qbts_construct(&forecast, 0.49, &config, PairSelection::ChargeBeforeDischarge)
            .unwrap();
        let schedule =
            ts1_construct(&forecast, 0.49, &config, false, PairSelection::ChargeBeforeDischarge)
                .unwrap();
        assert!(schedule.buy()[bid.buy_hour] > 0.0);
        assert!(schedule.sell()[bid.sell_hour] > 0.0);
    }

    #[test]
    fn ts1_no_trade_on_flat_quantiles_with_losses() {
        let levels = [0.25, 0.5, 0.75];
        let forecast = gaussian_forecast(&[50.0, 50.0, 50.0], 5.0, &levels);
        let schedule = ts1_construct(
            &forecast,
            0.25,
            &unit_config(0.9),
            true,
            PairSelection::ChargeBeforeDischarge,
        )
        .unwrap();
        assert!(schedule.is_zero());
    }

    #[test]
    fn ts1_two_hour_spread_value() {
        // Q_0^{0.75} = 60, Q_1^{0.25} = 90, eta = 1 -> value 30, trade on.
        let forecast = QuantileForecast::new(
            vec![0.25, 0.5, 0.75],
            vec![vec![40.0, 50.0, 60.0], vec![90.0, 100.0, 110.0]],
        )
        .unwrap();
        let schedule = ts1_construct(
            &forecast,
            0.25,
            &unit_config(1.0),
            true,
            PairSelection::ChargeBeforeDischarge,
        )
        .unwrap();
        assert_eq!(schedule.buy()[0], 1.0);
        assert_eq!(schedule.sell()[1], 1.0);
    }

    fn bivariate(mu: [f64; 2], sigma: f64, rho: f64, dispersion: f64) -> GaussianPriceSpec {
        GaussianPriceSpec::bivariate(mu, [sigma, sigma], rho, dispersion).unwrap()
    }

    #[test]
    fn perfect_forecast_independent_ap_is_one_minus_alpha_squared() {
        let spec = bivariate([50.0, 100.0], 10.0, 0.0, 1.0);
        for alpha in [0.1, 0.2, 0.3, 0.4] {
            let est = qbts_acceptance_probability(
                &spec,
                &spec,
                0,
                1,
                alpha,
                ApMethod::AnalyticIndependent,
            )
            .unwrap();
            let expected = (1.0 - alpha) * (1.0 - alpha);
            assert!((est.ap - expected).abs() < 1e-9, "alpha {alpha}: {}", est.ap);
        }
    }

    #[test]
    fn analytic_rejects_correlated_truth() {
        let spec = bivariate([50.0, 100.0], 10.0, 0.5, 1.0);
        assert!(matches!(
            qbts_acceptance_probability(&spec, &spec, 0, 1, 0.2, ApMethod::AnalyticIndependent),
            Err(QbtsError::AnalyticNeedsIndependence(_))
        ));
    }

    #[test]
    fn monte_carlo_ap_matches_analytic_under_independence() {
        let spec = bivariate([50.0, 100.0], 10.0, 0.0, 1.0);
        let est = qbts_acceptance_probability(
            &spec,
            &spec,
            0,
            1,
            0.2,
            ApMethod::MonteCarlo {
                draws: 200_000,
                seed: 42,
            },
        )
        .unwrap();
        let se = est.std_err.unwrap();
        assert!((est.ap - 0.64).abs() < 3.0 * se, "ap {} se {se}", est.ap);
    }

    #[test]
    fn correlation_lowers_acceptance_probability() {
        let flat = bivariate([90.0, 100.0], 20.0, 0.0, 1.0);
        let corr = bivariate([90.0, 100.0], 20.0, 0.8, 1.0);
        let mc = |spec: &GaussianPriceSpec, seed| {
            qbts_acceptance_probability(
                spec,
                spec,
                0,
                1,
                0.2,
                ApMethod::MonteCarlo {
                    draws: 200_000,
                    seed,
                },
            )
            .unwrap()
        };
        let (a, b) = (mc(&flat, 1), mc(&corr, 2));
        let gap_se = (a.std_err.unwrap().powi(2) + b.std_err.unwrap().powi(2)).sqrt();
        assert!(a.ap - b.ap > 3.0 * gap_se, "{} vs {}", a.ap, b.ap);
    }

    #[test]
    fn alpha_to_zero_recovers_unconditional_spread() {
        let spec = bivariate([50.0, 100.0], 10.0, 0.0, 1.0);
        let config = unit_config(0.95);
        let profit = qbts_expected_profit(
            &spec,
            &spec,
            0,
            1,
            1e-9,
            &config,
            ApMethod::AnalyticIndependent,
        )
        .unwrap();
        let unconditional = -(1.0 / 0.95) * 50.0 + 0.95 * 100.0;
        assert!(
            (profit.expected_profit - unconditional).abs() < 1e-3,
            "{} vs {unconditional}",
            profit.expected_profit
        );
    }

    #[test]
    fn decomposition_matches_direct_monte_carlo_mean() {
        let truth = bivariate([50.0, 100.0], 10.0, 0.0, 1.0);
        let forecast = bivariate([50.0, 100.0], 10.0, 0.0, 1.5);
        let config = unit_config(1.0);
        let analytic = qbts_expected_profit(
            &truth,
            &forecast,
            0,
            1,
            0.3,
            &config,
            ApMethod::AnalyticIndependent,
        )
        .unwrap();
        let mc = qbts_expected_profit(
            &truth,
            &forecast,
            0,
            1,
            0.3,
            &config,
            ApMethod::MonteCarlo {
                draws: 300_000,
                seed: 9,
            },
        )
        .unwrap();
        assert!((analytic.ap * analytic.ep.unwrap() - analytic.expected_profit).abs() < 1e-12);
        assert!(
            (analytic.expected_profit - mc.expected_profit).abs() < 3.0 * mc.std_err.unwrap()
        );
    }

    #[test]
    fn ap_monotone_in_alpha() {
        let spec = bivariate([50.0, 100.0], 10.0, 0.0, 1.0);
        let mut last = f64::INFINITY;
        for i in 1..10 {
            let alpha = i as f64 * 0.05;
            let ap = qbts_acceptance_probability(
                &spec,
                &spec,
                0,
                1,
                alpha,
                ApMethod::AnalyticIndependent,
            )
            .unwrap()
            .ap;
            assert!(ap <= last + 1e-12);
            last = ap;
        }
    }

    #[test]
    fn empirical_ap_boundary_behaviour() {
        let ens = ScenarioEnsemble::new(
            "d",
            (0..10).map(|i| vec![i as f64, 100.0 - i as f64]).collect(),
        )
        .unwrap();
        let mut bid = QbtsBid {
            buy_hour: 0,
            sell_hour: 1,
            buy_limit: 100.0,
            sell_limit: 0.0,
            buy_volume: 1.0,
            sell_volume: 1.0,
            alpha: 0.1,
        };
        assert_eq!(empirical_acceptance_probability(&ens, &bid).unwrap(), 1.0);
        // Limits at the extreme order statistics: only the single most
        // favorable member can clear them.
        bid.buy_limit = 0.0; // min of hour 0
        bid.sell_limit = 100.0; // max of hour 1
        assert_eq!(
            empirical_acceptance_probability(&ens, &bid).unwrap(),
            1.0 / 10.0
        );
        bid.buy_limit = -1.0;
        assert_eq!(empirical_acceptance_probability(&ens, &bid).unwrap(), 0.0);
    }

    #[test]
    fn grid_runner_is_deterministic_and_validates() {
        let spec = SimGridSpec {
            panels: vec![PanelSpec {
                mu_b: 50.0,
                mu_s: 100.0,
                sigma: 10.0,
            }],
            rhos: vec![0.0],
            dispersions: vec![1.0, 1.5],
            alphas: vec![0.2],
            draws: 2_000,
            config: unit_config(1.0),
        };
        let a = run_simulation_grid(&spec, 7, Parallelism::Sequential).unwrap();
        let b = run_simulation_grid(&spec, 7, Parallelism::max_available()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);

        let no_reference = SimGridSpec {
            dispersions: vec![1.5],
            ..spec.clone()
        };
        assert!(run_simulation_grid(&no_reference, 7, Parallelism::Sequential).is_err());

        let degenerate = SimGridSpec {
            panels: vec![PanelSpec {
                mu_b: 1.0,
                mu_s: 2.0,
                sigma: 0.0,
            }],
            ..spec
        };
        assert!(run_simulation_grid(&degenerate, 7, Parallelism::Sequential).is_err());
    }
}
