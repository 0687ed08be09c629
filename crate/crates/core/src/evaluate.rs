//! Backtest orchestration, economic performance measures and
//! decision-quality cross-scoring, plus the constructions showing that
//! battery objectives alone cannot strictly separate forecasts.

use crate::domain::{
    realized_return, BatteryConfig, BidSchedule, DomainError, PriceDay, RiskSpec, ScenarioEnsemble,
    ScoreSeries,
};
use crate::optimize::{
    dp_optimize, milp_optimize, predicted_objective_distribution, risk_measure, OptimizeError,
    SolverOptions,
};
use crate::parallel::{map_indexed, Parallelism};
use crate::scoring::{dm_test, pinball_and_joint_var_cvar, DmHypothesis, DmOutcome, ScoringError};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("model {model} is missing forecasts for dates: {missing:?}")]
    MissingDates { model: String, missing: Vec<String> },
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Per-day forecasts of one model, matched to price days by date tag.
#[derive(Debug, Clone)]
pub struct ModelForecasts {
    pub name: String,
    pub ensembles: Vec<ScenarioEnsemble>,
}

/// Which optimizer the backtest runs per day.
#[derive(Debug, Clone)]
pub enum OptimizerChoice {
    SinglePair,
    Milp(SolverOptions),
}

#[derive(Debug, Clone)]
pub struct BacktestRecord {
    pub date_tag: String,
    pub model: String,
    pub schedule: BidSchedule,
    /// Risk-measure value of the schedule under the model's own forecast.
    pub predicted_objective: f64,
    /// The model's predicted revenue sample for its schedule (one value
    /// per ensemble member); the basis for per-day VaR forecasts.
    pub predicted_distribution: Vec<f64>,
    pub realized_return: f64,
    pub n_bids: usize,
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub models: Vec<String>,
    pub dates: Vec<String>,
    /// Records in model-major, then date order.
    pub records: Vec<BacktestRecord>,
    pub config: BatteryConfig,
    pub risk: RiskSpec,
}

impl BacktestResult {
    pub fn records_for<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a BacktestRecord> + 'a {
        self.records.iter().filter(move |r| r.model == model)
    }

    fn model_index(&self, model: &str) -> Result<usize, EvaluateError> {
        self.models
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| EvaluateError::UnknownModel(model.to_string()))
    }

    fn record(&self, model_idx: usize, date_idx: usize) -> &BacktestRecord {
        &self.records[model_idx * self.dates.len() + date_idx]
    }
}

/// Optimize, settle and book every (model, day) pair.
pub fn run_backtest(
    models: &[ModelForecasts],
    prices: &[PriceDay],
    config: &BatteryConfig,
    risk: &RiskSpec,
    optimizer: &OptimizerChoice,
    mode: Parallelism,
) -> Result<BacktestResult, EvaluateError> {
    config.validate()?;
    risk.validate()?;
    if models.is_empty() || prices.is_empty() {
        return Err(EvaluateError::BadInput("need at least one model and one day".into()));
    }

    // Align forecasts to price days by date tag.
    let mut aligned: Vec<Vec<&ScenarioEnsemble>> = Vec::with_capacity(models.len());
    for model in models {
        let by_date: BTreeMap<&str, &ScenarioEnsemble> = model
            .ensembles
            .iter()
            .map(|e| (e.date_tag(), e))
            .collect();
        let mut missing = Vec::new();
        let mut row = Vec::with_capacity(prices.len());
        for day in prices {
            match by_date.get(day.date_tag()) {
                Some(e) => row.push(*e),
                None => missing.push(day.date_tag().to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(EvaluateError::MissingDates {
                model: model.name.clone(),
                missing,
            });
        }
        aligned.push(row);
    }

    let n_days = prices.len();
    let total = models.len() * n_days;
    let outcomes = map_indexed(mode, total, |idx| -> Result<BacktestRecord, EvaluateError> {
        let (mi, di) = (idx / n_days, idx % n_days);
        let forecast = aligned[mi][di];
        let day = &prices[di];
        let schedule = match optimizer {
            OptimizerChoice::SinglePair => dp_optimize(forecast, config, risk)?.schedule,
            OptimizerChoice::Milp(options) => {
                milp_optimize(forecast, config, risk, options)?.schedule
            }
        };
        let predicted_distribution =
            predicted_objective_distribution(forecast, &schedule, config)?;
        let predicted_objective = risk_measure(&predicted_distribution, risk)?.value;
        Ok(BacktestRecord {
            date_tag: day.date_tag().to_string(),
            model: models[mi].name.clone(),
            n_bids: schedule.bid_count(),
            realized_return: realized_return(&schedule, config, day)?,
            predicted_objective,
            predicted_distribution,
            schedule,
        })
    });
    let records = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    Ok(BacktestResult {
        models: models.iter().map(|m| m.name.clone()).collect(),
        dates: prices.iter().map(|d| d.date_tag().to_string()).collect(),
        records,
        config: *config,
        risk: *risk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconomicMeasures {
    pub total_profit: f64,
    /// Mean over standard deviation of daily returns; undefined for
    /// constant returns.
    pub sharpe: Option<f64>,
    /// Fraction of days whose realized return fell below the model's own
    /// per-day predicted VaR at `alpha_for_var`.
    pub var_exceedance: f64,
    pub no_bid_days: usize,
}

/// Economic summary of one model's backtest.
///
/// The per-day VaR forecast is the empirical VaR of the model's own
/// predicted revenue distribution for that day's schedule; for a
/// well-calibrated model the exceedance ratio is close to
/// `1 - alpha_for_var`.
pub fn economic_measures(
    result: &BacktestResult,
    model: &str,
    alpha_for_var: f64,
) -> Result<EconomicMeasures, EvaluateError> {
    let spec = RiskSpec::CVaR { alpha: alpha_for_var };
    spec.validate()?;
    result.model_index(model)?;
    let records: Vec<&BacktestRecord> = result.records_for(model).collect();
    if records.len() < 2 {
        return Err(EvaluateError::BadInput("need at least two days".into()));
    }
    let n = records.len() as f64;
    let returns: Vec<f64> = records.iter().map(|r| r.realized_return).collect();
    let total_profit = returns.iter().sum::<f64>();
    let mean = total_profit / n;
    let sd = (returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let sharpe = (sd > 0.0).then(|| mean / sd);

    let mut exceedances = 0usize;
    for record in &records {
        let var = risk_measure(&record.predicted_distribution, &spec)?
            .var
            .expect("CVaR risk always reports a VaR");
        if record.realized_return < var {
            exceedances += 1;
        }
    }
    Ok(EconomicMeasures {
        total_profit,
        sharpe,
        var_exceedance: exceedances as f64 / n,
        no_bid_days: records.iter().filter(|r| r.n_bids == 0).count(),
    })
}

/// Scoring rule applied to each cross-score cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossScoreRule {
    /// Joint (VaR, CVaR) score; requires a CVaR risk spec.
    JointVarCvar,
    /// Pinball score of the VaR leg only; requires a CVaR risk spec.
    Pinball,
    /// Squared error between predicted mean objective and realized return;
    /// the ExpectedProfit extension.
    SquaredError,
}

#[derive(Debug, Clone)]
pub struct CrossScoreMatrix {
    pub models: Vec<String>,
    /// `scores[i][m]`: model i's forecasts scored on model m's bids,
    /// averaged over days.
    pub scores: Vec<Vec<f64>>,
    /// One-sided DM outcome of cell (i, m) against the diagonal (m, m)
    /// under H0 "m scores at least as well on its own bids"; `None` on the
    /// diagonal.
    pub dm: Vec<Vec<Option<DmOutcome>>>,
}

/// Evaluate every model's predicted objective distribution on every
/// model's optimal bids.
///
/// For cell (i, m) and each day: settle model m's schedule against model
/// i's forecast ensemble, extract the functional demanded by `rule`, score
/// it against m's realized return, and average; then DM-test each
/// off-diagonal cell against the diagonal of its column.
pub fn cross_score(
    models: &[ModelForecasts],
    result: &BacktestResult,
    rule: CrossScoreRule,
) -> Result<CrossScoreMatrix, EvaluateError> {
    let alpha_tail = match (rule, &result.risk) {
        (CrossScoreRule::JointVarCvar | CrossScoreRule::Pinball, RiskSpec::CVaR { alpha }) => {
            Some(1.0 - alpha)
        }
        (CrossScoreRule::SquaredError, RiskSpec::ExpectedProfit) => None,
        (rule, risk) => {
            return Err(EvaluateError::BadInput(format!(
                "cross-score rule {rule:?} incompatible with risk {risk:?}"
            )))
        }
    };
    if models.len() != result.models.len()
        || models
            .iter()
            .zip(&result.models)
            .any(|(m, name)| &m.name != name)
    {
        return Err(EvaluateError::BadInput(
            "forecast set does not match the backtest's model set".into(),
        ));
    }
    // Forecasts by (model, date) in backtest order.
    let mut aligned: Vec<Vec<&ScenarioEnsemble>> = Vec::new();
    for model in models {
        let by_date: BTreeMap<&str, &ScenarioEnsemble> =
            model.ensembles.iter().map(|e| (e.date_tag(), e)).collect();
        let mut row = Vec::new();
        let mut missing = Vec::new();
        for date in &result.dates {
            match by_date.get(date.as_str()) {
                Some(e) => row.push(*e),
                None => missing.push(date.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(EvaluateError::MissingDates {
                model: model.name.clone(),
                missing,
            });
        }
        aligned.push(row);
    }

    let k = models.len();
    let n_days = result.dates.len();
    // Per-day scores for every (row, column) pair.
    let mut daily = vec![vec![vec![0.0; n_days]; k]; k];
    for m in 0..k {
        for (di, _) in result.dates.iter().enumerate() {
            let record = result.record(m, di);
            for (i, forecasts) in aligned.iter().enumerate() {
                let dist = predicted_objective_distribution(
                    forecasts[di],
                    &record.schedule,
                    &result.config,
                )?;
                let score = match alpha_tail {
                    Some(tail) => {
                        let rv = risk_measure(&dist, &result.risk)?;
                        let joint = pinball_and_joint_var_cvar(
                            rv.var.expect("CVaR risk"),
                            rv.value,
                            record.realized_return,
                            tail,
                        )?;
                        match rule {
                            CrossScoreRule::JointVarCvar => joint.joint,
                            CrossScoreRule::Pinball => joint.pinball,
                            CrossScoreRule::SquaredError => unreachable!(),
                        }
                    }
                    None => {
                        let mean = risk_measure(&dist, &RiskSpec::ExpectedProfit)?.value;
                        let err = mean - record.realized_return;
                        err * err
                    }
                };
                daily[i][m][di] = score;
            }
        }
    }

    let scores: Vec<Vec<f64>> = daily
        .iter()
        .map(|row| {
            row.iter()
                .map(|cell| cell.iter().sum::<f64>() / n_days as f64)
                .collect()
        })
        .collect();
    let mut dm = vec![vec![None; k]; k];
    for i in 0..k {
        for m in 0..k {
            if i == m {
                continue;
            }
            let a = ScoreSeries::new(
                models[i].name.clone(),
                "cross",
                daily[i][m].clone(),
                true,
            )?;
            let b = ScoreSeries::new(
                models[m].name.clone(),
                "cross",
                daily[m][m].clone(),
                true,
            )?;
            dm[i][m] = Some(dm_test(&a, &b, DmHypothesis::ANoBetterThanB, 0)?);
        }
    }
    Ok(CrossScoreMatrix {
        models: result.models.clone(),
        scores,
        dm,
    })
}

/// Distort a reference path while preserving its rank ordering and its
/// extreme hours' values: interior hours move toward rank-spaced targets
/// strictly inside the (min, max) interval.
///
/// With `amplitude = 0` the reference is returned unchanged; any amplitude
/// leaves every single-pair expected-revenue objective untouched even
/// though the forecast itself degrades.
pub fn same_rank_forecast(reference: &[f64], amplitude: f64) -> Result<Vec<f64>, EvaluateError> {
    let n = reference.len();
    if n < 2 {
        return Err(EvaluateError::BadInput("need at least two hours".into()));
    }
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(EvaluateError::BadInput(format!(
            "amplitude {amplitude} outside [0, 1]"
        )));
    }
    let lo = reference.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(EvaluateError::BadInput("constant reference path".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        reference[a]
            .partial_cmp(&reference[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut out = reference.to_vec();
    for (pos, &h) in order.iter().enumerate() {
        if pos == 0 || pos == n - 1 {
            continue; // extremes keep their values
        }
        let target = lo + (hi - lo) * pos as f64 / (n - 1) as f64;
        out[h] = (1.0 - amplitude) * reference[h] + amplitude * target;
    }
    Ok(out)
}

/// Variance of the coupled-trade revenue `-(1/eta) P_b + eta P_s` for unit
/// capacity under a bivariate Gaussian price law.
pub fn pair_revenue_variance(sigma_b: f64, sigma_s: f64, rho: f64, eta: f64) -> f64 {
    let inv_eta = 1.0 / eta;
    inv_eta * inv_eta * sigma_b * sigma_b + eta * eta * sigma_s * sigma_s
        - 2.0 * rho * sigma_b * sigma_s
}

/// Misspecified buy-hour standard deviation that leaves the bid-revenue
/// variance identical to the truth, given chosen forecast values for the
/// sell-hour standard deviation and the correlation.
///
/// Solves the quadratic obtained from setting the revenue-variance
/// difference to zero; among positive roots the one closest to the true
/// `sigma_b` is returned (so truthful inputs recover `sigma_b` exactly).
pub fn covariance_twin(
    sigma_b: f64,
    sigma_s: f64,
    rho: f64,
    eta: f64,
    sigma_s_hat: f64,
    rho_hat: f64,
) -> Result<f64, EvaluateError> {
    for (name, v) in [("sigma_b", sigma_b), ("sigma_s", sigma_s), ("sigma_s_hat", sigma_s_hat)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(EvaluateError::BadInput(format!("{name} must be positive")));
        }
    }
    if !(0.0 < eta && eta <= 1.0) {
        return Err(EvaluateError::BadInput(format!("eta {eta} outside (0, 1]")));
    }
    for (name, r) in [("rho", rho), ("rho_hat", rho_hat)] {
        if !(-1.0..=1.0).contains(&r) {
            return Err(EvaluateError::BadInput(format!("{name} {r} outside [-1, 1]")));
        }
    }
    let inv_eta2 = 1.0 / (eta * eta);
    // inv_eta2 * x^2 - 2 rho_hat sigma_s_hat x - c = 0 with
    // c = inv_eta2 sigma_b^2 + eta^2 (sigma_s^2 - sigma_s_hat^2)
    //     - 2 rho sigma_b sigma_s.
    let c = inv_eta2 * sigma_b * sigma_b
        + eta * eta * (sigma_s * sigma_s - sigma_s_hat * sigma_s_hat)
        - 2.0 * rho * sigma_b * sigma_s;
    let half_b = rho_hat * sigma_s_hat;
    let discriminant = half_b * half_b + inv_eta2 * c;
    if discriminant < 0.0 {
        return Err(EvaluateError::BadInput(
            "no real solution in this parameter region".into(),
        ));
    }
    let sqrt_d = discriminant.sqrt();
    let roots = [
        (half_b + sqrt_d) / inv_eta2,
        (half_b - sqrt_d) / inv_eta2,
    ];
    roots
        .iter()
        .filter(|&&r| r > 0.0)
        .min_by(|a, b| {
            (*a - sigma_b)
                .abs()
                .partial_cmp(&(*b - sigma_b).abs())
                .unwrap()
        })
        .copied()
        .ok_or_else(|| {
            EvaluateError::BadInput("no positive solution in this parameter region".into())
        })
}

/// Backtest results file: a config-hash comment line, then
/// `date,model,predicted_objective,realized_return,n_bids`.
pub fn write_backtest_csv(
    path: &std::path::Path,
    result: &BacktestResult,
    config_hash: &str,
) -> Result<(), EvaluateError> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| EvaluateError::Csv(e.to_string()))?,
    );
    writeln!(file, "# config_sha256={config_hash}").map_err(|e| EvaluateError::Csv(e.to_string()))?;
    writeln!(file, "date,model,predicted_objective,realized_return,n_bids")
        .map_err(|e| EvaluateError::Csv(e.to_string()))?;
    for record in &result.records {
        writeln!(
            file,
            "{},{},{:?},{:?},{}",
            record.date_tag,
            record.model,
            record.predicted_objective,
            record.realized_return,
            record.n_bids
        )
        .map_err(|e| EvaluateError::Csv(e.to_string()))?;
    }
    Ok(())
}

/// Cross-score matrix file: `row_model,col_model,score,dm_stat,dm_p`;
/// diagonal and degenerate cells leave the DM fields empty.
pub fn write_cross_score_csv(
    path: &std::path::Path,
    matrix: &CrossScoreMatrix,
) -> Result<(), EvaluateError> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| EvaluateError::Csv(e.to_string()))?,
    );
    writeln!(file, "row_model,col_model,score,dm_stat,dm_p")
        .map_err(|e| EvaluateError::Csv(e.to_string()))?;
    for (i, row_model) in matrix.models.iter().enumerate() {
        for (m, col_model) in matrix.models.iter().enumerate() {
            let (stat, p) = match matrix.dm[i][m] {
                Some(DmOutcome::Statistic { statistic, p_value }) => {
                    (format!("{statistic:?}"), format!("{p_value:?}"))
                }
                Some(DmOutcome::Degenerate) | None => (String::new(), String::new()),
            };
            writeln!(
                file,
                "{},{},{:?},{},{}",
                row_model, col_model, matrix.scores[i][m], stat, p
            )
            .map_err(|e| EvaluateError::Csv(e.to_string()))?;
        }
    }
    Ok(())
}
