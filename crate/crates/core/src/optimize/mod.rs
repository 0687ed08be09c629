//! Scenario-based battery optimizers: the single-pair enumeration (DP)
//! approach, the full mixed-integer program with CVaR linearization, and a
//! brute-force oracle used by the test suites.

pub mod external;
mod milp;
pub mod simplex;

use crate::domain::{
    schedule_return_against, validate_bid_schedule, BatteryConfig, BidSchedule, DomainError,
    RiskSpec, ScenarioEnsemble, FEASIBILITY_TOL_MWH,
};
use thiserror::Error;

pub use external::ExternalSolverCmd;
pub use milp::{write_lp_file, write_lp_file_for};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("risk measure on empty sample")]
    EmptySample,
    #[error("dp_optimize covers only single buy/sell pairs: {0}; use milp_optimize")]
    DpUnsupported(String),
    #[error("enumeration budget exceeded: {candidates} candidates > {budget}")]
    EnumerationBudget { candidates: u128, budget: u128 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("external solver: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Value of a risk measure on an empirical return sample; for CVaR the
/// threshold quantile (VaR) is reported alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub value: f64,
    pub var: Option<f64>,
}

/// Empirical plug-in risk measure.
///
/// `ExpectedProfit` is the sample mean. `CVaR { alpha }` is the mean of the
/// worst `(1 - alpha)` fraction of outcomes with fractional weight on the
/// boundary order statistic, so that the value coincides exactly with the
/// Rockafellar-Uryasev LP for any sample size: with `k = ceil((1-alpha)*n)`
/// and integer `(1-alpha)*n` this is the mean of the `k` smallest values,
/// and the VaR is the `k`-th smallest value.
pub fn risk_measure(returns: &[f64], spec: &RiskSpec) -> Result<RiskValue, OptimizeError> {
    if returns.is_empty() {
        return Err(OptimizeError::EmptySample);
    }
    spec.validate()?;
    match spec {
        RiskSpec::ExpectedProfit => Ok(RiskValue {
            value: returns.iter().sum::<f64>() / returns.len() as f64,
            var: None,
        }),
        RiskSpec::CVaR { alpha } => {
            let mut sorted = returns.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let tail = (1.0 - alpha) * n as f64;
            let k = ((tail - 1e-9).ceil() as usize).clamp(1, n);
            let boundary_weight = tail - (k - 1) as f64;
            let head: f64 = sorted[..k - 1].iter().sum();
            let cvar = (head + boundary_weight * sorted[k - 1]) / tail;
            Ok(RiskValue {
                value: cvar,
                var: Some(sorted[k - 1]),
            })
        }
    }
}

/// Optimal value of the Rockafellar-Uryasev inner LP
/// `max_{zeta,u} zeta - 1/((1-alpha) M) * sum u_m  s.t.  u_m >= zeta - R_m`
/// for a fixed return sample, solved with the embedded simplex.
///
/// Agrees with [`risk_measure`] under the CVaR spec; exposed as a
/// diagnostic for the linearization used inside [`milp_optimize`].
pub fn cvar_lp_value(returns: &[f64], alpha: f64) -> Result<f64, OptimizeError> {
    if returns.is_empty() {
        return Err(OptimizeError::EmptySample);
    }
    RiskSpec::CVaR { alpha }.validate()?;
    let m = returns.len();
    let beta = 1.0 - alpha;
    // Shift zeta by the sample minimum so the all-slack simplex start is
    // feasible; the shift is undone on the optimal value.
    let shift = returns.iter().cloned().fold(f64::INFINITY, f64::min);

    let n_vars = 1 + m;
    let mut objective = vec![0.0; n_vars];
    objective[0] = 1.0;
    for j in 0..m {
        objective[1 + j] = -1.0 / (beta * m as f64);
    }
    let mut lower = vec![0.0; n_vars];
    let mut upper = vec![f64::INFINITY; n_vars];
    lower[0] = f64::NEG_INFINITY;
    upper[0] = f64::INFINITY;
    let rows = returns
        .iter()
        .enumerate()
        .map(|(i, &r)| simplex::Row {
            coeffs: vec![(0, 1.0), (1 + i, -1.0)],
            cmp: simplex::RowCmp::Le,
            rhs: r - shift,
        })
        .collect();

    let lp = simplex::LinearProgram {
        n_vars,
        objective,
        lower,
        upper,
        rows,
    };
    let sol = simplex::solve(&lp);
    if sol.status != simplex::LpStatus::Optimal {
        return Err(OptimizeError::Solver(format!(
            "CVaR inner LP terminated with {:?}",
            sol.status
        )));
    }
    Ok(sol.objective + shift)
}

/// Risk-measure values for every ordered hour pair `b < s`, plus the
/// no-action value.
#[derive(Debug, Clone)]
pub struct PairValueTable {
    hours: usize,
    values: Vec<Option<f64>>,
    no_action: f64,
}

impl PairValueTable {
    pub fn hours(&self) -> usize {
        self.hours
    }

    /// Value of the pair `(b, s)`; `None` when `b >= s`.
    pub fn value(&self, b: usize, s: usize) -> Option<f64> {
        self.values[b * self.hours + s]
    }

    pub fn no_action_value(&self) -> f64 {
        self.no_action
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub schedule: BidSchedule,
    pub objective: f64,
    pub table: PairValueTable,
}

/// Single-pair enumeration: evaluate the risk measure of the fixed-volume
/// trade for every buy/sell pair `b < s` and pick the best, with no-action
/// as fallback incumbent.
///
/// Covers only the one-buy/one-sell, full-volume setting (`n_buy = n_sell =
/// 1`, `xi >= kappa`); anything richer is directed to [`milp_optimize`].
pub fn dp_optimize(
    forecast: &ScenarioEnsemble,
    config: &BatteryConfig,
    risk: &RiskSpec,
) -> Result<DpSolution, OptimizeError> {
    config.validate()?;
    risk.validate()?;
    if config.n_buy != 1 || config.n_sell != 1 {
        return Err(OptimizeError::DpUnsupported(format!(
            "n_buy = {}, n_sell = {}",
            config.n_buy, config.n_sell
        )));
    }
    if config.xi < config.kappa - FEASIBILITY_TOL_MWH {
        return Err(OptimizeError::DpUnsupported(format!(
            "duration {} > 1 hour (xi {} < kappa {})",
            config.duration(),
            config.xi,
            config.kappa
        )));
    }
    let hours = forecast.hours();
    if hours < 2 {
        return Err(DomainError::Invalid {
            what: "forecast",
            reason: "needs at least two hours".into(),
        }
        .into());
    }

    let inv_eta = 1.0 / config.eta;
    let buy_leg = inv_eta * config.kappa;
    let sell_leg = config.eta * config.kappa;
    // Scenario returns settle the candidate schedule (market volumes
    // (1/eta) kappa and eta kappa) with the same arithmetic as
    // realized_return, so DP values are exactly comparable with the MILP
    // objective and the booked backtest returns.
    let buy_cash = inv_eta * buy_leg;
    let sell_cash = config.eta * sell_leg;

    let mut values = vec![None; hours * hours];
    let mut best: Option<(usize, usize, f64)> = None;
    let mut returns = vec![0.0; forecast.members()];
    for b in 0..hours {
        for s in (b + 1)..hours {
            for (m, path) in forecast.paths().iter().enumerate() {
                returns[m] = -buy_cash * path[b] + sell_cash * path[s];
            }
            let value = risk_measure(&returns, risk)?.value;
            values[b * hours + s] = Some(value);
            if value > best.map_or(0.0, |(_, _, v)| v) {
                best = Some((b, s, value));
            }
        }
    }

    let table = PairValueTable {
        hours,
        values,
        no_action: 0.0,
    };
    let (schedule, objective) = match best {
        Some((b, s, value)) => {
            let mut buy = vec![0.0; hours];
            let mut sell = vec![0.0; hours];
            buy[b] = buy_leg;
            sell[s] = sell_leg;
            (BidSchedule::unlimited(buy, sell)?, value)
        }
        None => (BidSchedule::zero(hours), 0.0),
    };
    Ok(DpSolution {
        schedule,
        objective,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    GapTerminated,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub schedule: BidSchedule,
    /// Predicted risk-measure value of `schedule` under the forecast.
    pub objective: f64,
    pub status: MilpStatus,
    /// Relative optimality gap; zero for proven optima.
    pub gap: f64,
}

/// Which engine solves the mixed-integer program.
#[derive(Debug, Clone)]
pub enum SolverBackend {
    /// Built-in bounded-variable simplex with best-first branch-and-bound.
    Embedded,
    /// File-based bridge to an external MILP solver binary.
    External(ExternalSolverCmd),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub backend: SolverBackend,
    /// Relative MIP gap at which the search stops and reports optimality.
    pub mip_gap: f64,
    /// Branch-and-bound node budget; exhausting it yields `GapTerminated`.
    pub node_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            backend: SolverBackend::Embedded,
            mip_gap: 1e-6,
            node_limit: 200_000,
        }
    }
}

/// Maximize the risk measure over bid schedules subject to the full
/// constraint set (power caps, bid-count limits via binaries, no
/// simultaneous buy/sell, storage balance, terminal emptiness, cycle cap).
///
/// `ExpectedProfit` reduces to an LP on the scenario-mean prices; `CVaR`
/// uses the Rockafellar-Uryasev linearization over scenarios.
pub fn milp_optimize(
    forecast: &ScenarioEnsemble,
    config: &BatteryConfig,
    risk: &RiskSpec,
    options: &SolverOptions,
) -> Result<MilpSolution, OptimizeError> {
    config.validate()?;
    risk.validate()?;
    let model = milp::build_model(forecast, config, risk);
    let mut solution = match &options.backend {
        SolverBackend::Embedded => milp::branch_and_bound(&model, options)?,
        SolverBackend::External(cmd) => external::solve(&model, cmd)?,
    };
    if solution.status != MilpStatus::Infeasible {
        // Report the plug-in risk value of the extracted schedule so the
        // objective is exactly comparable with dp_optimize and the oracle.
        let dist = predicted_objective_distribution(forecast, &solution.schedule, config)?;
        solution.objective = risk_measure(&dist, risk)?.value;
        let report = validate_bid_schedule(&solution.schedule, config)?;
        if !report.is_ok() {
            return Err(OptimizeError::Solver(format!(
                "solver returned an infeasible schedule: {}",
                report
                    .violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
    }
    Ok(solution)
}

/// Exhaustive search over schedules on a per-hour volume grid; the testing
/// oracle for the MILP. Each hour independently idles, buys or sells one of
/// the grid volumes; infeasible combinations are discarded by the schedule
/// validator.
pub fn brute_force_optimize(
    forecast: &ScenarioEnsemble,
    config: &BatteryConfig,
    risk: &RiskSpec,
    volume_grid: &[f64],
) -> Result<MilpSolution, OptimizeError> {
    config.validate()?;
    risk.validate()?;
    if volume_grid.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(DomainError::Invalid {
            what: "volume_grid",
            reason: "grid volumes must be positive".into(),
        }
        .into());
    }
    let hours = forecast.hours();
    let choices = 1 + 2 * volume_grid.len();
    let budget: u128 = 10_000_000;
    let candidates = (choices as u128).pow(hours as u32);
    if candidates > budget {
        return Err(OptimizeError::EnumerationBudget { candidates, budget });
    }

    let mut best: Option<(f64, BidSchedule)> = None;
    let mut assignment = vec![0usize; hours];
    let mut returns = vec![0.0; forecast.members()];
    loop {
        let mut buy = vec![0.0; hours];
        let mut sell = vec![0.0; hours];
        for (h, &c) in assignment.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let idx = c - 1;
            if idx < volume_grid.len() {
                buy[h] = volume_grid[idx];
            } else {
                sell[h] = volume_grid[idx - volume_grid.len()];
            }
        }
        let schedule = BidSchedule::unlimited(buy, sell)?;
        if validate_bid_schedule(&schedule, config)?.is_ok() {
            for (m, path) in forecast.paths().iter().enumerate() {
                returns[m] = schedule_return_against(&schedule, config, path);
            }
            let value = risk_measure(&returns, risk)?.value;
            let replace = match &best {
                None => true,
                Some((bv, bs)) => {
                    value > bv + 1e-12
                        || ((value - bv).abs() <= 1e-9
                            && schedule
                                .canonical_key()
                                .partial_cmp(&bs.canonical_key())
                                .map_or(false, |o| o == std::cmp::Ordering::Less))
                }
            };
            if replace {
                best = Some((value, schedule));
            }
        }
        // Next assignment in mixed radix.
        let mut h = 0;
        loop {
            if h == hours {
                let (objective, schedule) = best.expect("zero schedule is always feasible");
                return Ok(MilpSolution {
                    schedule,
                    objective,
                    status: MilpStatus::Optimal,
                    gap: 0.0,
                });
            }
            assignment[h] += 1;
            if assignment[h] < choices {
                break;
            }
            assignment[h] = 0;
            h += 1;
        }
    }
}

/// Per-member settlement of a fixed schedule against each scenario path:
/// the empirical predicted distribution of the schedule's revenue.
pub fn predicted_objective_distribution(
    forecast: &ScenarioEnsemble,
    schedule: &BidSchedule,
    config: &BatteryConfig,
) -> Result<Vec<f64>, OptimizeError> {
    if schedule.hours() != forecast.hours() {
        return Err(DomainError::DimensionMismatch {
            what: "schedule vs forecast",
            expected: forecast.hours(),
            got: schedule.hours(),
        }
        .into());
    }
    Ok(forecast
        .paths()
        .iter()
        .map(|path| schedule_return_against(schedule, config, path))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PriceDay;

    fn cfg(kappa: f64, eta: f64, xi: f64, cycles: u32, n: usize) -> BatteryConfig {
        BatteryConfig {
            kappa,
            eta,
            xi,
            cycles,
            n_buy: n,
            n_sell: n,
        }
    }

    #[test]
    fn risk_measure_examples() {
        let sample: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let rv = risk_measure(&sample, &RiskSpec::CVaR { alpha: 0.8 }).unwrap();
        assert!((rv.value - 1.5).abs() < 1e-12);
        assert_eq!(rv.var, Some(2.0));

        let constant = vec![3.5; 7];
        for spec in [
            RiskSpec::ExpectedProfit,
            RiskSpec::CVaR { alpha: 0.5 },
            RiskSpec::CVaR { alpha: 0.9 },
        ] {
            assert!((risk_measure(&constant, &spec).unwrap().value - 3.5).abs() < 1e-12);
        }

        let pm = vec![-1.0, 1.0];
        assert_eq!(
            risk_measure(&pm, &RiskSpec::ExpectedProfit).unwrap().value,
            0.0
        );
        assert!(risk_measure(&[], &RiskSpec::ExpectedProfit).is_err());
    }

    #[test]
    fn cvar_fractional_tail_matches_lp() {
        // Non-integer tail: n = 3, alpha = 0.75 -> tail mass 0.75 of one
        // observation.
        let sample = vec![5.0, -2.0, 1.0];
        let plug = risk_measure(&sample, &RiskSpec::CVaR { alpha: 0.75 })
            .unwrap()
            .value;
        let lp = cvar_lp_value(&sample, 0.75).unwrap();
        assert!((plug - lp).abs() < 1e-9, "plug {plug} vs lp {lp}");
        assert!((plug - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn dp_single_deterministic_scenario() {
        let ens = ScenarioEnsemble::new("d", vec![vec![10.0, 50.0]]).unwrap();
        let sol = dp_optimize(&ens, &cfg(10.0, 1.0, 10.0, 1, 1), &RiskSpec::ExpectedProfit).unwrap();
        assert!((sol.objective - 400.0).abs() < 1e-9);
        assert_eq!(sol.schedule.buy()[0], 10.0);
        assert_eq!(sol.schedule.sell()[1], 10.0);
        assert_eq!(sol.table.value(0, 1), Some(400.0));
        assert_eq!(sol.table.value(1, 0), None);
        assert_eq!(sol.table.no_action_value(), 0.0);
    }

    #[test]
    fn dp_monotone_decreasing_prices_no_action() {
        let ens = ScenarioEnsemble::new("d", vec![vec![50.0, 40.0, 30.0, 20.0]]).unwrap();
        for eta in [1.0, 0.9] {
            let sol =
                dp_optimize(&ens, &cfg(10.0, eta, 10.0, 1, 1), &RiskSpec::ExpectedProfit).unwrap();
            assert_eq!(sol.objective, 0.0);
            assert!(sol.schedule.is_zero());
        }
    }

    #[test]
    fn dp_cvar_two_scenarios_no_action() {
        let ens = ScenarioEnsemble::new("d", vec![vec![10.0, 50.0], vec![60.0, 20.0]]).unwrap();
        let sol = dp_optimize(&ens, &cfg(1.0, 1.0, 1.0, 1, 1), &RiskSpec::CVaR { alpha: 0.5 })
            .unwrap();
        assert_eq!(sol.table.value(0, 1), Some(-40.0));
        assert_eq!(sol.objective, 0.0);
        assert!(sol.schedule.is_zero());
    }

    #[test]
    fn dp_rejects_multi_bid_configs() {
        let ens = ScenarioEnsemble::new("d", vec![vec![10.0, 50.0]]).unwrap();
        let err = dp_optimize(&ens, &cfg(10.0, 1.0, 10.0, 1, 2), &RiskSpec::ExpectedProfit);
        assert!(matches!(err, Err(OptimizeError::DpUnsupported(_))));
        let err = dp_optimize(&ens, &cfg(10.0, 1.0, 5.0, 1, 1), &RiskSpec::ExpectedProfit);
        assert!(matches!(err, Err(OptimizeError::DpUnsupported(_))));
    }

    #[test]
    fn predicted_distribution_examples() {
        let config = cfg(1.0, 1.0, 1.0, 1, 1);
        let ens = ScenarioEnsemble::new("d", vec![vec![0.0, 1.0], vec![0.0, 3.0]]).unwrap();
        let schedule = BidSchedule::unlimited(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let dist = predicted_objective_distribution(&ens, &schedule, &config).unwrap();
        assert_eq!(dist, vec![1.0, 3.0]);

        let zero = BidSchedule::zero(2);
        assert_eq!(
            predicted_objective_distribution(&ens, &zero, &config).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn milp_zero_prices_returns_canonical_zero_schedule() {
        let ens = ScenarioEnsemble::new("d", vec![vec![0.0; 6]; 3]).unwrap();
        let sol = milp_optimize(
            &ens,
            &cfg(10.0, 0.95, 10.0, 1, 6),
            &RiskSpec::ExpectedProfit,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        assert!(sol.schedule.is_zero());
    }

    #[test]
    fn milp_matches_dp_on_single_pair_instance() {
        let day = PriceDay::new("d", vec![30.0, 10.0, 20.0, 55.0, 40.0]).unwrap();
        let ens = ScenarioEnsemble::new("d", vec![day.prices().to_vec()]).unwrap();
        let config = cfg(10.0, 0.95, 10.0, 1, 1);
        let dp = dp_optimize(&ens, &config, &RiskSpec::ExpectedProfit).unwrap();
        let milp = milp_optimize(
            &ens,
            &config,
            &RiskSpec::ExpectedProfit,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(milp.status, MilpStatus::Optimal);
        assert!(
            (milp.objective - dp.objective).abs() <= 1e-6 * (1.0 + dp.objective.abs()),
            "milp {} vs dp {}",
            milp.objective,
            dp.objective
        );
    }

    #[test]
    fn brute_force_agrees_with_dp_single_scenario() {
        let ens = ScenarioEnsemble::new("d", vec![vec![4.0, 1.0, 9.0, 6.0]]).unwrap();
        let config = cfg(1.0, 1.0, 1.0, 1, 1);
        let dp = dp_optimize(&ens, &config, &RiskSpec::ExpectedProfit).unwrap();
        let bf = brute_force_optimize(&ens, &config, &RiskSpec::ExpectedProfit, &[1.0]).unwrap();
        assert!((dp.objective - bf.objective).abs() < 1e-9);
        assert_eq!(dp.schedule, bf.schedule);
    }

    #[test]
    fn enumeration_budget_guard() {
        let ens = ScenarioEnsemble::new("d", vec![vec![0.0; 24]]).unwrap();
        let err = brute_force_optimize(
            &ens,
            &cfg(1.0, 1.0, 1.0, 1, 1),
            &RiskSpec::ExpectedProfit,
            &[1.0, 0.5],
        );
        assert!(matches!(err, Err(OptimizeError::EnumerationBudget { .. })));
    }

    #[test]
    fn cvar_monotone_in_alpha() {
        let sample = vec![-5.0, -1.0, 0.5, 2.0, 3.0, 7.0, 11.0];
        let mut last = f64::INFINITY;
        for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let v = risk_measure(&sample, &RiskSpec::CVaR { alpha }).unwrap().value;
            assert!(v <= last + 1e-12, "CVaR not non-increasing in alpha");
            last = v;
        }
    }
}
