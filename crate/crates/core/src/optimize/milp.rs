//! Mixed-integer model construction and the embedded best-first
//! branch-and-bound over the bid-indicator binaries.

use super::simplex::{self, LinearProgram, LpStatus, Row, RowCmp};
use super::{MilpSolution, MilpStatus, OptimizeError, SolverOptions};
use crate::domain::{BatteryConfig, BidSchedule, RiskSpec, ScenarioEnsemble};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

const INT_TOL: f64 = 1e-6;
const VOLUME_SNAP: f64 = 1e-9;

/// What a model column stands for; used for solution extraction and for
/// naming variables in the LP-file export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarMeaning {
    Buy(usize),
    Sell(usize),
    ZBuy(usize),
    ZSell(usize),
    Zeta,
    Shortfall(usize),
}

impl VarMeaning {
    pub(crate) fn name(&self) -> String {
        match self {
            VarMeaning::Buy(h) => format!("ab_{h}"),
            VarMeaning::Sell(h) => format!("as_{h}"),
            VarMeaning::ZBuy(h) => format!("zb_{h}"),
            VarMeaning::ZSell(h) => format!("zs_{h}"),
            VarMeaning::Zeta => "zeta".to_string(),
            VarMeaning::Shortfall(m) => format!("u_{m}"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MilpModel {
    pub lp: LinearProgram,
    pub meanings: Vec<VarMeaning>,
    pub hours: usize,
    /// Columns of the binary indicators, z-buy block then z-sell block.
    pub binary_cols: Vec<usize>,
    pub n_buy: usize,
    pub n_sell: usize,
}

impl MilpModel {
    fn col_buy(&self, h: usize) -> usize {
        h
    }
    fn col_sell(&self, h: usize) -> usize {
        self.hours + h
    }
}

pub(crate) fn build_model(
    forecast: &ScenarioEnsemble,
    config: &BatteryConfig,
    risk: &RiskSpec,
) -> MilpModel {
    let hours = forecast.hours();
    let members = forecast.members();
    let eta = config.eta;
    let inv_eta = 1.0 / eta;
    let cap_buy = config.max_buy_per_hour();
    let cap_sell = config.max_sell_per_hour();

    let cvar_alpha = match risk {
        RiskSpec::ExpectedProfit => None,
        RiskSpec::CVaR { alpha } => Some(*alpha),
    };

    let mut meanings = Vec::new();
    for h in 0..hours {
        meanings.push(VarMeaning::Buy(h));
    }
    for h in 0..hours {
        meanings.push(VarMeaning::Sell(h));
    }
    for h in 0..hours {
        meanings.push(VarMeaning::ZBuy(h));
    }
    for h in 0..hours {
        meanings.push(VarMeaning::ZSell(h));
    }
    if cvar_alpha.is_some() {
        meanings.push(VarMeaning::Zeta);
        for m in 0..members {
            meanings.push(VarMeaning::Shortfall(m));
        }
    }
    let n_vars = meanings.len();

    let mut lower = vec![0.0; n_vars];
    let mut upper = vec![0.0; n_vars];
    let mut objective = vec![0.0; n_vars];
    for h in 0..hours {
        upper[h] = cap_buy;
        upper[hours + h] = cap_sell;
        upper[2 * hours + h] = 1.0;
        upper[3 * hours + h] = 1.0;
    }

    match cvar_alpha {
        None => {
            let mean = forecast.mean_path();
            for h in 0..hours {
                objective[h] = -inv_eta * mean[h];
                objective[hours + h] = eta * mean[h];
            }
        }
        Some(alpha) => {
            let beta = 1.0 - alpha;
            let zeta = 4 * hours;
            lower[zeta] = f64::NEG_INFINITY;
            upper[zeta] = f64::INFINITY;
            objective[zeta] = 1.0;
            for m in 0..members {
                upper[zeta + 1 + m] = f64::INFINITY;
                objective[zeta + 1 + m] = -1.0 / (beta * members as f64);
            }
        }
    }

    let mut rows = Vec::new();
    // Volume-positivity indicators: a_h <= cap * z_h.
    for h in 0..hours {
        rows.push(Row {
            coeffs: vec![(h, 1.0), (2 * hours + h, -cap_buy)],
            cmp: RowCmp::Le,
            rhs: 0.0,
        });
        rows.push(Row {
            coeffs: vec![(hours + h, 1.0), (3 * hours + h, -cap_sell)],
            cmp: RowCmp::Le,
            rhs: 0.0,
        });
        rows.push(Row {
            coeffs: vec![(2 * hours + h, 1.0), (3 * hours + h, 1.0)],
            cmp: RowCmp::Le,
            rhs: 1.0,
        });
    }
    // Bid-count limits.
    rows.push(Row {
        coeffs: (0..hours).map(|h| (2 * hours + h, 1.0)).collect(),
        cmp: RowCmp::Le,
        rhs: config.n_buy as f64,
    });
    rows.push(Row {
        coeffs: (0..hours).map(|h| (3 * hours + h, 1.0)).collect(),
        cmp: RowCmp::Le,
        rhs: config.n_sell as f64,
    });
    // Storage balance prefix constraints, terminal emptiness at the last
    // hour, and the cycle cap on total charged storage-side energy.
    for k in 0..hours {
        let coeffs: Vec<(usize, f64)> = (0..=k)
            .flat_map(|h| [(h, eta), (hours + h, -inv_eta)])
            .collect();
        if k + 1 == hours {
            rows.push(Row {
                coeffs,
                cmp: RowCmp::Eq,
                rhs: 0.0,
            });
        } else {
            rows.push(Row {
                coeffs: coeffs.clone(),
                cmp: RowCmp::Le,
                rhs: config.kappa,
            });
            rows.push(Row {
                coeffs,
                cmp: RowCmp::Ge,
                rhs: 0.0,
            });
        }
    }
    rows.push(Row {
        coeffs: (0..hours).map(|h| (h, eta)).collect(),
        cmp: RowCmp::Le,
        rhs: config.cycles as f64 * config.kappa,
    });
    // CVaR shortfall rows: zeta - u_m - R_m <= 0.
    if cvar_alpha.is_some() {
        let zeta = 4 * hours;
        for (m, path) in forecast.paths().iter().enumerate() {
            let mut coeffs = Vec::with_capacity(2 * hours + 2);
            coeffs.push((zeta, 1.0));
            coeffs.push((zeta + 1 + m, -1.0));
            for h in 0..hours {
                coeffs.push((h, inv_eta * path[h]));
                coeffs.push((hours + h, -eta * path[h]));
            }
            rows.push(Row {
                coeffs,
                cmp: RowCmp::Le,
                rhs: 0.0,
            });
        }
    }

    let binary_cols = (0..hours)
        .map(|h| 2 * hours + h)
        .chain((0..hours).map(|h| 3 * hours + h))
        .collect();

    MilpModel {
        lp: LinearProgram {
            n_vars,
            objective,
            lower,
            upper,
            rows,
        },
        meanings,
        hours,
        binary_cols,
        n_buy: config.n_buy,
        n_sell: config.n_sell,
    }
}

/// Fixings of binary columns along a branch, one bit pair per entry of
/// `binary_cols`.
#[derive(Debug, Clone, PartialEq)]
struct Fixings {
    zero: Vec<u64>,
    one: Vec<u64>,
}

impl Fixings {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        Self {
            zero: vec![0; words],
            one: vec![0; words],
        }
    }
    fn set(&mut self, idx: usize, value: bool) {
        let (w, b) = (idx / 64, idx % 64);
        if value {
            self.one[w] |= 1 << b;
        } else {
            self.zero[w] |= 1 << b;
        }
    }
    fn get(&self, idx: usize) -> Option<bool> {
        let (w, b) = (idx / 64, idx % 64);
        if self.one[w] >> b & 1 == 1 {
            Some(true)
        } else if self.zero[w] >> b & 1 == 1 {
            Some(false)
        } else {
            None
        }
    }
    fn count_ones_in(&self, range: std::ops::Range<usize>) -> usize {
        range.filter(|&i| self.get(i) == Some(true)).count()
    }
}

struct Node {
    bound: f64,
    seq: u64,
    fixings: Fixings,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on the bound; FIFO among equal bounds for determinism.
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub(crate) fn branch_and_bound(
    model: &MilpModel,
    options: &SolverOptions,
) -> Result<MilpSolution, OptimizeError> {
    let nb = model.binary_cols.len();
    let half = nb / 2;

    // No-action is always feasible, so it seeds the incumbent.
    let mut incumbent = BidSchedule::zero(model.hours);
    let mut incumbent_obj: f64 = 0.0;

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::INFINITY,
        seq,
        fixings: Fixings::new(nb),
    });

    let mut nodes_solved = 0usize;
    // Upper bound on the optimum proven so far; incumbent_obj once the tree
    // is exhausted.
    let proven_bound;

    loop {
        let Some(node) = heap.pop() else {
            proven_bound = incumbent_obj;
            break;
        };
        let gap_abs = options.mip_gap * (1.0 + incumbent_obj.abs());
        if node.bound <= incumbent_obj + gap_abs {
            // Best-first order: every open node is at least as bad.
            proven_bound = node.bound.min(incumbent_obj + gap_abs);
            break;
        }
        if nodes_solved >= options.node_limit {
            proven_bound = node.bound;
            break;
        }
        nodes_solved += 1;

        let mut lp = model.lp.clone();
        for (i, &col) in model.binary_cols.iter().enumerate() {
            match node.fixings.get(i) {
                Some(true) => lp.lower[col] = 1.0,
                Some(false) => lp.upper[col] = 0.0,
                None => {}
            }
        }
        let sol = simplex::solve(&lp);
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(OptimizeError::Solver("LP relaxation unbounded".into()))
            }
            LpStatus::IterationLimit => {
                return Err(OptimizeError::Solver("simplex iteration limit".into()))
            }
            LpStatus::Optimal => {}
        }
        if sol.objective <= incumbent_obj + options.mip_gap * (1.0 + incumbent_obj.abs()) {
            continue;
        }

        // Branch on the binary closest to one half.
        let mut branch: Option<(usize, f64)> = None;
        for (i, &col) in model.binary_cols.iter().enumerate() {
            let v = sol.x[col];
            if (v - v.round()).abs() > INT_TOL {
                let dist = (v - v.floor() - 0.5).abs();
                if branch.map_or(true, |(_, d)| dist < d - 1e-15) {
                    branch = Some((i, dist));
                }
            }
        }

        match branch {
            None => {
                // Integral: candidate incumbent.
                let schedule = extract_schedule(model, &sol.x);
                let better = sol.objective > incumbent_obj + 1e-12 * (1.0 + incumbent_obj.abs());
                let tie = (sol.objective - incumbent_obj).abs()
                    <= 1e-9 * (1.0 + incumbent_obj.abs());
                if better {
                    incumbent = schedule;
                    incumbent_obj = sol.objective;
                } else if tie
                    && schedule
                        .canonical_key()
                        .partial_cmp(&incumbent.canonical_key())
                        .map_or(false, |o| o == Ordering::Less)
                {
                    incumbent = schedule;
                }
            }
            Some((i, _)) => {
                for value in [false, true] {
                    let mut fixings = node.fixings.clone();
                    fixings.set(i, value);
                    if value && !fixing_consistent(model, &fixings, i, half) {
                        continue;
                    }
                    seq += 1;
                    heap.push(Node {
                        bound: sol.objective,
                        seq,
                        fixings,
                    });
                }
            }
        }
    }

    let bound = proven_bound.max(incumbent_obj);
    let rel_gap = ((bound - incumbent_obj) / (1.0 + incumbent_obj.abs())).max(0.0);
    let status = if rel_gap <= options.mip_gap {
        MilpStatus::Optimal
    } else {
        MilpStatus::GapTerminated
    };
    Ok(MilpSolution {
        schedule: incumbent,
        objective: incumbent_obj,
        status,
        gap: if status == MilpStatus::Optimal { 0.0 } else { rel_gap },
    })
}

/// Reject branches that are combinationally infeasible: a buy and sell
/// indicator both fixed to one in the same hour, or more indicators fixed
/// to one than the bid-count limits allow.
fn fixing_consistent(model: &MilpModel, fixings: &Fixings, changed: usize, half: usize) -> bool {
    let partner = if changed < half {
        changed + half
    } else {
        changed - half
    };
    if fixings.get(partner) == Some(true) {
        return false;
    }
    if fixings.count_ones_in(0..half) > model.n_buy {
        return false;
    }
    if fixings.count_ones_in(half..2 * half) > model.n_sell {
        return false;
    }
    true
}

fn extract_schedule(model: &MilpModel, x: &[f64]) -> BidSchedule {
    let hours = model.hours;
    let clean = |v: f64, cap: f64| {
        if v.abs() < VOLUME_SNAP {
            0.0
        } else {
            v.clamp(0.0, cap)
        }
    };
    let cap_buy = model.lp.upper[model.col_buy(0)];
    let cap_sell = model.lp.upper[model.col_sell(0)];
    let buy: Vec<f64> = (0..hours).map(|h| clean(x[model.col_buy(h)], cap_buy)).collect();
    let sell: Vec<f64> = (0..hours)
        .map(|h| clean(x[model.col_sell(h)], cap_sell))
        .collect();
    BidSchedule::unlimited(buy, sell).expect("solver volumes are finite and non-negative")
}

pub(crate) fn extract_schedule_from_values(model: &MilpModel, x: &[f64]) -> BidSchedule {
    extract_schedule(model, x)
}

/// Write the model in CPLEX LP format, the interchange format spoken by the
/// external-solver bridge.
pub fn write_lp_file_for(
    forecast: &ScenarioEnsemble,
    config: &BatteryConfig,
    risk: &RiskSpec,
    writer: &mut dyn Write,
) -> std::io::Result<()> {
    let model = build_model(forecast, config, risk);
    write_model(&model, writer)
}

/// LP-format export of the battery program for `forecast`, `config` and
/// `risk` to `path`; see [`write_lp_file_for`].
pub fn write_lp_file(
    path: &std::path::Path,
    forecast: &ScenarioEnsemble,
    config: &BatteryConfig,
    risk: &RiskSpec,
) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_lp_file_for(forecast, config, risk, &mut file)
}

pub(crate) fn write_model(model: &MilpModel, w: &mut dyn Write) -> std::io::Result<()> {
    let name = |col: usize| model.meanings[col].name();
    writeln!(w, "\\ battery bid program export")?;
    writeln!(w, "Maximize")?;
    write!(w, " obj:")?;
    let mut first = true;
    for (col, &c) in model.lp.objective.iter().enumerate() {
        if c != 0.0 {
            write_term(w, c, &name(col), first)?;
            first = false;
        }
    }
    if first {
        write!(w, " 0 {}", name(0))?;
    }
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for (i, row) in model.lp.rows.iter().enumerate() {
        write!(w, " c{i}:")?;
        let mut first = true;
        for &(col, v) in &row.coeffs {
            if v != 0.0 {
                write_term(w, v, &name(col), first)?;
                first = false;
            }
        }
        let op = match row.cmp {
            RowCmp::Le => "<=",
            RowCmp::Eq => "=",
            RowCmp::Ge => ">=",
        };
        writeln!(w, " {} {}", op, fmt_num(row.rhs))?;
    }
    writeln!(w, "Bounds")?;
    for col in 0..model.lp.n_vars {
        let (lo, hi) = (model.lp.lower[col], model.lp.upper[col]);
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            writeln!(w, " {} free", name(col))?;
        } else if lo == f64::NEG_INFINITY {
            writeln!(w, " -inf <= {} <= {}", name(col), fmt_num(hi))?;
        } else if hi == f64::INFINITY {
            writeln!(w, " {} >= {}", name(col), fmt_num(lo))?;
        } else {
            writeln!(w, " {} <= {} <= {}", fmt_num(lo), name(col), fmt_num(hi))?;
        }
    }
    writeln!(w, "Binaries")?;
    write!(w, " ")?;
    for &col in &model.binary_cols {
        write!(w, "{} ", name(col))?;
    }
    writeln!(w)?;
    writeln!(w, "End")?;
    Ok(())
}

fn write_term(w: &mut dyn Write, c: f64, name: &str, first: bool) -> std::io::Result<()> {
    if first {
        if c < 0.0 {
            write!(w, " -{} {}", fmt_num(-c), name)
        } else {
            write!(w, " {} {}", fmt_num(c), name)
        }
    } else if c < 0.0 {
        write!(w, " - {} {}", fmt_num(-c), name)
    } else {
        write!(w, " + {} {}", fmt_num(c), name)
    }
}

fn fmt_num(v: f64) -> String {
    // Full round-trip precision so external solvers see the same model.
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BatteryConfig;

    fn small_model() -> MilpModel {
        let ens = ScenarioEnsemble::new("d", vec![vec![10.0, 50.0], vec![20.0, 40.0]]).unwrap();
        let config = BatteryConfig {
            kappa: 1.0,
            eta: 1.0,
            xi: 1.0,
            cycles: 1,
            n_buy: 1,
            n_sell: 1,
        };
        build_model(&ens, &config, &RiskSpec::CVaR { alpha: 0.5 })
    }

    #[test]
    fn model_dimensions() {
        let model = small_model();
        // 2 hours: 2 buy + 2 sell + 4 z + zeta + 2 shortfalls.
        assert_eq!(model.lp.n_vars, 11);
        assert_eq!(model.binary_cols.len(), 4);
        // rows: 3 per hour (links + no-simul) + 2 counts + (1 terminal +
        // 2 prefix rows for k=0) + cycle + 2 scenarios.
        assert_eq!(model.lp.rows.len(), 6 + 2 + 3 + 1 + 2);
    }

    #[test]
    fn lp_file_export_structure() {
        let model = small_model();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("\\ battery bid program export"));
        for section in ["Maximize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "missing section {section}");
        }
        assert!(text.contains("zb_0"));
        assert!(text.contains("zeta free"));
    }
}
