//! Dense bounded-variable primal simplex, sized for desk-scale battery
//! programs (tens of structural rows, a few hundred columns).
//!
//! The solver maximizes `c'x` subject to general rows `a'x {<=,=,>=} b` and
//! per-variable bounds. Every row gets a slack so the constraint system is
//! `Ax + s = b`; the initial basis is the slack basis with structural
//! variables at their nearest finite bound (free variables start at zero).
//!
//! Callers must arrange the model so this starting point is feasible (all
//! model builders in this crate do); an infeasible start is reported as
//! `Infeasible` rather than repaired with a phase-1 pass.

const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowCmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// Sparse coefficients as (column, value) pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: RowCmp,
    pub rhs: f64,
}

/// A linear program in maximization form.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n_vars: usize,
    /// Objective coefficients, maximized.
    pub objective: Vec<f64>,
    /// Per-variable lower bounds (`f64::NEG_INFINITY` for free below).
    pub lower: Vec<f64>,
    /// Per-variable upper bounds (`f64::INFINITY` for free above).
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Values of the structural variables (slacks stripped).
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable pinned at zero.
    FreeZero,
}

pub fn solve(lp: &LinearProgram) -> LpSolution {
    Simplex::new(lp).run()
}

struct Simplex {
    m: usize,
    /// Total columns: structurals then one slack per row.
    n: usize,
    n_struct: usize,
    /// Dense tableau, row-major `m x n`; invariant `T = B^-1 A`.
    tab: Vec<f64>,
    /// Reduced costs per column.
    dj: Vec<f64>,
    /// Current value of every column.
    xval: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<VarStatus>,
    /// Column occupying each basis row.
    basis: Vec<usize>,
    objective: Vec<f64>,
}

impl Simplex {
    fn new(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n_struct = lp.n_vars;
        let n = n_struct + m;

        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        lower.extend_from_slice(&lp.lower);
        upper.extend_from_slice(&lp.upper);
        for row in &lp.rows {
            match row.cmp {
                RowCmp::Le => {
                    lower.push(0.0);
                    upper.push(f64::INFINITY);
                }
                RowCmp::Eq => {
                    lower.push(0.0);
                    upper.push(0.0);
                }
                RowCmp::Ge => {
                    lower.push(f64::NEG_INFINITY);
                    upper.push(0.0);
                }
            }
        }

        let mut objective = vec![0.0; n];
        objective[..n_struct].copy_from_slice(&lp.objective);

        let mut tab = vec![0.0; m * n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                debug_assert!(j < n_struct);
                tab[i * n + j] += v;
            }
            tab[i * n + n_struct + i] = 1.0;
        }

        // Structural variables start at their nearest finite bound; free
        // variables at zero. Slacks take whatever closes each row.
        let mut xval = vec![0.0; n];
        let mut status = vec![VarStatus::FreeZero; n];
        for j in 0..n_struct {
            if lower[j].is_finite() {
                xval[j] = lower[j];
                status[j] = VarStatus::AtLower;
            } else if upper[j].is_finite() {
                xval[j] = upper[j];
                status[j] = VarStatus::AtUpper;
            } else {
                xval[j] = 0.0;
                status[j] = VarStatus::FreeZero;
            }
        }
        let mut basis = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            let lhs: f64 = row.coeffs.iter().map(|&(j, v)| v * xval[j]).sum();
            let s = n_struct + i;
            xval[s] = row.rhs - lhs;
            status[s] = VarStatus::Basic;
            basis.push(s);
        }

        let dj = objective.clone();

        Self {
            m,
            n,
            n_struct,
            tab,
            dj,
            xval,
            lower,
            upper,
            status,
            basis,
            objective,
        }
    }

    fn start_is_feasible(&self) -> bool {
        self.basis.iter().all(|&j| {
            self.xval[j] >= self.lower[j] - BOUND_TOL && self.xval[j] <= self.upper[j] + BOUND_TOL
        })
    }

    fn run(mut self) -> LpSolution {
        if !self.start_is_feasible() {
            return self.finish(LpStatus::Infeasible);
        }
        let max_iter = 200 * (self.m + self.n) + 1000;
        let mut bland = false;
        let mut last_obj = f64::NEG_INFINITY;
        let mut stall = 0usize;

        for _ in 0..max_iter {
            let entering = self.price(bland);
            let Some((j, dir)) = entering else {
                return self.finish(LpStatus::Optimal);
            };

            match self.ratio_test(j, dir) {
                RatioOutcome::Unbounded => return self.finish(LpStatus::Unbounded),
                RatioOutcome::BoundFlip { step } => self.apply_bound_flip(j, dir, step),
                RatioOutcome::Pivot { step, row, to_upper } => {
                    self.apply_pivot(j, dir, step, row, to_upper)
                }
            }

            let obj = self.current_objective();
            if obj > last_obj + 1e-12 * (1.0 + last_obj.abs()) {
                last_obj = obj;
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > 2 * (self.m + 16) {
                    bland = true;
                }
            }
        }
        self.finish(LpStatus::IterationLimit)
    }

    fn current_objective(&self) -> f64 {
        (0..self.n_struct).map(|j| self.objective[j] * self.xval[j]).sum()
    }

    /// Pick an entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n {
            let (can_inc, can_dec) = match self.status[j] {
                VarStatus::Basic => continue,
                VarStatus::AtLower => (self.upper[j] > self.lower[j] + BOUND_TOL, false),
                VarStatus::AtUpper => (false, self.upper[j] > self.lower[j] + BOUND_TOL),
                VarStatus::FreeZero => (true, true),
            };
            let d = self.dj[j];
            let dir = if d > REDUCED_COST_TOL && can_inc {
                1.0
            } else if d < -REDUCED_COST_TOL && can_dec {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, j: usize, dir: f64) -> RatioOutcome {
        // Step the entering variable can take before hitting its own bound.
        let self_gap = if dir > 0.0 {
            self.upper[j] - self.xval[j]
        } else {
            self.xval[j] - self.lower[j]
        };

        let mut t_min = f64::INFINITY;
        let mut blockers: Vec<(usize, f64, bool)> = Vec::new(); // (row, |pivot|, leaves_at_upper)
        for i in 0..self.m {
            let alpha = self.tab[i * self.n + j];
            let delta = dir * alpha; // basic value changes by -t * delta
            let b = self.basis[i];
            let (t, to_upper) = if delta > PIVOT_TOL {
                if self.lower[b].is_finite() {
                    ((self.xval[b] - self.lower[b]) / delta, false)
                } else {
                    continue;
                }
            } else if delta < -PIVOT_TOL {
                if self.upper[b].is_finite() {
                    ((self.upper[b] - self.xval[b]) / -delta, true)
                } else {
                    continue;
                }
            } else {
                continue;
            };
            let t = t.max(0.0);
            if t < t_min - 1e-12 {
                t_min = t;
                blockers.clear();
                blockers.push((i, alpha.abs(), to_upper));
            } else if t <= t_min + 1e-12 {
                blockers.push((i, alpha.abs(), to_upper));
            }
        }

        if self_gap <= t_min {
            if self_gap.is_infinite() {
                return RatioOutcome::Unbounded;
            }
            return RatioOutcome::BoundFlip { step: self_gap };
        }
        if t_min.is_infinite() {
            return RatioOutcome::Unbounded;
        }
        // Among equally blocking rows prefer the largest pivot magnitude.
        let (row, _, to_upper) = blockers
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        RatioOutcome::Pivot {
            step: t_min,
            row,
            to_upper,
        }
    }

    fn shift_basics(&mut self, j: usize, dir: f64, step: f64) {
        if step == 0.0 {
            return;
        }
        for i in 0..self.m {
            let alpha = self.tab[i * self.n + j];
            if alpha != 0.0 {
                let b = self.basis[i];
                self.xval[b] -= step * dir * alpha;
            }
        }
    }

    fn apply_bound_flip(&mut self, j: usize, dir: f64, step: f64) {
        self.shift_basics(j, dir, step);
        self.xval[j] += dir * step;
        self.status[j] = if dir > 0.0 {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
    }

    fn apply_pivot(&mut self, j: usize, dir: f64, step: f64, row: usize, to_upper: bool) {
        self.shift_basics(j, dir, step);
        self.xval[j] += dir * step;

        let leaving = self.basis[row];
        self.status[leaving] = if to_upper {
            self.xval[leaving] = self.upper[leaving];
            VarStatus::AtUpper
        } else {
            self.xval[leaving] = self.lower[leaving];
            VarStatus::AtLower
        };
        self.basis[row] = j;
        self.status[j] = VarStatus::Basic;

        // Eliminate column j from every other row and the cost row.
        let n = self.n;
        let pivot = self.tab[row * n + j];
        debug_assert!(pivot.abs() > PIVOT_TOL);
        let inv = 1.0 / pivot;
        for v in &mut self.tab[row * n..(row + 1) * n] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.tab[row * n..(row + 1) * n].to_vec();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = self.tab[i * n + j];
            if factor != 0.0 {
                for k in 0..n {
                    self.tab[i * n + k] -= factor * pivot_row[k];
                }
                self.tab[i * n + j] = 0.0;
            }
        }
        let factor = self.dj[j];
        if factor != 0.0 {
            for k in 0..n {
                self.dj[k] -= factor * pivot_row[k];
            }
            self.dj[j] = 0.0;
        }
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        let x = self.xval[..self.n_struct].to_vec();
        let objective = (0..self.n_struct).map(|j| self.objective[j] * x[j]).sum();
        LpSolution {
            status,
            objective,
            x,
        }
    }
}

enum RatioOutcome {
    Unbounded,
    BoundFlip { step: f64 },
    Pivot { step: f64, row: usize, to_upper: bool },
}
