//! Dense two-phase primal simplex with Bland's rule.
//!
//! Sized for the SILP restricted master (a handful of variables, one row per
//! cut) and other small problems. Variables with infinite bounds are flagged
//! with `None` rather than floating-point infinities, and are shifted, mirrored
//! or split into non-negative parts before entering the tableau.

use std::fmt::Write as _;

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    MalformedProblem(String),
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
}

/// Bounds on one variable; `None` means unbounded on that side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarBounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl VarBounds {
    pub const FREE: VarBounds = VarBounds {
        lower: None,
        upper: None,
    };
    pub const NON_NEGATIVE: VarBounds = VarBounds {
        lower: Some(0.0),
        upper: None,
    };

    pub fn between(lower: f64, upper: f64) -> Self {
        VarBounds {
            lower: Some(lower),
            upper: Some(upper),
        }
    }
}

/// `maximize c·v` subject to `ineq` rows (`row·v ≤ rhs`), `eq` rows (`row·v = rhs`) and bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub ineq: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub bounds: Vec<VarBounds>,
}

impl LpProblem {
    /// All variables non-negative, no constraints yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            ineq: Vec::new(),
            eq: Vec::new(),
            bounds: vec![VarBounds::NON_NEGATIVE; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        let bad = |m: String| Err(LpError::MalformedProblem(m));
        if n == 0 {
            return bad("no variables".into());
        }
        if self.bounds.len() != n {
            return bad(format!("{} bounds for {n} variables", self.bounds.len()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient".into());
        }
        for (kind, rows) in [("inequality", &self.ineq), ("equality", &self.eq)] {
            for (r, (row, rhs)) in rows.iter().enumerate() {
                if row.len() != n {
                    return bad(format!(
                        "{kind} row {r} has {} coefficients, expected {n}",
                        row.len()
                    ));
                }
                if !rhs.is_finite() || row.iter().any(|a| !a.is_finite()) {
                    return bad(format!("{kind} row {r} has a non-finite coefficient"));
                }
            }
        }
        for (i, b) in self.bounds.iter().enumerate() {
            if b.lower.is_some_and(|l| !l.is_finite()) || b.upper.is_some_and(|u| !u.is_finite()) {
                return bad(format!(
                    "variable {i}: infinite bounds must be given as None"
                ));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound by `v`, scaled by `max(1, |rhs|)`.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>();
        let rel = |excess: f64, rhs: f64| excess.max(0.0) / rhs.abs().max(1.0);
        let mut worst = 0.0f64;
        for (row, rhs) in &self.ineq {
            worst = worst.max(rel(dot(row) - rhs, *rhs));
        }
        for (row, rhs) in &self.eq {
            worst = worst.max(rel((dot(row) - rhs).abs(), *rhs));
        }
        for (b, &x) in self.bounds.iter().zip(v) {
            if let Some(l) = b.lower {
                worst = worst.max(rel(l - x, l));
            }
            if let Some(u) = b.upper {
                worst = worst.max(rel(x - u, u));
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status == Optimal`.
    pub v: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    Solver::new(p, None)?.run()
}

/// Like [`solve_lp`], appending every tableau to `dump` as text.
pub fn solve_lp_traced(p: &LpProblem, dump: &mut String) -> Result<LpSolution, LpError> {
    Solver::new(p, Some(dump))?.run()
}

/// How an original variable is expressed through non-negative tableau columns.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `v = offset + x_col`
    Shifted { col: usize, offset: f64 },
    /// `v = offset − x_col`
    Mirrored { col: usize, offset: f64 },
    /// `v = x_pos − x_neg`
    Split { pos: usize, neg: usize },
}

struct Solver<'a> {
    problem: &'a LpProblem,
    maps: Vec<VarMap>,
    /// Row-major `rows × (cols + 1)`; last column is the right-hand side.
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    first_artificial: usize,
    iterations: usize,
    dump: Option<&'a mut String>,
    infeasible_bounds: bool,
}

impl<'a> Solver<'a> {
    fn new(p: &'a LpProblem, dump: Option<&'a mut String>) -> Result<Self, LpError> {
        p.validate()?;
        let mut maps = Vec::with_capacity(p.n_vars());
        let mut n_struct = 0;
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        let mut infeasible_bounds = false;
        for b in &p.bounds {
            let m = match (b.lower, b.upper) {
                (Some(l), u) => {
                    if let Some(u) = u {
                        if u < l {
                            infeasible_bounds = true;
                        }
                        bound_rows.push((n_struct, u - l));
                    }
                    VarMap::Shifted {
                        col: n_struct,
                        offset: l,
                    }
                }
                (None, Some(u)) => VarMap::Mirrored {
                    col: n_struct,
                    offset: u,
                },
                (None, None) => {
                    n_struct += 1;
                    VarMap::Split {
                        pos: n_struct - 1,
                        neg: n_struct,
                    }
                }
            };
            n_struct += 1;
            maps.push(m);
        }

        // Rows over structural columns: (coefficients, rhs, is_inequality)
        let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        let transform = |row: &[f64], rhs: f64| {
            let mut out = vec![0.0; n_struct];
            let mut rhs = rhs;
            for (a, m) in row.iter().zip(&maps) {
                match *m {
                    VarMap::Shifted { col, offset } => {
                        out[col] += a;
                        rhs -= a * offset;
                    }
                    VarMap::Mirrored { col, offset } => {
                        out[col] -= a;
                        rhs -= a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        out[pos] += a;
                        out[neg] -= a;
                    }
                }
            }
            (out, rhs)
        };
        for (row, rhs) in &p.ineq {
            let (r, b) = transform(row, *rhs);
            rows.push((r, b, true));
        }
        for (row, rhs) in &p.eq {
            let (r, b) = transform(row, *rhs);
            rows.push((r, b, false));
        }
        for &(col, width) in &bound_rows {
            let mut r = vec![0.0; n_struct];
            r[col] = 1.0;
            rows.push((r, width, true));
        }

        let n_slack = rows.iter().filter(|r| r.2).count();
        let n_art = rows
            .iter()
            .filter(|(_, rhs, ineq)| !*ineq || *rhs < 0.0)
            .count();
        let first_artificial = n_struct + n_slack;
        let n_cols = first_artificial + n_art;

        let mut tab = Vec::with_capacity(rows.len());
        let mut basis = Vec::with_capacity(rows.len());
        let (mut slack, mut art) = (n_struct, first_artificial);
        for (coefs, rhs, ineq) in rows {
            let mut t = vec![0.0; n_cols + 1];
            t[..n_struct].copy_from_slice(&coefs);
            t[n_cols] = rhs;
            let mut slack_col = None;
            if ineq {
                t[slack] = 1.0;
                slack_col = Some(slack);
                slack += 1;
            }
            if rhs < 0.0 {
                t.iter_mut().for_each(|v| *v = -*v);
            }
            if ineq && rhs >= 0.0 {
                basis.push(slack_col.unwrap());
            } else {
                t[art] = 1.0;
                basis.push(art);
                art += 1;
            }
            tab.push(t);
        }

        Ok(Solver {
            problem: p,
            maps,
            tab,
            basis,
            n_struct,
            n_cols,
            first_artificial,
            iterations: 0,
            dump,
            infeasible_bounds,
        })
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        if self.infeasible_bounds {
            return Ok(self.finish(LpStatus::Infeasible));
        }
        // Phase 1: maximize −Σ artificials.
        if self.first_artificial < self.n_cols {
            let mut cost = vec![0.0; self.n_cols];
            cost[self.first_artificial..]
                .iter_mut()
                .for_each(|c| *c = -1.0);
            let outcome = self.optimize(&cost, self.n_cols)?;
            debug_assert!(outcome, "phase 1 is bounded");
            let scale = self
                .tab
                .iter()
                .map(|r| r[self.n_cols].abs())
                .fold(1.0, f64::max);
            let infeasibility: f64 = self
                .basis
                .iter()
                .zip(&self.tab)
                .filter(|(&b, _)| b >= self.first_artificial)
                .map(|(_, r)| r[self.n_cols])
                .sum();
            if infeasibility > 1e-9 * scale {
                return Ok(self.finish(LpStatus::Infeasible));
            }
            self.evict_artificials();
        }

        // Phase 2 over structural and slack columns only.
        let mut cost = vec![0.0; self.n_cols];
        for (c, m) in self.problem.objective.iter().zip(&self.maps) {
            match *m {
                VarMap::Shifted { col, .. } => cost[col] += c,
                VarMap::Mirrored { col, .. } => cost[col] -= c,
                VarMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
            }
        }
        let bounded = self.optimize(&cost, self.first_artificial)?;
        Ok(self.finish(if bounded {
            LpStatus::Optimal
        } else {
            LpStatus::Unbounded
        }))
    }

    /// Bland's-rule simplex on the current basis. Only columns `< allowed` may enter.
    /// Returns `false` when the objective is unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<bool, LpError> {
        loop {
            let reduced = self.reduced_costs(cost);
            self.trace(&reduced);
            let Some(enter) = (0..allowed).find(|&j| reduced[j] > COST_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.tab.iter().enumerate() {
                let a = row[enter];
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = row[self.n_cols] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1.0);
                        if (!tie && ratio < best) || (tie && self.basis[r] < self.basis[br]) {
                            Some((r, ratio))
                        } else {
                            Some((br, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            if self.iterations >= MAX_PIVOTS {
                return Err(LpError::IterationLimit(MAX_PIVOTS));
            }
            self.pivot(row, enter);
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut reduced = cost.to_vec();
        for (row, &b) in self.tab.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (rj, &a) in reduced.iter_mut().zip(row) {
                    *rj -= cb * a;
                }
            }
        }
        reduced
    }

    fn pivot(&mut self, row: usize, col: usize) {
        self.iterations += 1;
        let p = self.tab[row][col];
        self.tab[row].iter_mut().for_each(|v| *v /= p);
        self.tab[row][col] = 1.0;
        let pivot_row = self.tab[row].clone();
        for (r, t) in self.tab.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = t[col];
            if f != 0.0 {
                for (v, &pv) in t.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                t[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Pivots zero-level artificials out of the basis; rows that cannot pivot are redundant.
    fn evict_artificials(&mut self) {
        let mut r = 0;
        while r < self.tab.len() {
            if self.basis[r] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.tab[r][j].abs() > PIVOT_EPS);
                match col {
                    Some(j) => self.pivot(r, j),
                    None => {
                        self.tab.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        if status != LpStatus::Optimal {
            return LpSolution {
                status,
                v: Vec::new(),
                objective_value: match status {
                    LpStatus::Unbounded => f64::INFINITY,
                    _ => f64::NEG_INFINITY,
                },
                iterations: self.iterations,
            };
        }
        let mut x = vec![0.0; self.n_struct];
        for (row, &b) in self.tab.iter().zip(&self.basis) {
            if b < self.n_struct {
                x[b] = row[self.n_cols];
            }
        }
        let v: Vec<f64> = self
            .maps
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, offset } => offset + x[col],
                VarMap::Mirrored { col, offset } => offset - x[col],
                VarMap::Split { pos, neg } => x[pos] - x[neg],
            })
            .collect();
        let objective_value = self
            .problem
            .objective
            .iter()
            .zip(&v)
            .map(|(c, x)| c * x)
            .sum();
        LpSolution {
            status,
            v,
            objective_value,
            iterations: self.iterations,
        }
    }

    fn trace(&mut self, reduced: &[f64]) {
        let Some(out) = self.dump.as_deref_mut() else {
            return;
        };
        let _ = writeln!(out, "-- tableau after {} pivots", self.iterations);
        for (row, b) in self.tab.iter().zip(&self.basis) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.4}")).collect();
            let _ = writeln!(out, "x{b:<3}| {}", cells.join(" "));
        }
        let cells: Vec<String> = reduced.iter().map(|v| format!("{v:>10.4}")).collect();
        let _ = writeln!(out, "obj | {}", cells.join(" "));
    }
}
