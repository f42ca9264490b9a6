//! Dense two-phase simplex (Dantzig pricing, Bland fallback) with Farkas certificates.

use crate::conditions::{ConeKind, ConeProgram};
use crate::error::{Error, Result};

use super::verdict::{Certificate, Residuals, Status, Verdict, Witness};

/// `Σ coef · x = rhs` (or `>= rhs`).
#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `A_eq x = b`, `A_ge x >= h`, with per-variable sign restriction.
#[derive(Clone, Debug, Default)]
pub struct LinearProblem {
    pub n: usize,
    pub free: Vec<bool>,
    pub eq: Vec<Row>,
    pub ge: Vec<Row>,
}

#[derive(Clone, Debug)]
pub struct Farkas {
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64, pivots: usize },
    Infeasible { farkas: Farkas, pivots: usize },
    Unbounded { pivots: usize },
    /// Pivot guard tripped or numerics broke down.
    Stalled { reason: String, pivots: usize },
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    /// Phase-1 objective at or below this counts as feasible.
    pub feas_tol: f64,
    pub pivot_tol: f64,
    pub cost_tol: f64,
    pub max_pivots: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-9,
            pivot_tol: 1e-9,
            cost_tol: 1e-11,
            max_pivots: 200_000,
        }
    }
}

struct Tableau {
    m: usize,
    w: usize,
    t: Vec<f64>, // m rows, w + 1 columns (last is rhs)
    obj: Vec<f64>, // reduced costs, last entry is -objective
    basis: Vec<usize>,
    banned: Vec<bool>,
    active: Vec<bool>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.w + 1) + j]
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let stride = self.w + 1;
        let p = self.at(r, s);
        let row: Vec<f64> = self.t[r * stride..(r + 1) * stride].iter().map(|v| v / p).collect();
        self.t[r * stride..(r + 1) * stride].copy_from_slice(&row);
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * stride + s];
            if f != 0.0 {
                let dst = &mut self.t[i * stride..(i + 1) * stride];
                for (d, v) in dst.iter_mut().zip(&row) {
                    *d -= f * v;
                }
                dst[s] = 0.0;
            }
        }
        let f = self.obj[s];
        if f != 0.0 {
            for (d, v) in self.obj.iter_mut().zip(&row) {
                *d -= f * v;
            }
            self.obj[s] = 0.0;
        }
        self.basis[r] = s;
    }

    /// Runs the simplex until optimal: Dantzig pricing, falling back to Bland's rule while
    /// pivots stay degenerate. Returns `Ok(true)` at optimum, `Ok(false)` if unbounded.
    ///
    /// In phase 1 the objective is bounded below, so a column with a negative reduced cost
    /// but no eligible pivot row is numerical noise; it is skipped rather than reported.
    fn run(&mut self, opts: &LpOptions, pivots: &mut usize, phase1: bool) -> std::result::Result<bool, String> {
        let mut skipped = vec![false; self.w];
        let mut degenerate = 0usize;
        loop {
            let eligible = |j: &usize| !self.banned[*j] && !skipped[*j] && self.obj[*j] < -opts.cost_tol;
            let entering = if degenerate > 50 {
                (0..self.w).find(eligible)
            } else {
                (0..self.w).filter(eligible).min_by(|&a, &b| self.obj[a].total_cmp(&self.obj[b]))
            };
            let Some(s) = entering else {
                return Ok(true);
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..self.m {
                if !self.active[i] {
                    continue;
                }
                let a = self.at(i, s);
                if a > opts.pivot_tol {
                    let ratio = self.at(i, self.w) / a;
                    best = match best {
                        None => Some((ratio, i)),
                        Some((r0, i0)) => {
                            if ratio < r0 - 1e-12 * r0.abs().max(1.0)
                                || (ratio <= r0 + 1e-12 * r0.abs().max(1.0) && self.basis[i] < self.basis[i0])
                            {
                                Some((ratio, i))
                            } else {
                                Some((r0, i0))
                            }
                        }
                    };
                }
            }
            let Some((ratio, r)) = best else {
                if phase1 {
                    skipped[s] = true;
                    continue;
                }
                return Ok(false);
            };
            skipped.iter_mut().for_each(|k| *k = false);
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            *pivots += 1;
            if *pivots > opts.max_pivots {
                return Err(format!("pivot guard tripped after {} pivots", opts.max_pivots));
            }
            self.pivot(r, s);
        }
    }
}

/// Minimizes `cᵀx` (or finds any feasible point when `objective` is `None`).
pub fn simplex(p: &LinearProblem, objective: Option<&[f64]>, opts: &LpOptions) -> LpOutcome {
    // structural columns: x+ for every variable, x- for free ones, surplus for ge rows
    let mut col_of_plus = vec![0; p.n];
    let mut col_of_minus = vec![usize::MAX; p.n];
    let mut w = 0;
    for j in 0..p.n {
        col_of_plus[j] = w;
        w += 1;
        if p.free[j] {
            col_of_minus[j] = w;
            w += 1;
        }
    }
    let rows: Vec<(&Row, Option<usize>)> = p
        .eq
        .iter()
        .map(|r| (r, None))
        .chain(p.ge.iter().enumerate().map(|(k, r)| (r, Some(k))))
        .collect();
    let mut surplus_col = vec![0; p.ge.len()];
    for s in surplus_col.iter_mut() {
        *s = w;
        w += 1;
    }
    let n_struct = w;
    let m = rows.len();
    let w_total = n_struct + m;
    let stride = w_total + 1;
    let mut t = vec![0.0; m * stride];
    let mut sign = vec![1.0; m];
    for (i, (row, ge)) in rows.iter().enumerate() {
        let s = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        sign[i] = s;
        for &(j, c) in &row.coeffs {
            t[i * stride + col_of_plus[j]] += s * c;
            if p.free[j] {
                t[i * stride + col_of_minus[j]] -= s * c;
            }
        }
        if let Some(k) = ge {
            t[i * stride + surplus_col[*k]] = -s;
        }
        t[i * stride + n_struct + i] = 1.0;
        t[i * stride + w_total] = s * row.rhs;
    }
    let mut obj = vec![0.0; stride];
    for i in 0..m {
        for j in 0..n_struct {
            obj[j] -= t[i * stride + j];
        }
        obj[w_total] -= t[i * stride + w_total];
    }
    let mut tab = Tableau {
        m,
        w: w_total,
        t,
        obj,
        basis: (n_struct..w_total).collect(),
        banned: vec![false; w_total],
        active: vec![true; m],
    };
    let mut pivots = 0;
    match tab.run(opts, &mut pivots, true) {
        Ok(true) => {}
        Ok(false) => {
            return LpOutcome::Stalled {
                reason: "phase 1 reported unbounded".into(),
                pivots,
            }
        }
        Err(reason) => return LpOutcome::Stalled { reason, pivots },
    }
    let phase1 = -tab.obj[w_total];
    if phase1 > opts.feas_tol {
        // y_i = 1 - reduced cost of artificial i, in the sign-normalized rows
        let mult: Vec<f64> = (0..m).map(|i| sign[i] * (1.0 - tab.obj[n_struct + i])).collect();
        let (y, wv) = mult.split_at(p.eq.len());
        return LpOutcome::Infeasible {
            farkas: Farkas {
                y: y.to_vec(),
                w: wv.to_vec(),
            },
            pivots,
        };
    }
    // drive artificials out of the basis
    for r in 0..m {
        if tab.basis[r] >= n_struct {
            let s = (0..n_struct).find(|&j| tab.at(r, j).abs() > 1e-9);
            match s {
                Some(s) => tab.pivot(r, s),
                None => tab.active[r] = false,
            }
        }
    }
    for j in n_struct..w_total {
        tab.banned[j] = true;
    }
    let mut cost = vec![0.0; n_struct];
    if let Some(c) = objective {
        for j in 0..p.n {
            cost[col_of_plus[j]] = c[j];
            if p.free[j] {
                cost[col_of_minus[j]] = -c[j];
            }
        }
    }
    let mut obj = vec![0.0; stride];
    obj[..n_struct].copy_from_slice(&cost);
    for r in 0..m {
        if !tab.active[r] {
            continue;
        }
        let cb = if tab.basis[r] < n_struct { cost[tab.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..stride {
                obj[j] -= cb * tab.at(r, j);
            }
        }
    }
    tab.obj = obj;
    if objective.is_some() {
        match tab.run(opts, &mut pivots, false) {
            Ok(true) => {}
            Ok(false) => return LpOutcome::Unbounded { pivots },
            Err(reason) => return LpOutcome::Stalled { reason, pivots },
        }
    }
    let mut cols = vec![0.0; n_struct];
    for r in 0..m {
        if tab.active[r] && tab.basis[r] < n_struct {
            cols[tab.basis[r]] = tab.at(r, w_total);
        }
    }
    let x: Vec<f64> = (0..p.n)
        .map(|j| {
            let mut v = cols[col_of_plus[j]];
            if p.free[j] {
                v -= cols[col_of_minus[j]];
            }
            v
        })
        .collect();
    let value = objective.map_or(0.0, |c| c.iter().zip(&x).map(|(a, b)| a * b).sum());
    LpOutcome::Optimal { x, value, pivots }
}

/// Outcome of an independent check of a Farkas certificate.
#[derive(Clone, Debug)]
pub struct FarkasCheck {
    pub valid: bool,
    pub gap: f64,
    pub max_violation: f64,
}

/// Re-checks `c = yᵀA_eq + wᵀA_ge` column by column (rows visited in reverse),
/// with sign conditions `c_j <= eps` (nonnegative vars), `|c_j| <= eps` (free vars),
/// `w >= 0`, and `yᵀb + wᵀh > margin`.
pub fn verify_farkas(p: &LinearProblem, f: &Farkas, margin: f64) -> FarkasCheck {
    let mut c = vec![0.0; p.n];
    let mut comp = vec![0.0; p.n];
    let mut add = |j: usize, v: f64, c: &mut Vec<f64>| {
        // Kahan summation
        let y = v - comp[j];
        let t = c[j] + y;
        comp[j] = (t - c[j]) - y;
        c[j] = t;
    };
    let mut scale = 1.0f64;
    for (row, &m) in p.ge.iter().zip(&f.w).rev() {
        for &(j, a) in row.coeffs.iter().rev() {
            add(j, m * a, &mut c);
            scale = scale.max((m * a).abs());
        }
    }
    for (row, &m) in p.eq.iter().zip(&f.y).rev() {
        for &(j, a) in row.coeffs.iter().rev() {
            add(j, m * a, &mut c);
            scale = scale.max((m * a).abs());
        }
    }
    let eps = 1e-9 * scale;
    let mut max_violation = f.w.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
    for j in 0..p.n {
        let v = if p.free[j] { c[j].abs() } else { c[j].max(0.0) };
        max_violation = max_violation.max(v);
    }
    let gap: f64 = p
        .eq
        .iter()
        .zip(&f.y)
        .map(|(r, y)| r.rhs * y)
        .chain(p.ge.iter().zip(&f.w).map(|(r, w)| r.rhs * w))
        .rev()
        .sum();
    FarkasCheck {
        valid: max_violation <= eps && gap > margin,
        gap,
        max_violation,
    }
}

impl LinearProblem {
    pub fn from_program(p: &ConeProgram) -> Result<Self> {
        if p.kind != ConeKind::Linear {
            return Err(Error::Parameter("lp_solve needs a linear program".into()));
        }
        Ok(LinearProblem {
            n: p.n,
            free: vec![p.free; p.n],
            eq: p
                .equalities
                .iter()
                .map(|e| Row {
                    coeffs: e.coeffs.clone(),
                    rhs: e.rhs,
                })
                .collect(),
            ge: vec![],
        })
    }

    pub fn max_residuals(&self, x: &[f64]) -> (f64, f64) {
        let dot = |r: &Row| r.coeffs.iter().map(|&(j, c)| c * x[j]).sum::<f64>();
        let eq = self.eq.iter().map(|r| (dot(r) - r.rhs).abs()).fold(0.0, f64::max);
        let mut ineq = self.ge.iter().map(|r| (r.rhs - dot(r)).max(0.0)).fold(0.0, f64::max);
        for j in 0..self.n {
            if !self.free[j] {
                ineq = ineq.max(-x[j]);
            }
        }
        (eq, ineq)
    }
}

/// Result of [`lp_solve`]: verdict plus optimum for optimization calls.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub verdict: Verdict,
    pub optimum: Option<f64>,
}

/// Solves a linear cone program; with an objective, minimizes it.
pub fn lp_solve(p: &ConeProgram, objective: Option<&[f64]>, tol: f64) -> Result<LpSolution> {
    lp_solve_with(p, objective, tol, &LpOptions::default())
}

pub fn lp_solve_with(p: &ConeProgram, objective: Option<&[f64]>, tol: f64, opts: &LpOptions) -> Result<LpSolution> {
    let lp = LinearProblem::from_program(p)?;
    if let Some(c) = objective {
        if c.len() != p.n {
            return Err(Error::Shape(format!("objective has {} entries for {} variables", c.len(), p.n)));
        }
    }
    let opts = LpOptions {
        feas_tol: tol,
        ..opts.clone()
    };
    Ok(match simplex(&lp, objective, &opts) {
        LpOutcome::Optimal { x, value, pivots } => {
            let (eq, ineq) = lp.max_residuals(&x);
            let mut v = if eq <= 10.0 * tol && ineq <= 10.0 * tol {
                Verdict::new(p.condition, Status::Feasible)
            } else {
                Verdict::undecided(p.condition, "vertex residuals exceed tolerance")
            };
            v.residuals = Residuals {
                equality: Some(eq),
                min_eigenvalue: None,
                inequality: Some(ineq),
            };
            v.witness = Some(Witness::Vector { values: x });
            v.iterations = pivots;
            LpSolution {
                optimum: (v.status == Status::Feasible && objective.is_some()).then_some(value),
                verdict: v,
            }
        }
        LpOutcome::Infeasible { farkas, pivots } => {
            let check = verify_farkas(&lp, &farkas, tol);
            let mut v = if check.valid {
                Verdict::new(p.condition, Status::Infeasible)
            } else {
                Verdict::undecided(p.condition, "phase 1 ended infeasible but the Farkas certificate did not verify")
            };
            v.certificate = Some(Certificate::Farkas {
                eq_multipliers: farkas.y,
                ge_multipliers: farkas.w,
                gap: check.gap,
                max_violation: check.max_violation,
            });
            v.iterations = pivots;
            LpSolution {
                verdict: v,
                optimum: None,
            }
        }
        LpOutcome::Unbounded { pivots } => {
            let mut v = Verdict::new(p.condition, Status::Feasible).with_note("objective unbounded below");
            v.iterations = pivots;
            LpSolution {
                verdict: v,
                optimum: Some(f64::NEG_INFINITY),
            }
        }
        LpOutcome::Stalled { reason, pivots } => {
            let mut v = Verdict::undecided(p.condition, reason);
            v.iterations = pivots;
            LpSolution {
                verdict: v,
                optimum: None,
            }
        }
    })
}
