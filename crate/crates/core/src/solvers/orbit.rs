//! Cutting planes over group-invariant decoherence matrices, in explicit coordinates.
//!
//! Variables are one value per orbit of atom pairs. The equalities are solved once by SVD:
//! `x = x0 + N z` with `N` a basis of their null space, so the relaxation LP lives in `z`
//! and cuts only ever add rows, which lets the LP be re-solved warm. The candidate is the
//! point of least L1 norm, which keeps it bounded while cuts are still few.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::conditions::{jqm_separation, tri_index, ConeProgram, DecoherenceMatrix, SeparationOptions};
use crate::error::Result;

use super::jqm::{max_eq_residual, subset_value, vars_to_matrix, verify_cut_set, JqmOptions, RowSpace};
use super::verdict::{Residuals, Status, Verdict, Witness};

struct OrbitCut {
    set: Vec<usize>,
    /// Multiplier turning the normalized row back into the raw `μ(α) >= 0`.
    scale: f64,
    r: Vec<f64>,
    h: f64,
}

struct Space<'a> {
    na: usize,
    group: &'a [Vec<usize>],
    orbit: &'a [usize],
    x0: Vec<f64>,
    /// `norb x k`
    null: DMatrix<f64>,
}

impl Space<'_> {
    fn canonical(&self, set: &[usize]) -> Vec<usize> {
        let mut best: Option<Vec<usize>> = None;
        for g in self.group {
            let mut img: Vec<usize> = set.iter().map(|&i| g[i]).collect();
            img.sort_unstable();
            if best.as_ref().map_or(true, |b| img < *b) {
                best = Some(img);
            }
        }
        best.unwrap_or_else(|| set.to_vec())
    }

    fn orbit_form(&self, set: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.x0.len()];
        for (a, &i) in set.iter().enumerate() {
            c[self.orbit[tri_index(self.na, i, i)]] += 1.0;
            for &j in &set[a + 1..] {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                c[self.orbit[tri_index(self.na, lo, hi)]] += 2.0;
            }
        }
        c
    }

    /// Normalized cut; `Err` carries a cut that is constant on the affine set.
    fn cut(&self, set: Vec<usize>) -> std::result::Result<OrbitCut, OrbitCut> {
        let c = self.orbit_form(&set);
        let h: f64 = c.iter().zip(&self.x0).map(|(a, b)| a * b).sum();
        let r: Vec<f64> = (0..self.null.ncols())
            .map(|t| c.iter().enumerate().map(|(o, &co)| co * self.null[(o, t)]).sum())
            .collect();
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * cnorm {
            return Err(OrbitCut {
                set,
                scale: 1.0 / cnorm,
                r: vec![0.0; r.len()],
                h: h / cnorm,
            });
        }
        Ok(OrbitCut {
            set,
            scale: 1.0 / norm,
            r: r.iter().map(|v| v / norm).collect(),
            h: h / norm,
        })
    }

    fn point(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (t, &zt) in z.iter().enumerate() {
            if zt != 0.0 {
                for (o, xo) in x.iter_mut().enumerate() {
                    *xo += self.null[(o, t)] * zt;
                }
            }
        }
        x
    }

    fn expand(&self, x_o: &[f64]) -> Vec<f64> {
        self.orbit.iter().map(|&o| x_o[o]).collect()
    }
}

fn undecided(p: &ConeProgram, note: String, rounds: usize, cuts: usize) -> Verdict {
    let mut v = Verdict::undecided(p.condition, note);
    v.iterations = rounds;
    v.cuts = Some(cuts);
    v
}

#[allow(clippy::too_many_arguments)]
pub(super) fn orbit_solve(
    p: &ConeProgram,
    na: usize,
    rows: &[(Vec<(usize, f64)>, f64)],
    group: &[Vec<usize>],
    orbit: &[usize],
    norb: usize,
    opts: &JqmOptions,
    start: Instant,
) -> Result<Verdict> {
    // equalities in orbit coordinates
    let m = rows.len();
    let mut a = DMatrix::<f64>::zeros(m, norb);
    let mut b = DVector::<f64>::zeros(m);
    for (i, (coeffs, rhs)) in rows.iter().enumerate() {
        for &(v, c) in coeffs {
            a[(i, orbit[v])] += c;
        }
        b[i] = *rhs;
    }
    let bscale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let (x0, null) = match svd_split(&a, &b) {
        Some(split) if max_eq_residual(rows, &expand_orbits(orbit, &split.0)) <= 1e-8 * bscale => split,
        // the SVD occasionally loses accuracy on these structured matrices
        _ => gram_split(&a, &b),
    };
    let space = Space {
        na,
        group,
        orbit,
        x0,
        null,
    };
    let eq0 = max_eq_residual(rows, &space.expand(&space.x0));
    if eq0 > 1e-8 * bscale {
        return Ok(undecided(
            p,
            format!("equalities have no invariant solution (residual {eq0:e})"),
            0,
            0,
        ));
    }
    let mut sizes = vec![0.0; norb];
    for &o in orbit {
        sizes[o] += 1.0;
    }
    let mut cuts: Vec<OrbitCut> = Vec::new();
    let mut known: HashSet<Vec<usize>> = HashSet::new();
    for i in 0..na {
        let set = space.canonical(&[i]);
        if !known.insert(set.clone()) {
            continue;
        }
        match space.cut(set) {
            Ok(c) => cuts.push(c),
            Err(c) if c.h < -opts.tol => return Ok(certify(p, &space, rows, &[c], opts.tol, 0)),
            Err(_) => {}
        }
    }
    let mut lp = Relaxation::new(&space, &sizes);
    let mut state = lp.cold_retry(&cuts);

    let mut added = 0usize;
    let mut rounds = 0usize;
    loop {
        let z = match state {
            LpState::Point(z) => z,
            LpState::Infeasible => {
                log::debug!("jqm: relaxation infeasible after {rounds} rounds, {} cuts", cuts.len());
                return Ok(certify(p, &space, rows, &cuts, opts.tol, rounds));
            }
            LpState::Failed(e) => {
                return Ok(undecided(p, format!("relaxation LP failed: {e}"), rounds, cuts.len()));
            }
        };
        rounds += 1;
        let x = space.expand(&space.point(&z));
        let d = DecoherenceMatrix::new(vars_to_matrix(na, &x))?;
        let sep = jqm_separation(
            &d,
            &SeparationOptions {
                exact_limit: opts.exact_limit,
                starts: opts.starts,
                seed: opts.seed.wrapping_add(rounds as u64),
                max_cuts: opts.cuts_per_round,
                tol: opts.tol,
                hints: opts.hints.clone(),
                ..SeparationOptions::default()
            },
        );
        let mut fresh = Vec::new();
        for (set, _) in &sep.cuts {
            let c = space.canonical(set);
            if known.insert(c.clone()) {
                fresh.push(c);
            }
        }
        if fresh.is_empty() {
            let eq = max_eq_residual(rows, &x);
            let existing = cuts
                .iter()
                .map(|c| (-subset_value(na, &x, &c.set)).max(0.0))
                .fold(0.0, f64::max);
            let worst = (-sep.best).max(0.0).max(existing);
            let ok = eq <= 1e-8 * bscale && worst <= 10.0 * opts.tol;
            let mut v = if sep.exact && ok {
                Verdict::new(p.condition, Status::Feasible)
            } else if !ok {
                Verdict::undecided(p.condition, "candidate residuals exceed tolerance")
            } else {
                Verdict::undecided(
                    p.condition,
                    "no violated subset found by heuristic search; positivity not proven for all subsets",
                )
            };
            v.residuals = Residuals {
                equality: Some(eq),
                min_eigenvalue: None,
                inequality: Some(worst),
            };
            v.witness = Some(Witness::Vector { values: x });
            v.iterations = rounds;
            v.cuts = Some(cuts.len());
            v.exact_separation = Some(sep.exact);
            return Ok(v);
        }
        if added + fresh.len() > opts.cut_budget || start.elapsed() > opts.time_budget {
            let mut v = undecided(
                p,
                format!(
                    "cut budget exhausted after {added} cuts and {:.1} s without a conclusion",
                    start.elapsed().as_secs_f64()
                ),
                rounds,
                cuts.len(),
            );
            v.exact_separation = Some(sep.exact);
            return Ok(v);
        }
        added += fresh.len();
        state = LpState::Point(z);
        for set in fresh {
            let c = match space.cut(set) {
                Ok(c) => c,
                // the cut alone contradicts the equalities
                Err(c) if c.h < -opts.tol => return Ok(certify(p, &space, rows, &[c], opts.tol, rounds)),
                Err(_) => continue,
            };
            let dominated = cuts.iter().any(|e| {
                e.r.iter().zip(&c.r).map(|(a, b)| a * b).sum::<f64>() > 1.0 - 1e-10 && c.h >= e.h - 1e-12
            });
            if dominated {
                continue;
            }
            cuts.push(c);
            state = lp.add(&cuts);
            if !matches!(state, LpState::Point(_)) {
                break;
            }
        }
        log::debug!("jqm round {rounds}: best violation {:e}, {} cuts", sep.best, cuts.len());
    }
}

/// Particular solution and null-space basis from a thin SVD of `A` (zero-padded to be tall).
fn svd_split(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let (m, norb) = a.shape();
    let h = m.max(norb);
    let mut ap = DMatrix::<f64>::zeros(h, norb);
    ap.view_mut((0, 0), (m, norb)).copy_from(a);
    let mut bp = DVector::<f64>::zeros(h);
    bp.rows_mut(0, m).copy_from(b);
    let svd = ap.svd(true, true);
    let (u, vt) = (svd.u.as_ref()?, svd.v_t.as_ref()?);
    let smax = svd.singular_values.max();
    let thr = 1e-10 * smax.max(1e-300);
    let mut x0 = DVector::<f64>::zeros(norb);
    let mut null_rows = Vec::new();
    for t in 0..svd.singular_values.len() {
        let sv = svd.singular_values[t];
        if sv > thr {
            x0 += vt.row(t).transpose() * (u.column(t).dot(&bp) / sv);
        } else {
            null_rows.push(t);
        }
    }
    let null = DMatrix::from_fn(norb, null_rows.len(), |o, c| vt[(null_rows[c], o)]);
    Some((x0.iter().copied().collect(), null))
}

/// Same split from the eigendecomposition of `AᵀA`, with two steps of iterative refinement.
fn gram_split(a: &DMatrix<f64>, b: &DVector<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let norb = a.ncols();
    let eig = SymmetricEigen::new(a.transpose() * a);
    let thr = 1e-12 * eig.eigenvalues.max().max(1e-300);
    let range: Vec<usize> = (0..norb).filter(|&t| eig.eigenvalues[t] > thr).collect();
    let null_cols: Vec<usize> = (0..norb).filter(|&t| eig.eigenvalues[t] <= thr).collect();
    let pinv = |r: &DVector<f64>| -> DVector<f64> {
        let atr = a.transpose() * r;
        let mut x = DVector::<f64>::zeros(norb);
        for &t in &range {
            let col = eig.eigenvectors.column(t);
            x += col * (col.dot(&atr) / eig.eigenvalues[t]);
        }
        x
    };
    let mut x = pinv(b);
    for _ in 0..2 {
        let r = b - a * &x;
        x += pinv(&r);
    }
    let null = DMatrix::from_fn(norb, null_cols.len(), |o, c| eig.eigenvectors[(o, null_cols[c])]);
    (x.iter().copied().collect(), null)
}

fn expand_orbits(orbit: &[usize], x_o: &[f64]) -> Vec<f64> {
    orbit.iter().map(|&o| x_o[o]).collect()
}

enum LpState {
    Point(Vec<f64>),
    Infeasible,
    Failed(String),
}

/// `min Σ size_o |x_o|` over `x = x0 + N z` subject to the cuts, re-solved warm as cuts
/// are appended; a failed warm solve falls back to a cold one.
struct Relaxation<'s, 'a> {
    space: &'s Space<'a>,
    sizes: &'s [f64],
    sol: Option<Solution>,
    zv: Vec<Variable>,
}

impl<'s, 'a> Relaxation<'s, 'a> {
    fn new(space: &'s Space<'a>, sizes: &'s [f64]) -> Self {
        Relaxation {
            space,
            sizes,
            sol: None,
            zv: Vec::new(),
        }
    }

    fn row(&self, c: &OrbitCut) -> Vec<(Variable, f64)> {
        c.r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(t, &v)| (self.zv[t], v)).collect()
    }

    fn point(&self, sol: &Solution) -> Vec<f64> {
        self.zv.iter().map(|&v| sol.var_value(v)).collect()
    }

    fn finish(&mut self, res: std::result::Result<microlp::SolveOutcome, microlp::Error>) -> LpState {
        match res {
            Ok(out) => match out.into_solution() {
                Ok(sol) => {
                    let z = self.point(&sol);
                    self.sol = Some(sol);
                    LpState::Point(z)
                }
                Err(_) => LpState::Failed("LP solve interrupted".into()),
            },
            Err(microlp::Error::Infeasible) => LpState::Infeasible,
            Err(e) => LpState::Failed(e.to_string()),
        }
    }

    fn cold_rows<'c>(&mut self, cuts: impl Iterator<Item = &'c OrbitCut>) -> LpState {
        let space = self.space;
        let k = space.null.ncols();
        let mut prob = Problem::new(OptimizationDirection::Minimize);
        let zv: Vec<Variable> = (0..k).map(|_| prob.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        let tv: Vec<Variable> = self.sizes.iter().map(|&s| prob.add_var(s, (0.0, f64::INFINITY))).collect();
        for o in 0..space.x0.len() {
            let mut plus = vec![(tv[o], 1.0)];
            let mut minus = vec![(tv[o], 1.0)];
            for t in 0..k {
                let c = space.null[(o, t)];
                if c != 0.0 {
                    plus.push((zv[t], -c));
                    minus.push((zv[t], c));
                }
            }
            prob.add_constraint(plus.as_slice(), ComparisonOp::Ge, space.x0[o]);
            prob.add_constraint(minus.as_slice(), ComparisonOp::Ge, -space.x0[o]);
        }
        self.zv = zv;
        for c in cuts {
            prob.add_constraint(self.row(c).as_slice(), ComparisonOp::Ge, -c.h);
        }
        self.sol = None;
        let res = prob.solve();
        self.finish(res)
    }

    /// Cold solve; a numerically singular basis is retried once with the cut rows reversed.
    fn cold_retry(&mut self, cuts: &[OrbitCut]) -> LpState {
        match self.cold_rows(cuts.iter()) {
            LpState::Failed(e) => {
                log::debug!("relaxation LP failed ({e}); retrying with reversed cut order");
                self.cold_rows(cuts.iter().rev())
            }
            st => st,
        }
    }

    /// Adds the last cut of `cuts`.
    fn add(&mut self, cuts: &[OrbitCut]) -> LpState {
        let c = cuts.last().expect("a cut to add");
        let Some(sol) = self.sol.take() else {
            return self.cold_retry(cuts);
        };
        match sol.add_constraint(self.row(c).as_slice(), ComparisonOp::Ge, -c.h) {
            Err(microlp::Error::Infeasible) => LpState::Infeasible,
            Err(e) => {
                log::debug!("warm LP solve failed ({e}); re-solving from scratch");
                self.cold_retry(cuts)
            }
            res => {
                let st = self.finish(res);
                if let LpState::Failed(_) = st {
                    self.cold_retry(cuts)
                } else {
                    st
                }
            }
        }
    }
}

/// `w >= 0`, `Σ w = 1`, minimizing `Σ w_j h_j` subject to `Σ w_j r_j = 0`. The zero
/// combination is softened by penalized slacks so the LP is always feasible, then
/// restored exactly on the support by a least-squares correction.
fn certificate_weights(space: &Space<'_>, cuts: &[OrbitCut]) -> Option<Vec<f64>> {
    const PENALTY: f64 = 1e6;
    let k = space.null.ncols();
    let mut prob = Problem::new(OptimizationDirection::Minimize);
    let wv: Vec<Variable> = cuts.iter().map(|c| prob.add_var(c.h, (0.0, f64::INFINITY))).collect();
    for t in 0..k {
        let mut row: Vec<(Variable, f64)> = cuts
            .iter()
            .zip(&wv)
            .filter(|(c, _)| c.r[t] != 0.0)
            .map(|(c, &v)| (v, c.r[t]))
            .collect();
        row.push((prob.add_var(PENALTY, (0.0, f64::INFINITY)), 1.0));
        row.push((prob.add_var(PENALTY, (0.0, f64::INFINITY)), -1.0));
        prob.add_constraint(row.as_slice(), ComparisonOp::Eq, 0.0);
    }
    let ones: Vec<(Variable, f64)> = wv.iter().map(|&v| (v, 1.0)).collect();
    prob.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    let sol = match prob.solve() {
        Ok(s) => s,
        Err(e) => {
            log::debug!("certificate LP: {e}");
            return None;
        }
    };
    let sol = match sol.into_solution() {
        Ok(s) => s,
        Err(e) => {
            log::debug!("certificate LP outcome: {e:?}");
            return None;
        }
    };
    log::debug!("certificate LP objective {}", sol.objective());
    let mut w: Vec<f64> = wv.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 1e-9 * wmax).collect();
    if support.is_empty() {
        return None;
    }
    for (j, wj) in w.iter_mut().enumerate() {
        if support.binary_search(&j).is_err() {
            *wj = 0.0;
        }
    }
    for _ in 0..2 {
        let r = DMatrix::from_fn(k, support.len(), |t, c| cuts[support[c]].r[t]);
        let ws = nalgebra::DVector::from_iterator(support.len(), support.iter().map(|&j| w[j]));
        let resid = &r * &ws;
        let delta = r.clone().pseudo_inverse(1e-12).ok()? * resid;
        for (c, &j) in support.iter().enumerate() {
            w[j] -= delta[c];
        }
        if support.iter().any(|&j| w[j] < 0.0) {
            log::debug!("certificate polish left negative weights");
            return None;
        }
    }
    Some(w)
}

/// Finds cut weights with `Σ w_j r_j = 0` and `Σ w_j h_j < 0`, expands them over the group
/// and verifies the resulting cut set in the original variables.
fn certify(
    p: &ConeProgram,
    space: &Space<'_>,
    rows: &[(Vec<(usize, f64)>, f64)],
    cuts: &[OrbitCut],
    tol: f64,
    rounds: usize,
) -> Verdict {
    let Some(w) = certificate_weights(space, cuts) else {
        return undecided(
            p,
            "relaxation infeasible but no certificate multipliers were found".into(),
            rounds,
            cuts.len(),
        );
    };
    let gsize = space.group.len() as f64;
    let mut merged: HashMap<Vec<usize>, f64> = HashMap::new();
    for (c, &wj) in cuts.iter().zip(&w) {
        if wj <= 0.0 {
            continue;
        }
        for g in space.group {
            let mut img: Vec<usize> = c.set.iter().map(|&i| g[i]).collect();
            img.sort_unstable();
            *merged.entry(img).or_insert(0.0) += wj * c.scale / gsize;
        }
    }
    let mut pairs: Vec<(Vec<usize>, f64)> = merged.into_iter().collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    let (subsets, weights): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let rs = RowSpace::new(rows, crate::conditions::tri_len(space.na));
    let mut v = verify_cut_set(p, space.na, rows, &rs, subsets, weights, tol);
    v.iterations = rounds;
    v.cuts = Some(cuts.len());
    v
}
