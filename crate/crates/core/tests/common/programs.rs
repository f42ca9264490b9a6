//! Programs with a status known by construction, and an independent judge of verdicts.

use jointmeasure::conditions::{tags, tri_index, tri_len, Condition, ConeKind, ConeProgram, Equality};
use jointmeasure::solvers::{verify_farkas, verify_separator, Certificate, LinearProblem, Status, Verdict};
use jointmeasure::solvers::lp::Farkas;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    LpFeasible,
    LpInfeasible,
    PsdFeasible,
    PsdInfeasible,
}

pub struct Constructed {
    pub kind: Kind,
    pub program: ConeProgram,
    pub known: Status,
}

fn program(kind: ConeKind, n: usize, equalities: Vec<Equality>, anchor: Vec<usize>) -> ConeProgram {
    ConeProgram {
        condition: if kind == ConeKind::Linear { Condition::Jpm } else { Condition::Q1 },
        kind,
        n,
        free: false,
        equalities,
        lazy: None,
        null_relations: vec![],
        trace_anchor: anchor,
        labels: (0..n).map(|i| format!("v{i}")).collect(),
    }
}

fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Equality {
    Equality {
        coeffs: coeffs.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        rhs,
        tag: tags::JPM_MARGINAL,
    }
}

fn dot(c: &[(usize, f64)], x: &[f64]) -> f64 {
    c.iter().map(|&(j, v)| v * x[j]).sum()
}

fn random_row<R: Rng>(rng: &mut R, nv: usize) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    for j in 0..nv {
        if rng.gen_bool(0.6) {
            row.push((j, rng.gen_range(-3i32..=3) as f64));
        }
    }
    row
}

/// `Σ x = 1`, random rows, right-hand sides from a hidden nonnegative point.
fn lp_feasible<R: Rng>(rng: &mut R) -> ConeProgram {
    let n = rng.gen_range(3..=10);
    let mut x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen() }).collect();
    x[rng.gen_range(0..n)] += 0.1;
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    let mut eqs = vec![eq((0..n).map(|j| (j, 1.0)).collect(), 1.0)];
    for _ in 0..rng.gen_range(1..n) {
        let r = random_row(rng, n);
        let b = dot(&r, &x);
        eqs.push(eq(r, b));
    }
    program(ConeKind::Linear, n, eqs, vec![])
}

/// Last row closes `yᵀA = -s <= 0` with `yᵀb = t > 0`.
fn lp_infeasible<R: Rng>(rng: &mut R) -> ConeProgram {
    let n = rng.gen_range(3..=10);
    let m = rng.gen_range(1..n);
    let mut eqs = vec![eq((0..n).map(|j| (j, 1.0)).collect(), 1.0)];
    for _ in 0..m {
        let r = random_row(rng, n);
        eqs.push(eq(r, rng.gen_range(-2.0..2.0)));
    }
    let y: Vec<f64> = eqs.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut comb = vec![0.0; n];
    let mut yb = 0.0;
    for (e, yk) in eqs.iter().zip(&y) {
        for &(j, c) in &e.coeffs {
            comb[j] += yk * c;
        }
        yb += yk * e.rhs;
    }
    let t: f64 = rng.gen_range(0.05..1.0);
    let last: Vec<(usize, f64)> = (0..n)
        .map(|j| {
            let s = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..2.0) };
            (j, -comb[j] - s)
        })
        .collect();
    eqs.push(eq(last, t - yb));
    program(ConeKind::Linear, n, eqs, vec![])
}

fn trace_row(n: usize) -> Vec<(usize, f64)> {
    (0..n).map(|i| (tri_index(n, i, i), 1.0)).collect()
}

fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> DMatrix<f64> {
    let v = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    let g = &v * v.transpose();
    let tr = g.trace();
    g / tr
}

/// Trace one, random rows evaluated at a hidden PSD point of random rank.
fn psd_feasible<R: Rng>(rng: &mut R) -> ConeProgram {
    let n = rng.gen_range(2..=6);
    let nv = tri_len(n);
    let rank = rng.gen_range(1..=n);
    let g = random_psd(rng, n, rank);
    let gv = ConeProgram::vars_of_matrix(&g);
    let mut eqs = vec![eq(trace_row(n), 1.0)];
    for _ in 0..rng.gen_range(1..nv) {
        let r = random_row(rng, nv);
        let b = dot(&r, &gv);
        eqs.push(eq(r, b));
    }
    program(ConeKind::Psd, n, eqs, vec![0])
}

/// Random rows plus one row equal to `S + Σ c_k A_k`, `S` positive definite, so that the
/// combination `(-c, 1)` is `S` with value `-t`.
fn psd_infeasible<R: Rng>(rng: &mut R) -> ConeProgram {
    let n = rng.gen_range(2..=6);
    let nv = tri_len(n);
    let g = random_psd(rng, n, n);
    let gv = ConeProgram::vars_of_matrix(&g);
    let mut eqs = vec![eq(trace_row(n), 1.0)];
    for _ in 0..rng.gen_range(0..nv / 2 + 1) {
        let r = random_row(rng, nv);
        let b = dot(&r, &gv);
        eqs.push(eq(r, b));
    }
    let s = random_psd(rng, n, n) + DMatrix::identity(n, n) * 0.05;
    let mut comb = ConeProgram::vars_of_matrix(&s);
    // off-diagonal variables count twice in the Frobenius product
    for i in 0..n {
        for j in i + 1..n {
            comb[tri_index(n, i, j)] *= 2.0;
        }
    }
    let t: f64 = rng.gen_range(0.05..1.0);
    let mut rhs = -t;
    for e in &eqs {
        let c: f64 = rng.gen_range(-1.0..1.0);
        for &(j, a) in &e.coeffs {
            comb[j] += c * a;
        }
        rhs += c * e.rhs;
    }
    eqs.push(eq(comb.into_iter().enumerate().collect(), rhs));
    program(ConeKind::Psd, n, eqs, vec![0])
}

pub fn constructed<R: Rng>(rng: &mut R, kind: Kind) -> Constructed {
    let (program, known) = match kind {
        Kind::LpFeasible => (lp_feasible(rng), Status::Feasible),
        Kind::LpInfeasible => (lp_infeasible(rng), Status::Infeasible),
        Kind::PsdFeasible => (psd_feasible(rng), Status::Feasible),
        Kind::PsdInfeasible => (psd_infeasible(rng), Status::Infeasible),
    };
    Constructed { kind, program, known }
}

/// Cycles through the four kinds.
pub fn library<R: Rng>(rng: &mut R, count: usize) -> Vec<Constructed> {
    const KINDS: [Kind; 4] = [Kind::LpFeasible, Kind::LpInfeasible, Kind::PsdFeasible, Kind::PsdInfeasible];
    (0..count).map(|i| constructed(rng, KINDS[i % 4])).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Judgement {
    Correct,
    Undecided,
    /// Conclusive and contradicting the construction.
    Wrong,
    /// Right status, but the witness or certificate does not re-check.
    Unverified(String),
}

/// Re-checks the evidence of a verdict without trusting the solver.
pub fn judge(p: &ConeProgram, known: Status, v: &Verdict, tol: f64) -> Judgement {
    match v.status {
        Status::Undecided => return Judgement::Undecided,
        s if s != known => return Judgement::Wrong,
        _ => {}
    }
    match (v.status, p.kind) {
        (Status::Feasible, ConeKind::Linear) => {
            let Some(x) = v.witness_vector() else {
                return Judgement::Unverified("no witness".into());
            };
            let res = p.max_residual(x);
            let neg = x.iter().fold(0.0f64, |a, &b| a.max(-b));
            if res > 10.0 * tol || neg > 10.0 * tol {
                return Judgement::Unverified(format!("residual {res}, negativity {neg}"));
            }
        }
        (Status::Feasible, ConeKind::Psd) => {
            let Some(g) = v.witness_matrix() else {
                return Judgement::Unverified("no witness".into());
            };
            let res = p.max_residual_matrix(&g);
            let lmin = SymmetricEigen::new(g).eigenvalues.min();
            if res > 10.0 * tol || lmin < -10.0 * tol {
                return Judgement::Unverified(format!("residual {res}, min eigenvalue {lmin}"));
            }
        }
        (Status::Infeasible, _) => match &v.certificate {
            Some(Certificate::Farkas {
                eq_multipliers,
                ge_multipliers,
                ..
            }) => {
                let lp = LinearProblem::from_program(p).unwrap();
                let f = Farkas {
                    y: eq_multipliers.clone(),
                    w: ge_multipliers.clone(),
                };
                let c = verify_farkas(&lp, &f, 1e-9);
                if !c.valid {
                    return Judgement::Unverified(format!("farkas {c:?}"));
                }
            }
            Some(Certificate::PsdSeparator { multipliers, .. }) => {
                let c = verify_separator(p, multipliers);
                if !c.valid {
                    return Judgement::Unverified(format!("separator {c:?}"));
                }
            }
            Some(Certificate::InconsistentEqualities { multipliers, gap }) => {
                let mut comb = vec![0.0; p.num_vars()];
                let mut val = 0.0;
                for (e, y) in p.equalities.iter().zip(multipliers).rev() {
                    for &(j, c) in &e.coeffs {
                        comb[j] += y * c;
                    }
                    val += y * e.rhs;
                }
                let scale: f64 = p
                    .equalities
                    .iter()
                    .zip(multipliers)
                    .flat_map(|(e, y)| e.coeffs.iter().map(move |&(_, c)| (y * c).abs()))
                    .fold(1e-300, f64::max);
                let worst = comb.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if worst > 1e-9 * scale || val.abs() <= 1e3 * worst || (val - gap).abs() > 1e-6 * gap.abs() {
                    return Judgement::Unverified(format!("combination {worst}, value {val}"));
                }
            }
            other => return Judgement::Unverified(format!("unexpected certificate {other:?}")),
        },
        _ => unreachable!(),
    }
    Judgement::Correct
}
