//! LP and PSD feasibility with certificates, the JQM cutting-plane loop and boundary search.

pub mod audit;
pub mod bisect;
pub mod gap;
pub mod jqm;
pub mod lp;
mod orbit;
pub mod psd;
pub mod verdict;

use std::time::Duration;

pub use audit::{inclusion_audit, Audit, AuditViolation, INCLUSIONS};
pub use bisect::{bisect_boundary, BisectResult, BisectStep};
pub use gap::{gap_candidates, sample_chsh_behaviour, GapCandidate, OPEN_GAPS};
pub use jqm::{jqm_solve, JqmOptions};
pub use lp::{lp_solve, lp_solve_with, simplex, verify_farkas, LinearProblem, LpOptions, LpOutcome, LpSolution, Row};
pub use psd::{face_basis, psd_solve, psd_solve_with, verify_separator, PsdOptions, SeparatorCheck};
pub use verdict::{Certificate, Residuals, Status, Verdict, Witness};

use crate::behaviour::{BellFunctional, Behaviour};
use crate::conditions::{compile, compile_spjqmb_with, Condition, ConeKind, Equality, ConeProgram, SpjqmbMode};
use crate::error::Result;

/// Tolerances and budgets shared by all conditions.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol_lp: f64,
    pub tol_psd: f64,
    pub max_iters: usize,
    pub cut_budget: usize,
    pub time_budget: Duration,
    pub seed: u64,
    pub spjqmb_mode: SpjqmbMode,
    /// Multiplies `max_iters` and the cut budget.
    pub effort: u32,
    /// Restrict the JQM search to matrices invariant under the behaviour's symmetries.
    pub use_symmetry: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_lp: 1e-9,
            tol_psd: 1e-7,
            max_iters: 200_000,
            cut_budget: 5000,
            time_budget: Duration::from_secs(600),
            seed: 0,
            spjqmb_mode: SpjqmbMode::Fast,
            effort: 1,
            use_symmetry: true,
        }
    }
}

impl SolveOptions {
    pub fn with_effort(&self, effort: u32) -> Self {
        SolveOptions {
            effort: self.effort * effort,
            ..self.clone()
        }
    }
}

/// Structure of the behaviour that helps the JQM cutting-plane search.
#[derive(Clone, Debug, Default)]
pub struct SearchHints {
    /// Starting subsets for heuristic separation.
    pub subsets: Vec<Vec<usize>>,
    /// Atom permutation group leaving the program invariant (empty for none).
    pub symmetry: Vec<Vec<usize>>,
}

/// Solves an already compiled program.
pub fn solve_program(p: &ConeProgram, hints: &SearchHints, opts: &SolveOptions) -> Result<Verdict> {
    let e = opts.effort.max(1) as usize;
    match (p.kind, &p.lazy) {
        (ConeKind::Linear, Some(_)) => jqm_solve(
            p,
            &JqmOptions {
                tol: opts.tol_lp,
                cut_budget: opts.cut_budget * e,
                time_budget: opts.time_budget * e as u32,
                seed: opts.seed,
                hints: hints.subsets.clone(),
                symmetry: hints.symmetry.clone(),
                ..JqmOptions::default()
            },
        ),
        (ConeKind::Linear, None) => Ok(lp_solve(p, None, opts.tol_lp)?.verdict),
        (ConeKind::Psd, _) => psd_solve(p, opts.tol_psd, opts.max_iters * e),
    }
}

/// Compiles and decides one membership condition.
pub fn decide(condition: Condition, b: &Behaviour, opts: &SolveOptions) -> Result<Verdict> {
    let p = match condition {
        Condition::Spjqmb => compile_spjqmb_with(b, opts.spjqmb_mode)?,
        c => compile(c, b)?,
    };
    let hints = if condition == Condition::Jqm {
        SearchHints {
            subsets: separation_hints(b),
            symmetry: if opts.use_symmetry {
                crate::symmetry::behaviour_symmetries(b, SYMMETRY_TOL)
            } else {
                vec![]
            },
        }
    } else {
        SearchHints::default()
    };
    solve_program(&p, &hints, opts)
}

/// Probabilities closer than this count as equal when detecting symmetries.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Cells of maximal contexts and basic outcomes, as starting subsets for local search.
pub fn separation_hints(b: &Behaviour) -> Vec<Vec<usize>> {
    let s = b.scenario();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for k in 0..s.maximal_contexts().len() {
        for c in s.maximal_measurement(k).fine_outcomes() {
            out.push(c.atoms().collect());
        }
    }
    for i in 0..s.num_basic() {
        for a in 0..s.space().cardinalities()[i] {
            if let Ok(set) = s.outcome_of_basic(i, a) {
                out.push(set.atoms().collect());
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Largest value of a Bell functional over all joint probability measures, by LP.
pub fn classical_bound(f: &BellFunctional, tol: f64) -> Result<(f64, Vec<f64>)> {
    let s = f.scenario();
    let n = s.num_atoms();
    let p = ConeProgram {
        condition: Condition::Jpm,
        kind: ConeKind::Linear,
        n,
        free: false,
        equalities: vec![Equality {
            coeffs: (0..n).map(|g| (g, 1.0)).collect(),
            rhs: 1.0,
            tag: crate::conditions::tags::JPM_NORMALIZATION,
        }],
        lazy: None,
        null_relations: vec![],
        trace_anchor: vec![],
        labels: vec![],
    };
    let neg: Vec<f64> = f.atom_values().iter().map(|v| -v).collect();
    let sol = lp_solve(&p, Some(&neg), tol)?;
    let x = sol.verdict.witness_vector().map(|v| v.to_vec()).unwrap_or_default();
    let best = sol
        .optimum
        .ok_or_else(|| crate::Error::Numerics("classical bound LP did not reach an optimum".into()))?;
    Ok((-best, x))
}
