mod common;

use std::sync::Arc;

use common::programs::{judge, library, Judgement, Kind};
use jointmeasure::behaviour::{chsh_value, deterministic, isotropic, pr_box, uniform, BellFunctional, Behaviour};
use jointmeasure::conditions::{compile, compile_jpm, Condition};
use jointmeasure::scenario::chsh_scenario;
use jointmeasure::solvers::{
    bisect_boundary, classical_bound, decide, inclusion_audit, lp_solve, psd_solve, solve_program, SearchHints,
    SolveOptions, Status,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn brute_force_chsh_max() -> f64 {
    let s = Arc::new(chsh_scenario());
    (0..16)
        .map(|g| chsh_value(&deterministic(s.clone(), g).unwrap()).unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn constructed_library_is_never_wrong() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let opts = SolveOptions::default();
    let mut undecided = 0;
    for (i, c) in library(&mut rng, 80).iter().enumerate() {
        let v = solve_program(&c.program, &SearchHints::default(), &opts).unwrap();
        let tol = if c.kind == Kind::LpFeasible || c.kind == Kind::LpInfeasible {
            opts.tol_lp
        } else {
            opts.tol_psd
        };
        match judge(&c.program, c.known, &v, tol) {
            Judgement::Correct => {}
            Judgement::Undecided => undecided += 1,
            j => panic!("program {i} ({:?}): {j:?}", c.kind),
        }
    }
    assert!(undecided <= 8, "{undecided} undecided");
}

#[test]
fn library_certificates_round_trip() {
    let opts = SolveOptions::default();
    let b = pr_box();
    for c in [Condition::Jpm, Condition::Spjqm, Condition::Q1, Condition::Q1ab] {
        let p = compile(c, &b).unwrap();
        let v = decide(c, &b, &opts).unwrap();
        assert_eq!(judge(&p, Status::Infeasible, &v, opts.tol_psd), Judgement::Correct, "{c}");
    }
    let u = uniform(Arc::new(chsh_scenario()));
    for c in [Condition::Jpm, Condition::Spjqm, Condition::Spjqmb, Condition::Q1, Condition::Q1ab] {
        let p = compile(c, &u).unwrap();
        let v = decide(c, &u, &opts).unwrap();
        let tol = if c == Condition::Jpm { opts.tol_lp } else { opts.tol_psd };
        assert_eq!(judge(&p, Status::Feasible, &v, tol), Judgement::Correct, "{c}");
    }
}

#[test]
fn classical_chsh_bound_matches_vertices() {
    let (value, x) = classical_bound(&BellFunctional::chsh(), 1e-9).unwrap();
    assert!((value - brute_force_chsh_max()).abs() < 1e-9);
    assert!((value - 2.0).abs() < 1e-9);
    assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn jpm_boundary_of_the_isotropic_family() {
    let opts = SolveOptions::default();
    let r = bisect_boundary(
        isotropic,
        |b: &Behaviour, e| decide(Condition::Jpm, b, &opts.with_effort(e)),
        0.0,
        1.0,
        1e-5,
    )
    .unwrap();
    assert!((r.lambda_star - 0.5).abs() < 1e-4, "{}", r.lambda_star);
    assert!(!r.undecided);
    assert_eq!(r.feasible.status, Status::Feasible);
    assert_eq!(r.infeasible.status, Status::Infeasible);
    // brackets only shrink
    let mut lo = 0.0;
    let mut hi = 1.0;
    for s in &r.steps[2..] {
        assert!(s.lambda > lo && s.lambda < hi);
        match s.status {
            Status::Feasible => lo = s.lambda,
            _ => hi = s.lambda,
        }
    }
}

#[test]
fn bisection_does_not_depend_on_the_feasible_start() {
    let opts = SolveOptions::default();
    let run = |lo: f64| {
        bisect_boundary(isotropic, |b: &Behaviour, e| decide(Condition::Q1, b, &opts.with_effort(e)), lo, 1.0, 1e-4)
            .unwrap()
            .lambda_star
    };
    assert!((run(0.0) - run(0.3)).abs() < 2e-4);
}

#[test]
fn bisection_rejects_non_bracketing_ends() {
    let opts = SolveOptions::default();
    let r = bisect_boundary(isotropic, |b: &Behaviour, e| decide(Condition::Jpm, b, &opts.with_effort(e)), 0.6, 1.0, 1e-3);
    assert!(r.is_err());
}

#[test]
fn inclusion_audit_flags_a_broken_chain() {
    let opts = SolveOptions::default();
    let b = isotropic(0.3).unwrap();
    let mut verdicts: Vec<_> = Condition::ALL.iter().map(|&c| decide(c, &b, &opts).unwrap()).collect();
    assert!(inclusion_audit(&verdicts).is_consistent());
    let q1 = verdicts.iter_mut().find(|v| v.condition == Condition::Q1).unwrap();
    q1.status = Status::Infeasible;
    let audit = inclusion_audit(&verdicts);
    assert!(!audit.is_consistent());
    assert!(audit.violations.iter().all(|v| v.implies == Condition::Q1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A diagonal classical witness makes every Gram program feasible at 10·tol.
    #[test]
    fn hand_built_diagonal_witness_is_found(weights in proptest::collection::vec(0.0f64..1.0, 16)) {
        prop_assume!(weights.iter().sum::<f64>() > 0.1);
        let s = Arc::new(chsh_scenario());
        let total: f64 = weights.iter().sum();
        let dets: Vec<Behaviour> = (0..16).map(|g| deterministic(s.clone(), g).unwrap()).collect();
        let parts: Vec<(f64, &Behaviour)> = weights.iter().map(|w| w / total).zip(&dets).collect();
        let b = Behaviour::mixture(&parts).unwrap();
        let p = compile(Condition::Spjqm, &b).unwrap();
        let pj = lp_solve(&compile_jpm(&b).unwrap(), None, 1e-9).unwrap();
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(pj.verdict.witness_vector().unwrap()));
        prop_assert!(p.max_residual_matrix(&diag) < 1e-9);
        let v = psd_solve(&p, 1e-7, 200_000).unwrap();
        prop_assert_eq!(v.status, Status::Feasible);
        prop_assert!(p.max_residual_matrix(&v.witness_matrix().unwrap()) <= 1e-6);
    }
}
