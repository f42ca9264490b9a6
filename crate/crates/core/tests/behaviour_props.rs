mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use jointmeasure::behaviour::{
    chsh_value, extend_to_branching, extend_to_branching_alt, tlm_check, BellFunctional, Behaviour,
};
use jointmeasure::branching::enumerate_branching;
use jointmeasure::conditions::Condition;
use jointmeasure::quantum::{random_chsh_model, QuantumModel, C64};
use jointmeasure::scenario::chsh_scenario;
use jointmeasure::solvers::{decide, SolveOptions, Status};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mixture(seed: u64) -> Behaviour {
    common::random_mixture(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn functionals_are_linear(
        seed_a in any::<u64>(),
        seed_b in any::<u64>(),
        lambda in 0.0f64..=1.0,
        coeffs in proptest::collection::vec(-5.0f64..5.0, 16),
    ) {
        let (a, b) = (mixture(seed_a), mixture(seed_b));
        let f = BellFunctional::new(
            Arc::new(chsh_scenario()),
            coeffs.chunks(4).map(|c| c.to_vec()).collect(),
        ).unwrap();
        let mixed = a.mix(&b, lambda).unwrap();
        let lhs = f.evaluate(&mixed).unwrap();
        let rhs = lambda * f.evaluate(&a).unwrap() + (1.0 - lambda) * f.evaluate(&b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn quantum_models_are_no_signalling(seed in any::<u64>()) {
        let model = random_chsh_model(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = model.behaviour(Arc::new(chsh_scenario())).unwrap();
        prop_assert!(b.validate(1e-10).is_valid());
        prop_assert!(chsh_value(&b).unwrap().abs() <= 2.0 * 2f64.sqrt() + 1e-9);
        prop_assert!(tlm_check(&b, 1e-9).unwrap().satisfied);
    }

    #[test]
    fn branching_extension_is_unique(seed in any::<u64>()) {
        let b = mixture(seed);
        for mb in enumerate_branching(b.scenario()).unwrap() {
            let p = extend_to_branching(&b, &mb).unwrap();
            let q = extend_to_branching_alt(&b, &mb);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in p.iter().zip(&q) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn inconsistent_behaviour_is_rejected_by_extension() {
    let s = Arc::new(chsh_scenario());
    let probs = vec![
        vec![0.5, 0.5, 0.0, 0.0],
        vec![0.0, 0.0, 0.5, 0.5],
        vec![0.25; 4],
        vec![0.25; 4],
    ];
    let b = Behaviour::new(s.clone(), probs).unwrap();
    assert!(!b.validate(1e-9).is_valid());
    let mb = &enumerate_branching(&s).unwrap()[0];
    assert!(extend_to_branching(&b, mb).is_err());
}

/// Product state with local projectors: every such behaviour has a joint probability measure.
#[test]
fn product_models_are_classical() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let model = random_chsh_model(&mut rng);
        let (a, b) = (
            DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]),
            DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
        );
        let psi = a.kronecker(&b);
        let projectors: BTreeMap<(usize, usize), DMatrix<C64>> = model.projectors().clone();
        let product = QuantumModel::new(psi, projectors).unwrap();
        let beh = product.behaviour(Arc::new(chsh_scenario())).unwrap();
        let v = decide(Condition::Jpm, &beh, &SolveOptions::default()).unwrap();
        assert_eq!(v.status, Status::Feasible);
    }
}
