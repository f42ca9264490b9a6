#![allow(dead_code)]

use std::sync::Arc;

use jointmeasure::behaviour::{deterministic, from_correlators, pr_box, uniform, Behaviour};
use jointmeasure::scenario::chsh_scenario;
use rand::Rng;

/// Random convex combination of a PR box, the uniform behaviour and up to three
/// deterministic CHSH behaviours. The PR weight is uniform on [0, 1].
pub fn random_mixture<R: Rng>(rng: &mut R) -> Behaviour {
    let s = Arc::new(chsh_scenario());
    let pr = pr_box();
    let u = uniform(s.clone());
    let w_pr: f64 = rng.gen();
    let k = rng.gen_range(0..=3);
    let dets: Vec<Behaviour> = (0..k).map(|_| deterministic(s.clone(), rng.gen_range(0..16)).unwrap()).collect();
    let mut rest: Vec<f64> = (0..=k).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = rest.iter().sum();
    rest.iter_mut().for_each(|w| *w *= (1.0 - w_pr) / total);
    let mut parts: Vec<(f64, &Behaviour)> = vec![(w_pr, &pr), (rest[0], &u)];
    for (w, d) in rest[1..].iter().zip(&dets) {
        parts.push((*w, d));
    }
    Behaviour::mixture(&parts).unwrap()
}

/// Unbiased CHSH behaviour with correlators uniform in [-1, 1].
pub fn random_correlators<R: Rng>(rng: &mut R) -> Behaviour {
    let mut e = [[0.0; 2]; 2];
    for row in e.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.gen_range(-1.0..=1.0);
        }
    }
    from_correlators(e).unwrap()
}
pub mod programs;
