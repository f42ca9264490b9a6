//! Sampling probe for the inclusions whose strictness is open.
//!
//! Nothing here settles a question: a sample with the outer condition FEASIBLE and the
//! inner one INFEASIBLE is only a candidate, subject to the tolerances of both verdicts.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::behaviour::{from_correlators, pr_box, uniform, Behaviour};
use crate::conditions::Condition;
use crate::error::Result;
use crate::quantum::random_chsh_model;
use crate::scenario::chsh_scenario;

use super::verdict::{Status, Verdict};

/// `(outer, inner)` with `inner ⊆ outer` known and strictness open.
pub const OPEN_GAPS: [(Condition, Condition); 2] = [(Condition::Spjqm, Condition::Spjqmb), (Condition::Q1, Condition::Spjqm)];

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct GapCandidate {
    pub outer: Condition,
    pub inner: Condition,
}

/// Open pairs on which the verdicts are conclusive and differ.
pub fn gap_candidates(verdicts: &[Verdict]) -> Vec<GapCandidate> {
    let status = |c: Condition| verdicts.iter().find(|v| v.condition == c).map(|v| v.status);
    OPEN_GAPS
        .iter()
        .filter(|&&(outer, inner)| {
            status(outer) == Some(Status::Feasible) && status(inner) == Some(Status::Infeasible)
        })
        .map(|&(outer, inner)| GapCandidate { outer, inner })
        .collect()
}

/// A CHSH behaviour near the quantum boundary: a random pure two-qubit model, a random
/// unbiased correlator point, or a PR box diluted with white noise, chosen uniformly.
pub fn sample_chsh_behaviour<R: Rng>(rng: &mut R) -> Result<Behaviour> {
    let s = Arc::new(chsh_scenario());
    match rng.gen_range(0..3) {
        0 => {
            let q = random_chsh_model(rng).behaviour(s.clone())?;
            q.mix(&uniform(s), rng.gen_range(0.9..=1.0))
        }
        1 => {
            let mut e = [[0.0; 2]; 2];
            e.iter_mut().flatten().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
            from_correlators(e)
        }
        _ => pr_box().mix(&uniform(s), rng.gen_range(0.6..0.8)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn only_conclusive_disagreement_counts() {
        let v = |c, s| Verdict::new(c, s);
        let verdicts = [
            v(Condition::Q1, Status::Feasible),
            v(Condition::Spjqm, Status::Feasible),
            v(Condition::Spjqmb, Status::Infeasible),
        ];
        assert_eq!(
            gap_candidates(&verdicts),
            vec![GapCandidate {
                outer: Condition::Spjqm,
                inner: Condition::Spjqmb
            }]
        );
        let verdicts = [v(Condition::Q1, Status::Feasible), v(Condition::Spjqm, Status::Undecided)];
        assert!(gap_candidates(&verdicts).is_empty());
    }

    #[test]
    fn samples_are_consistent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            assert!(sample_chsh_behaviour(&mut rng).unwrap().validate(1e-9).is_valid());
        }
    }
}
