//! Behaviours: probability tables over the fine outcomes of each maximal context.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::branching::BranchingMeasurement;
use crate::error::{Error, Result};
use crate::scenario::{chsh_scenario, OutcomeSet, Scenario};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Fine-outcome probabilities for every maximal context of a scenario.
///
/// Only maximal-context tables are stored; every other outcome probability is a sum.
#[derive(Clone, Debug)]
pub struct Behaviour {
    scenario: Arc<Scenario>,
    probs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Negative {
        context: Vec<usize>,
        cell: usize,
        value: f64,
    },
    Normalization {
        context: Vec<usize>,
        sum: f64,
    },
    Signalling {
        measurement: Vec<usize>,
        cell: usize,
        context_a: Vec<usize>,
        context_b: Vec<usize>,
        p_a: f64,
        p_b: f64,
    },
}

impl Violation {
    pub fn magnitude(&self) -> f64 {
        match self {
            Violation::Negative { value, .. } => -value,
            Violation::Normalization { sum, .. } => (sum - 1.0).abs(),
            Violation::Signalling { p_a, p_b, .. } => (p_a - p_b).abs(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConsistencyReport {
    pub tol: f64,
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let worst = self
            .violations
            .iter()
            .max_by(|a, b| a.magnitude().total_cmp(&b.magnitude()));
        match worst {
            None => "consistent".to_string(),
            Some(v) => format!(
                "{} violation(s); worst {:?} (magnitude {:.3e})",
                self.violations.len(),
                v,
                v.magnitude()
            ),
        }
    }
}

impl Behaviour {
    pub fn new(scenario: Arc<Scenario>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != scenario.maximal_contexts().len() {
            return Err(Error::Shape(format!(
                "{} probability tables for {} maximal contexts",
                probs.len(),
                scenario.maximal_contexts().len()
            )));
        }
        for (k, table) in probs.iter().enumerate() {
            let cells = scenario.maximal_measurement(k).fine_outcomes().len();
            if table.len() != cells {
                return Err(Error::Shape(format!(
                    "context {} has {} cells but {} probabilities",
                    Scenario::context_key(&scenario.maximal_contexts()[k]),
                    cells,
                    table.len()
                )));
            }
            if table.iter().any(|p| !p.is_finite()) {
                return Err(Error::Shape("non-finite probability".into()));
            }
        }
        Ok(Behaviour { scenario, probs })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn scenario_arc(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    /// Table for the `k`-th maximal context.
    pub fn context_probs(&self, k: usize) -> &[f64] {
        &self.probs[k]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Marginal of measurement `id` computed from maximal context `k` (which must include it).
    pub fn marginal_from(&self, id: usize, k: usize) -> Vec<f64> {
        let m = self.scenario.measurement(id);
        let ctx = self.scenario.maximal_measurement(k);
        m.fine_outcomes()
            .iter()
            .map(|x| {
                ctx.fine_outcomes()
                    .iter()
                    .zip(&self.probs[k])
                    .filter(|(c, _)| c.is_subset(x))
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect()
    }

    /// Fine-outcome probabilities of measurement `id`, from the first context including it.
    pub fn measurement_probs(&self, id: usize) -> Vec<f64> {
        let k = self.scenario.contexts_including(id)[0];
        self.marginal_from(id, k)
    }

    /// `P(X)` for any outcome of any measurement, or `None` if `X` is not in any algebra.
    pub fn prob(&self, set: &OutcomeSet) -> Option<f64> {
        for k in 0..self.probs.len() {
            if let Some(p) = self.prob_in_context(k, set) {
                return Some(p);
            }
        }
        None
    }

    /// `P(X)` read off context `k` if `X` is a union of its cells.
    pub fn prob_in_context(&self, k: usize, set: &OutcomeSet) -> Option<f64> {
        let ctx = self.scenario.maximal_measurement(k);
        let mut acc = OutcomeSet::empty(set.universe());
        let mut p = 0.0;
        for (c, q) in ctx.fine_outcomes().iter().zip(&self.probs[k]) {
            if c.is_subset(set) {
                acc = acc.union(c);
                p += q;
            } else if !c.is_disjoint(set) {
                return None;
            }
        }
        (&acc == set).then_some(p)
    }

    /// Normalization, nonnegativity and no-signalling checks.
    pub fn validate(&self, tol: f64) -> ConsistencyReport {
        let s = &*self.scenario;
        let mut violations = Vec::new();
        for (k, table) in self.probs.iter().enumerate() {
            let context = s.maximal_contexts()[k].clone();
            for (cell, &p) in table.iter().enumerate() {
                if p < -tol {
                    violations.push(Violation::Negative {
                        context: context.clone(),
                        cell,
                        value: p,
                    });
                }
            }
            let sum: f64 = table.iter().sum();
            if (sum - 1.0).abs() > tol {
                violations.push(Violation::Normalization { context, sum });
            }
        }
        for id in 0..s.measurements().len() {
            let ctxs = s.contexts_including(id);
            if ctxs.len() < 2 || s.measurement(id).basic_indices().is_empty() {
                continue;
            }
            let reference = self.marginal_from(id, ctxs[0]);
            for &k in &ctxs[1..] {
                let other = self.marginal_from(id, k);
                for (cell, (&pa, &pb)) in reference.iter().zip(&other).enumerate() {
                    if (pa - pb).abs() > tol {
                        violations.push(Violation::Signalling {
                            measurement: s.measurement(id).basic_indices().to_vec(),
                            cell,
                            context_a: s.maximal_contexts()[ctxs[0]].clone(),
                            context_b: s.maximal_contexts()[k].clone(),
                            p_a: pa,
                            p_b: pb,
                        });
                    }
                }
            }
        }
        ConsistencyReport { tol, violations }
    }

    pub fn ensure_consistent(&self, tol: f64) -> Result<()> {
        let report = self.validate(tol);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Inconsistent(report.summary()))
        }
    }

    /// `λ a + (1-λ) b` on the same scenario.
    pub fn mix(&self, other: &Behaviour, lambda: f64) -> Result<Behaviour> {
        if *self.scenario != *other.scenario {
            return Err(Error::ScenarioMismatch("mixing behaviours of different scenarios".into()));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect())
            .collect();
        Behaviour::new(self.scenario.clone(), probs)
    }

    /// Convex combination of behaviours on one scenario; weights are normalized.
    pub fn mixture(parts: &[(f64, &Behaviour)]) -> Result<Behaviour> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("empty mixture".into()))?
            .1;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if total <= 0.0 || parts.iter().any(|(w, _)| *w < 0.0) {
            return Err(Error::Parameter("mixture weights must be nonnegative with positive sum".into()));
        }
        let mut probs: Vec<Vec<f64>> = first.probs.iter().map(|t| vec![0.0; t.len()]).collect();
        for (w, b) in parts {
            if *b.scenario != *first.scenario {
                return Err(Error::ScenarioMismatch("mixing behaviours of different scenarios".into()));
            }
            for (acc, t) in probs.iter_mut().zip(&b.probs) {
                for (a, p) in acc.iter_mut().zip(t) {
                    *a += w / total * p;
                }
            }
        }
        Behaviour::new(first.scenario.clone(), probs)
    }
}

/// Independent product of behaviours on `compose` of their scenarios.
pub fn compose_behaviours(parts: &[&Behaviour]) -> Result<Behaviour> {
    let scenarios: Vec<&Scenario> = parts.iter().map(|b| b.scenario()).collect();
    let composed = Arc::new(crate::scenario::compose(&scenarios)?);
    let mut offsets = Vec::with_capacity(parts.len() + 1);
    let mut acc = 0;
    for s in &scenarios {
        offsets.push(acc);
        acc += s.num_basic();
    }
    offsets.push(acc);
    let space = composed.space();
    let mut probs = Vec::with_capacity(composed.maximal_contexts().len());
    for k in 0..composed.maximal_contexts().len() {
        let m = composed.maximal_measurement(k);
        let basic = m.basic_indices();
        // per component: its maximal context index and the slice of `basic` it owns
        let mut pieces = Vec::with_capacity(parts.len());
        for (c, b) in parts.iter().enumerate() {
            let local: Vec<usize> = basic
                .iter()
                .filter(|&&i| i >= offsets[c] && i < offsets[c + 1])
                .map(|&i| i - offsets[c])
                .collect();
            let kk = b
                .scenario()
                .maximal_contexts()
                .iter()
                .position(|ctx| *ctx == local)
                .ok_or_else(|| Error::Shape("composed context does not split into component contexts".into()))?;
            pieces.push((kk, local));
        }
        let table: Vec<f64> = (0..m.fine_outcomes().len())
            .map(|cell| {
                let labels = m.cell_labels(space, cell);
                let mut p = 1.0;
                let mut pos = 0;
                for (b, (kk, local)) in parts.iter().zip(&pieces) {
                    let sm = b.scenario().maximal_measurement(*kk);
                    let mut idx = 0;
                    for (t, &i) in local.iter().enumerate() {
                        idx = idx * b.scenario().space().cardinalities()[i] + labels[pos + t];
                    }
                    pos += local.len();
                    debug_assert_eq!(sm.basic_indices(), local.as_slice());
                    p *= b.context_probs(*kk)[idx];
                }
                p
            })
            .collect();
        probs.push(table);
    }
    Behaviour::new(composed, probs)
}

/// Uniform distribution on every context.
pub fn uniform(scenario: Arc<Scenario>) -> Behaviour {
    let probs = (0..scenario.maximal_contexts().len())
        .map(|k| {
            let n = scenario.maximal_measurement(k).fine_outcomes().len();
            vec![1.0 / n as f64; n]
        })
        .collect();
    Behaviour::new(scenario, probs).expect("shape matches")
}

/// Point behaviour of atom `gamma`: each context outputs the cell containing it.
pub fn deterministic(scenario: Arc<Scenario>, gamma: usize) -> Result<Behaviour> {
    if gamma >= scenario.num_atoms() {
        return Err(Error::AtomOutOfRange {
            atom: gamma,
            total: scenario.num_atoms(),
        });
    }
    let probs = (0..scenario.maximal_contexts().len())
        .map(|k| {
            scenario
                .maximal_measurement(k)
                .fine_outcomes()
                .iter()
                .map(|c| if c.contains(gamma) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    Behaviour::new(scenario, probs)
}

/// Table order for a CHSH context `[x, 2 + y]` is `(a, b)` in mixed radix, label 0 = +1.
fn chsh_settings(scenario: &Scenario, k: usize) -> (usize, usize) {
    let ctx = &scenario.maximal_contexts()[k];
    (ctx[0], ctx[1] - 2)
}

fn chsh_table(f: impl Fn(usize, usize, usize, usize) -> f64) -> Behaviour {
    let s = Arc::new(chsh_scenario());
    let probs = (0..4)
        .map(|k| {
            let (x, y) = chsh_settings(&s, k);
            (0..4).map(|c| f(c / 2, c % 2, x, y)).collect()
        })
        .collect();
    Behaviour::new(s, probs).expect("shape matches")
}

/// `P(a,b|x,y) = 1/2` if `a ⊕ b = x·y`.
pub fn pr_box() -> Behaviour {
    chsh_table(|a, b, x, y| if (a ^ b) == (x & y) { 0.5 } else { 0.0 })
}

/// `λ · PR + (1 - λ) · uniform` on CHSH.
pub fn isotropic(lambda: f64) -> Result<Behaviour> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(chsh_table(|a, b, x, y| {
        let pr = if (a ^ b) == (x & y) { 0.5 } else { 0.0 };
        lambda * pr + (1.0 - lambda) * 0.25
    }))
}

/// CHSH behaviour with unbiased marginals and correlators `E_xy = corr[x][y]`.
pub fn from_correlators(corr: [[f64; 2]; 2]) -> Result<Behaviour> {
    for row in &corr {
        for e in row {
            if !(-1.0..=1.0).contains(e) {
                return Err(Error::Correlator(format!("{e} outside [-1, 1]")));
            }
        }
    }
    Ok(chsh_table(|a, b, x, y| {
        let sign = if a == b { 1.0 } else { -1.0 };
        (1.0 + sign * corr[x][y]) / 4.0
    }))
}

/// A linear functional on behaviours, one weight per (maximal context, fine outcome).
#[derive(Clone, Debug)]
pub struct BellFunctional {
    scenario: Arc<Scenario>,
    coefficients: Vec<Vec<f64>>,
}

impl BellFunctional {
    pub fn new(scenario: Arc<Scenario>, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.len() != scenario.maximal_contexts().len()
            || coefficients
                .iter()
                .enumerate()
                .any(|(k, c)| c.len() != scenario.maximal_measurement(k).fine_outcomes().len())
        {
            return Err(Error::Shape("functional shape does not match scenario".into()));
        }
        if coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Shape("non-finite functional coefficient".into()));
        }
        Ok(BellFunctional {
            scenario,
            coefficients,
        })
    }

    /// `S = E_00 + E_01 + E_10 - E_11`.
    pub fn chsh() -> Self {
        let s = Arc::new(chsh_scenario());
        let coefficients = (0..4)
            .map(|k| {
                let (x, y) = chsh_settings(&s, k);
                let sign = if x == 1 && y == 1 { -1.0 } else { 1.0 };
                (0..4)
                    .map(|c| if c / 2 == c % 2 { sign } else { -sign })
                    .collect()
            })
            .collect();
        BellFunctional::new(s, coefficients).expect("shape matches")
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn evaluate(&self, b: &Behaviour) -> Result<f64> {
        if *self.scenario != *b.scenario {
            return Err(Error::ScenarioMismatch(
                "functional and behaviour live on different scenarios".into(),
            ));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(&b.probs)
            .flat_map(|(c, p)| c.iter().zip(p).map(|(x, y)| x * y))
            .sum())
    }

    /// The functional as a vector over atoms: value of each deterministic behaviour.
    pub fn atom_values(&self) -> Vec<f64> {
        let s = &self.scenario;
        (0..s.num_atoms())
            .map(|g| {
                (0..s.maximal_contexts().len())
                    .map(|k| {
                        let cell = s
                            .maximal_measurement(k)
                            .fine_outcomes()
                            .iter()
                            .position(|c| c.contains(g))
                            .expect("cells partition the space");
                        self.coefficients[k][cell]
                    })
                    .sum()
            })
            .collect()
    }
}

pub fn chsh_value(b: &Behaviour) -> Result<f64> {
    BellFunctional::chsh().evaluate(b)
}

/// Correlators `E_xy = P(a = b | x, y) - P(a ≠ b | x, y)` of a CHSH behaviour.
pub fn correlators(b: &Behaviour) -> Result<[[f64; 2]; 2]> {
    if *b.scenario != chsh_scenario() {
        return Err(Error::ScenarioMismatch("expected the CHSH scenario".into()));
    }
    let mut e = [[0.0; 2]; 2];
    for k in 0..4 {
        let (x, y) = chsh_settings(&b.scenario, k);
        let p = &b.probs[k];
        e[x][y] = p[0] + p[3] - p[1] - p[2];
    }
    Ok(e)
}

#[derive(Clone, Debug, Serialize)]
pub struct TlmReport {
    pub satisfied: bool,
    /// `π - max_xy |Σ asin E - 2 asin E_xy|`; negative when violated.
    pub margin: f64,
    /// Distinguished setting pair attaining the maximum.
    pub worst: (usize, usize),
    pub correlators: [[f64; 2]; 2],
}

/// Arcsine inequality on the four CHSH correlators, maximized over the distinguished pair.
pub fn tlm_check(b: &Behaviour, tol: f64) -> Result<TlmReport> {
    let e = correlators(b)?;
    let mut asin = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            if e[x][y].abs() > 1.0 + tol {
                return Err(Error::Correlator(format!("E_{x}{y} = {}", e[x][y])));
            }
            asin[x][y] = e[x][y].clamp(-1.0, 1.0).asin();
        }
    }
    let total: f64 = asin.iter().flatten().sum();
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for x in 0..2 {
        for y in 0..2 {
            let v = (total - 2.0 * asin[x][y]).abs();
            if v > best.0 {
                best = (v, (x, y));
            }
        }
    }
    let margin = PI - best.0;
    Ok(TlmReport {
        satisfied: margin >= -tol,
        margin,
        worst: best.1,
        correlators: e,
    })
}

/// Probabilities of the cells of a branching measurement, each read from the joint
/// measurement it came from.
pub fn extend_to_branching(b: &Behaviour, mb: &BranchingMeasurement) -> Result<Vec<f64>> {
    b.ensure_consistent(DEFAULT_TOL)?;
    Ok(mb
        .origins
        .iter()
        .map(|o| b.measurement_probs(o.measurement)[o.cell])
        .collect())
}

/// Same cells, read from the last context including each second-stage measurement.
pub fn extend_to_branching_alt(b: &Behaviour, mb: &BranchingMeasurement) -> Vec<f64> {
    mb.partition
        .iter()
        .zip(&mb.origins)
        .map(|(cell, o)| {
            let ctxs = b.scenario.contexts_including(o.measurement);
            let k = *ctxs.last().expect("every measurement lies in a context");
            b.prob_in_context(k, cell).expect("cell is a union of context cells")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::enumerate_branching;
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_values() {
        assert_abs_diff_eq!(chsh_value(&pr_box()).unwrap(), 4.0, epsilon = 1e-12);
        let u = uniform(Arc::new(chsh_scenario()));
        assert_abs_diff_eq!(chsh_value(&u).unwrap(), 0.0, epsilon = 1e-12);
        let iso0 = isotropic(0.0).unwrap();
        assert_eq!(iso0.tables(), u.tables());
        for lambda in [0.1, 0.5, 0.9] {
            let v = chsh_value(&isotropic(lambda).unwrap()).unwrap();
            assert_abs_diff_eq!(v, 4.0 * lambda, epsilon = 1e-12);
        }
        assert!(isotropic(1.5).is_err());
    }

    #[test]
    fn deterministic_chsh_maximum_is_two() {
        let s = Arc::new(chsh_scenario());
        let mut best = f64::NEG_INFINITY;
        for g in 0..16 {
            let b = deterministic(s.clone(), g).unwrap();
            assert!(b.validate(1e-12).is_valid());
            let v = chsh_value(&b).unwrap();
            assert!([-2.0, 2.0].contains(&v), "value {v}");
            best = best.max(v);
        }
        assert_eq!(best, 2.0);
        assert!(deterministic(s, 16).is_err());
    }

    #[test]
    fn validation_flags_signalling() {
        assert!(pr_box().validate(1e-12).is_valid());
        assert!(uniform(Arc::new(chsh_scenario())).validate(1e-12).is_valid());
        let s = Arc::new(chsh_scenario());
        let bad = Behaviour::new(
            s,
            vec![
                vec![0.5, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 0.5, 0.5],
                vec![0.25; 4],
                vec![0.25; 4],
            ],
        )
        .unwrap();
        let report = bad.validate(1e-9);
        assert!(!report.is_valid());
        let sig = report
            .violations
            .iter()
            .find_map(|v| match v {
                Violation::Signalling {
                    measurement, p_a, p_b, ..
                } if measurement == &vec![0] => Some((*p_a, *p_b)),
                _ => None,
            })
            .expect("marginal of basic 0 flagged");
        assert_eq!(sig, (1.0, 0.0));
    }

    #[test]
    fn shape_errors() {
        let s = Arc::new(chsh_scenario());
        assert!(Behaviour::new(s.clone(), vec![vec![0.25; 4]; 3]).is_err());
        assert!(Behaviour::new(s, vec![vec![0.25; 3]; 4]).is_err());
    }

    #[test]
    fn tlm_examples() {
        let u = uniform(Arc::new(chsh_scenario()));
        let r = tlm_check(&u, 1e-9).unwrap();
        assert!(r.satisfied);
        assert_abs_diff_eq!(r.margin, PI, epsilon = 1e-12);

        let r = tlm_check(&pr_box(), 1e-9).unwrap();
        assert!(!r.satisfied);
        assert_abs_diff_eq!(r.margin, PI - 2.0 * PI, epsilon = 1e-12);

        let r = tlm_check(&isotropic(1.0 / 2f64.sqrt()).unwrap(), 1e-9).unwrap();
        assert!(r.satisfied);
        assert_abs_diff_eq!(r.margin, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn branching_extension() {
        let b = isotropic(0.6).unwrap();
        let s = b.scenario().clone();
        for mb in enumerate_branching(&s).unwrap() {
            let p = extend_to_branching(&b, &mb).unwrap();
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            let q = extend_to_branching_alt(&b, &mb);
            for (x, y) in p.iter().zip(&q) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
        // trivial branching on a context restricts to its table
        let mb = BranchingMeasurement::trivial(&s, s.maximal_id(2));
        assert_eq!(extend_to_branching(&b, &mb).unwrap(), b.context_probs(2));
    }

    #[test]
    fn x0_branch_cells() {
        let b = pr_box();
        let s = b.scenario().clone();
        let c00 = s.measurement_id(&[0, 2]).unwrap();
        let c01 = s.measurement_id(&[0, 3]).unwrap();
        let mb = BranchingMeasurement::new(&s, s.basic_id(0), vec![c00, c01]).unwrap();
        let p = extend_to_branching(&b, &mb).unwrap();
        // a = +1 uses y = 0 cells (++, +-); a = -1 uses y = 1 cells (-+, --)
        assert_eq!(p, vec![0.5, 0.0, 0.0, 0.5]);
        assert!(extend_to_branching(
            &Behaviour::new(
                s.clone().into(),
                vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5], vec![0.25; 4], vec![0.25; 4]]
            )
            .unwrap(),
            &mb
        )
        .is_err());
    }
}
