//! Ordinary quantum models: a pure state and projective measurements on a
//! finite-dimensional Hilbert space.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::behaviour::Behaviour;
use crate::error::{Error, Result};
use crate::scenario::{chsh_scenario, Scenario};

pub type C64 = Complex<f64>;

/// Entrywise tolerance for model invariants.
pub const MODEL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct QuantumModel {
    dim: usize,
    state: DVector<C64>,
    projectors: BTreeMap<(usize, usize), DMatrix<C64>>,
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl QuantumModel {
    /// Projectors are symmetrized to be Hermitian; a warning is logged when that moves
    /// an entry by more than `MODEL_TOL`.
    pub fn new(
        state: DVector<C64>,
        projectors: BTreeMap<(usize, usize), DMatrix<C64>>,
    ) -> Result<Self> {
        let dim = state.len();
        if dim == 0 {
            return Err(Error::Model("zero-dimensional state".into()));
        }
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Model(format!("state norm {norm} is not 1")));
        }
        let mut clean = BTreeMap::new();
        for (key, e) in projectors {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(Error::Model(format!(
                    "projector {:?} is {}x{}, expected {dim}x{dim}",
                    key,
                    e.nrows(),
                    e.ncols()
                )));
            }
            let adj = e.adjoint();
            let drift = max_abs(&(&e - &adj));
            if drift > MODEL_TOL {
                log::warn!("projector {key:?} not Hermitian (drift {drift:.2e}); symmetrized");
            }
            clean.insert(key, (&e + adj).scale(0.5));
        }
        Ok(QuantumModel {
            dim,
            state,
            projectors: clean,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn state(&self) -> &DVector<C64> {
        &self.state
    }

    pub fn projectors(&self) -> &BTreeMap<(usize, usize), DMatrix<C64>> {
        &self.projectors
    }

    pub fn projector(&self, i: usize, a: usize) -> Result<&DMatrix<C64>> {
        self.projectors
            .get(&(i, a))
            .ok_or_else(|| Error::Model(format!("missing projector for measurement {i} outcome {a}")))
    }

    /// Completeness per basic measurement and commutation across jointly
    /// performable ones.
    pub fn check(&self, scenario: &Scenario, tol: f64) -> Result<()> {
        let id = DMatrix::<C64>::identity(self.dim, self.dim);
        let cards = scenario.space().cardinalities();
        for (i, &card) in cards.iter().enumerate() {
            let mut sum = DMatrix::<C64>::zeros(self.dim, self.dim);
            for a in 0..card {
                sum += self.projector(i, a)?;
            }
            let err = max_abs(&(sum - &id));
            if err > tol {
                return Err(Error::Model(format!(
                    "projectors of measurement {i} do not sum to identity (max deviation {err:.3e})"
                )));
            }
        }
        for i in 0..cards.len() {
            for j in (i + 1)..cards.len() {
                if !scenario.jointly_performable(i, j) {
                    continue;
                }
                for a in 0..cards[i] {
                    for b in 0..cards[j] {
                        let e = self.projector(i, a)?;
                        let f = self.projector(j, b)?;
                        let err = max_abs(&(e * f - f * e));
                        if err > tol {
                            return Err(Error::Model(format!(
                                "[E({i},{a}), E({j},{b})] has norm {err:.3e}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_chain(&self, ops: &[(usize, usize)], v: &DVector<C64>) -> Result<DVector<C64>> {
        let mut out = v.clone();
        for &(i, a) in ops.iter().rev() {
            out = self.projector(i, a)? * out;
        }
        Ok(out)
    }

    /// `P(X) = <ψ| E^{X_{i_1}} .. E^{X_{i_n}} |ψ>` for every fine outcome of every context.
    pub fn behaviour(&self, scenario: Arc<Scenario>) -> Result<Behaviour> {
        self.check(&scenario, MODEL_TOL)?;
        let mut probs = Vec::with_capacity(scenario.maximal_contexts().len());
        for k in 0..scenario.maximal_contexts().len() {
            let m = scenario.maximal_measurement(k);
            let mut table = Vec::with_capacity(m.fine_outcomes().len());
            for c in 0..m.fine_outcomes().len() {
                let labels = m.cell_labels(scenario.space(), c);
                let ops: Vec<(usize, usize)> = m
                    .basic_indices()
                    .iter()
                    .copied()
                    .zip(labels)
                    .collect();
                let v = self.apply_chain(&ops, &self.state)?;
                let p = self.state.dotc(&v);
                if p.im.abs() > 1e-9 {
                    return Err(Error::Model(format!("complex probability {p}")));
                }
                table.push(p.re);
            }
            probs.push(table);
        }
        let b = Behaviour::new(scenario, probs)?;
        debug_assert!(b.validate(1e-8).is_valid());
        Ok(b)
    }

    /// Atom vectors `E^{X_1} .. E^{X_p} |ψ>`, one column per atom.
    pub fn atom_vectors(&self, scenario: &Scenario) -> Result<DMatrix<C64>> {
        let n = scenario.num_atoms();
        let mut out = DMatrix::<C64>::zeros(self.dim, n);
        for g in 0..n {
            let ops: Vec<(usize, usize)> = scenario.space().labels(g).into_iter().enumerate().collect();
            out.set_column(g, &self.apply_chain(&ops, &self.state)?);
        }
        Ok(out)
    }

    /// Real part of the atom-vector Gram matrix: a strongly positive joint decoherence
    /// matrix reproducing this model's behaviour.
    pub fn spjqm_witness(&self, scenario: &Scenario) -> Result<DMatrix<f64>> {
        self.check(scenario, MODEL_TOL)?;
        let v = self.atom_vectors(scenario)?;
        let g = v.adjoint() * &v;
        Ok(g.map(|z| z.re))
    }
}

fn qubit_projector(theta: f64) -> DMatrix<C64> {
    // (I + cos θ Z + sin θ X) / 2
    let c = theta.cos();
    let s = theta.sin();
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new((1.0 + c) / 2.0, 0.0),
            C64::new(s / 2.0, 0.0),
            C64::new(s / 2.0, 0.0),
            C64::new((1.0 - c) / 2.0, 0.0),
        ],
    )
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

fn local_pair(p0: DMatrix<C64>, left: bool) -> [DMatrix<C64>; 2] {
    let id = DMatrix::<C64>::identity(2, 2);
    let p1 = &id - &p0;
    if left {
        [kron(&p0, &id), kron(&p1, &id)]
    } else {
        [kron(&id, &p0), kron(&id, &p1)]
    }
}

/// Two-qubit model on the CHSH scenario from a state and four measurement projectors
/// (outcome 0) given as 2x2 matrices: Alice's two settings, then Bob's.
pub fn two_qubit_model(state: DVector<C64>, outcome0: [DMatrix<C64>; 4]) -> Result<QuantumModel> {
    let mut projectors = BTreeMap::new();
    for (i, p0) in outcome0.into_iter().enumerate() {
        let [e0, e1] = local_pair(p0, i < 2);
        projectors.insert((i, 0), e0);
        projectors.insert((i, 1), e1);
    }
    QuantumModel::new(state, projectors)
}

/// Singlet `(|01> - |10>)/√2` with settings in the x-z plane chosen so that
/// `S = E_00 + E_01 + E_10 - E_11 = 2√2`.
pub fn singlet_chsh_model() -> QuantumModel {
    let r = 1.0 / 2f64.sqrt();
    let state = DVector::from_vec(vec![
        C64::new(0.0, 0.0),
        C64::new(r, 0.0),
        C64::new(-r, 0.0),
        C64::new(0.0, 0.0),
    ]);
    let angles = [0.0, PI / 2.0, 5.0 * PI / 4.0, 3.0 * PI / 4.0];
    two_qubit_model(state, angles.map(qubit_projector)).expect("valid singlet model")
}

/// One-dimensional model where every basic measurement deterministically gives outcome 0.
pub fn trivial_model(scenario: &Scenario) -> QuantumModel {
    let one = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    let zero = DMatrix::from_element(1, 1, C64::new(0.0, 0.0));
    let mut projectors = BTreeMap::new();
    for (i, &card) in scenario.space().cardinalities().iter().enumerate() {
        for a in 0..card {
            projectors.insert((i, a), if a == 0 { one.clone() } else { zero.clone() });
        }
    }
    QuantumModel::new(DVector::from_element(1, C64::new(1.0, 0.0)), projectors)
        .expect("trivial model is valid")
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> DVector<C64> {
    let v = DVector::from_fn(dim, |_, _| {
        C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
    });
    let n = v.norm();
    v.unscale(n)
}

/// Random pure two-qubit state with random local projective measurements on CHSH.
pub fn random_chsh_model<R: Rng>(rng: &mut R) -> QuantumModel {
    let state = random_unit(rng, 4);
    let outcome0 = [(); 4].map(|_| {
        let v = random_unit(rng, 2);
        &v * v.adjoint()
    });
    two_qubit_model(state, outcome0).expect("random local model is valid")
}

/// Convenience: the CHSH scenario behind [`singlet_chsh_model`].
pub fn singlet_behaviour() -> Behaviour {
    singlet_chsh_model()
        .behaviour(Arc::new(chsh_scenario()))
        .expect("singlet model is valid")
}
