//! Joint measurement scenarios over a product NC space.
//!
//! Atoms of the space are tuples `(a_0, .., a_{p-1})` of outcome labels, one per
//! basic measurement, indexed in mixed radix with factor 0 most significant.
//! Every outcome of every measurement is an [`OutcomeSet`] over those atoms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// Hard cap on the number of atoms a scenario may have.
pub const DEFAULT_ATOM_BUDGET: usize = 4096;

/// Largest joint measurement (in basic measurements) whose closure we enumerate.
const MAX_CONTEXT_SIZE: usize = 16;

/// A subset of the NC space.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeSet(FixedBitSet);

impl OutcomeSet {
    pub fn empty(universe: usize) -> Self {
        OutcomeSet(FixedBitSet::with_capacity(universe))
    }

    pub fn full(universe: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(universe);
        bits.insert_range(..);
        OutcomeSet(bits)
    }

    pub fn from_atoms<I: IntoIterator<Item = usize>>(universe: usize, atoms: I) -> Self {
        let mut bits = FixedBitSet::with_capacity(universe);
        for a in atoms {
            bits.insert(a);
        }
        OutcomeSet(bits)
    }

    /// Size of the ambient space.
    pub fn universe(&self) -> usize {
        self.0.len()
    }

    pub fn count(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.0.contains(atom)
    }

    pub fn insert(&mut self, atom: usize) {
        self.0.insert(atom);
    }

    pub fn atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn union(&self, other: &OutcomeSet) -> OutcomeSet {
        let mut bits = self.0.clone();
        bits.union_with(&other.0);
        OutcomeSet(bits)
    }

    pub fn intersection(&self, other: &OutcomeSet) -> OutcomeSet {
        let mut bits = self.0.clone();
        bits.intersect_with(&other.0);
        OutcomeSet(bits)
    }

    pub fn complement(&self) -> OutcomeSet {
        let mut bits = self.0.clone();
        bits.toggle_range(..);
        OutcomeSet(bits)
    }

    pub fn is_subset(&self, other: &OutcomeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &OutcomeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }
}

impl fmt::Debug for OutcomeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.ones()).finish()
    }
}

/// The product space `Ξ_0 × .. × Ξ_{p-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NcSpace {
    cards: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl NcSpace {
    pub fn new(cards: &[usize], budget: usize) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::EmptyScenario);
        }
        let mut total: usize = 1;
        for (index, &c) in cards.iter().enumerate() {
            if c == 0 {
                return Err(Error::ZeroCardinality { index });
            }
            total = total.checked_mul(c).ok_or(Error::AtomBudget {
                required: usize::MAX,
                budget,
            })?;
        }
        if total > budget {
            return Err(Error::AtomBudget {
                required: total,
                budget,
            });
        }
        let mut strides = vec![1; cards.len()];
        for i in (0..cards.len() - 1).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        Ok(NcSpace {
            cards: cards.to_vec(),
            strides,
            total,
        })
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn factors(&self) -> usize {
        self.cards.len()
    }

    pub fn total_size(&self) -> usize {
        self.total
    }

    pub fn atom_index(&self, labels: &[usize]) -> usize {
        labels.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn label(&self, atom: usize, factor: usize) -> usize {
        (atom / self.strides[factor]) % self.cards[factor]
    }

    pub fn labels(&self, atom: usize) -> Vec<usize> {
        (0..self.cards.len()).map(|i| self.label(atom, i)).collect()
    }
}

/// A joint measurement of a set of basic measurements, with its partition of Ξ.
#[derive(Clone, Debug)]
pub struct Measurement {
    basic: Vec<usize>,
    cells: Vec<OutcomeSet>,
}

impl Measurement {
    fn new(space: &NcSpace, basic: Vec<usize>) -> Self {
        let radices: Vec<usize> = basic.iter().map(|&i| space.cards[i]).collect();
        let ncells: usize = radices.iter().product();
        let mut cells = vec![OutcomeSet::empty(space.total); ncells];
        for atom in 0..space.total {
            let mut c = 0;
            for (&i, &r) in basic.iter().zip(&radices) {
                c = c * r + space.label(atom, i);
            }
            cells[c].insert(atom);
        }
        Measurement { basic, cells }
    }

    /// Sorted basic measurement indices.
    pub fn basic_indices(&self) -> &[usize] {
        &self.basic
    }

    /// Fine outcomes in mixed-radix order of their labels (first index most significant).
    pub fn fine_outcomes(&self) -> &[OutcomeSet] {
        &self.cells
    }

    /// Labels `(a_{i_1}, .., a_{i_k})` of the given fine outcome.
    pub fn cell_labels(&self, space: &NcSpace, cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.basic.len()];
        let mut rest = cell;
        for (k, &i) in self.basic.iter().enumerate().rev() {
            out[k] = rest % space.cards[i];
            rest /= space.cards[i];
        }
        out
    }

    pub fn includes(&self, other: &Measurement) -> bool {
        other.basic.iter().all(|i| self.basic.binary_search(i).is_ok())
    }
}

/// NC space plus the meet-semilattice of jointly performable measurements.
#[derive(Clone, Debug)]
pub struct Scenario {
    space: NcSpace,
    maximal: Vec<Vec<usize>>,
    measurements: Vec<Measurement>,
    lookup: HashMap<Vec<usize>, usize>,
    maximal_ids: Vec<usize>,
    labels: BTreeMap<usize, String>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.maximal == other.maximal
    }
}

impl Scenario {
    /// Builds a scenario from factor cardinalities and jointly performable sets.
    ///
    /// Duplicate and dominated contexts are dropped; basic measurements not named by
    /// any context become singleton contexts.
    pub fn build(factors: &[usize], contexts: &[Vec<usize>]) -> Result<Self> {
        Self::build_with_budget(factors, contexts, DEFAULT_ATOM_BUDGET)
    }

    pub fn build_with_budget(
        factors: &[usize],
        contexts: &[Vec<usize>],
        budget: usize,
    ) -> Result<Self> {
        let space = NcSpace::new(factors, budget)?;
        let p = factors.len();
        let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();
        for ctx in contexts {
            let mut c: Vec<usize> = ctx.clone();
            c.sort_unstable();
            c.dedup();
            if let Some(&bad) = c.iter().find(|&&i| i >= p) {
                return Err(Error::BasicIndexOutOfRange {
                    index: bad,
                    count: p,
                });
            }
            if c.len() > MAX_CONTEXT_SIZE {
                return Err(Error::EnumerationBudget {
                    what: "basic measurements in one context",
                    budget: MAX_CONTEXT_SIZE,
                });
            }
            sets.insert(c);
        }
        let all: Vec<Vec<usize>> = sets.into_iter().collect();
        let mut maximal: Vec<Vec<usize>> = Vec::new();
        for (k, c) in all.iter().enumerate() {
            let dominated = all
                .iter()
                .enumerate()
                .any(|(j, d)| j != k && d.len() > c.len() && is_sub(c, d));
            if dominated {
                if !c.is_empty() {
                    log::warn!("context {:?} is contained in another context; dropped", c);
                }
            } else if !c.is_empty() {
                maximal.push(c.clone());
            }
        }
        for i in 0..p {
            if !maximal.iter().any(|c| c.contains(&i)) {
                maximal.push(vec![i]);
            }
        }
        maximal.sort();
        Ok(Self::from_parts(space, maximal, BTreeMap::new()))
    }

    fn from_parts(space: NcSpace, maximal: Vec<Vec<usize>>, labels: BTreeMap<usize, String>) -> Self {
        let mut closure: BTreeSet<Vec<usize>> = BTreeSet::new();
        for ctx in &maximal {
            let k = ctx.len();
            for mask in 0u32..(1u32 << k) {
                let sub: Vec<usize> = (0..k)
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| ctx[b])
                    .collect();
                closure.insert(sub);
            }
        }
        let mut order: Vec<Vec<usize>> = closure.into_iter().collect();
        order.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let measurements: Vec<Measurement> = order
            .iter()
            .map(|b| Measurement::new(&space, b.clone()))
            .collect();
        let lookup: HashMap<Vec<usize>, usize> = order
            .iter()
            .enumerate()
            .map(|(k, b)| (b.clone(), k))
            .collect();
        let maximal_ids = maximal.iter().map(|c| lookup[c]).collect();
        Scenario {
            space,
            maximal,
            measurements,
            lookup,
            maximal_ids,
            labels,
        }
    }

    pub fn with_labels(mut self, labels: BTreeMap<usize, String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn labels(&self) -> &BTreeMap<usize, String> {
        &self.labels
    }

    pub fn space(&self) -> &NcSpace {
        &self.space
    }

    pub fn num_atoms(&self) -> usize {
        self.space.total
    }

    pub fn num_basic(&self) -> usize {
        self.space.cards.len()
    }

    pub fn maximal_contexts(&self) -> &[Vec<usize>] {
        &self.maximal
    }

    /// All measurements of the semilattice, empty measurement first, then by size.
    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn measurement(&self, id: usize) -> &Measurement {
        &self.measurements[id]
    }

    pub fn measurement_id(&self, basic: &[usize]) -> Option<usize> {
        self.lookup.get(basic).copied()
    }

    /// Measurement id of the `k`-th maximal context.
    pub fn maximal_id(&self, k: usize) -> usize {
        self.maximal_ids[k]
    }

    pub fn maximal_measurement(&self, k: usize) -> &Measurement {
        &self.measurements[self.maximal_ids[k]]
    }

    /// Ids of the basic (singleton) measurement `i`.
    pub fn basic_id(&self, i: usize) -> usize {
        self.lookup[&vec![i]]
    }

    /// Indices of maximal contexts that include measurement `id`.
    pub fn contexts_including(&self, id: usize) -> Vec<usize> {
        let m = &self.measurements[id];
        (0..self.maximal.len())
            .filter(|&k| self.maximal_measurement(k).includes(m))
            .collect()
    }

    /// Ids of measurements that include measurement `id` (itself among them).
    pub fn measurements_including(&self, id: usize) -> Vec<usize> {
        let m = &self.measurements[id];
        (0..self.measurements.len())
            .filter(|&k| self.measurements[k].includes(m))
            .collect()
    }

    pub fn jointly_performable(&self, i: usize, j: usize) -> bool {
        let mut key = vec![i, j];
        key.sort_unstable();
        key.dedup();
        self.lookup.contains_key(&key)
    }

    /// Cylinder set `{γ : γ_i = a}`.
    pub fn outcome_of_basic(&self, i: usize, a: usize) -> Result<OutcomeSet> {
        if i >= self.num_basic() {
            return Err(Error::BasicIndexOutOfRange {
                index: i,
                count: self.num_basic(),
            });
        }
        let card = self.space.cards[i];
        if a >= card {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: a,
                card,
            });
        }
        Ok(OutcomeSet::from_atoms(
            self.num_atoms(),
            (0..self.num_atoms()).filter(|&g| self.space.label(g, i) == a),
        ))
    }

    /// All `2^k` unions of the `k` fine outcomes of a measurement.
    pub fn algebra_outcomes(&self, id: usize) -> Result<Vec<OutcomeSet>> {
        let cells = self.measurements[id].fine_outcomes();
        if cells.len() > 20 {
            return Err(Error::EnumerationBudget {
                what: "outcomes in one measurement algebra",
                budget: 1 << 20,
            });
        }
        let n = self.num_atoms();
        Ok((0u32..(1u32 << cells.len()))
            .map(|mask| {
                let mut set = OutcomeSet::empty(n);
                for (b, c) in cells.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        set = set.union(c);
                    }
                }
                set
            })
            .collect())
    }

    /// For a set, the label it fixes for each basic measurement, if any.
    pub fn implied_labels(&self, set: &OutcomeSet) -> Vec<Option<usize>> {
        let mut atoms = set.atoms();
        let Some(first) = atoms.next() else {
            return vec![None; self.num_basic()];
        };
        let mut out: Vec<Option<usize>> = self.space.labels(first).into_iter().map(Some).collect();
        for g in atoms {
            for (i, slot) in out.iter_mut().enumerate() {
                if let Some(a) = *slot {
                    if self.space.label(g, i) != a {
                        *slot = None;
                    }
                }
            }
        }
        out
    }

    /// Canonical textual key for a measurement, e.g. `[0,2]`.
    pub fn context_key(basic: &[usize]) -> String {
        let parts: Vec<String> = basic.iter().map(|i| i.to_string()).collect();
        format!("[{}]", parts.join(","))
    }
}

fn is_sub(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Product of scenarios: NC spaces multiply, contexts pick one maximal context per factor.
pub fn compose(scenarios: &[&Scenario]) -> Result<Scenario> {
    compose_with_budget(scenarios, DEFAULT_ATOM_BUDGET)
}

pub fn compose_with_budget(scenarios: &[&Scenario], budget: usize) -> Result<Scenario> {
    if scenarios.is_empty() {
        return Err(Error::EmptyScenario);
    }
    let mut factors = Vec::new();
    let mut offsets = Vec::new();
    let mut labels = BTreeMap::new();
    for (k, s) in scenarios.iter().enumerate() {
        offsets.push(factors.len());
        for (i, l) in s.labels() {
            let l = if scenarios.len() > 1 {
                format!("S{k}:{l}")
            } else {
                l.clone()
            };
            labels.insert(i + factors.len(), l);
        }
        factors.extend_from_slice(s.space().cardinalities());
    }
    let space = NcSpace::new(&factors, budget)?;
    let mut contexts: Vec<Vec<usize>> = vec![Vec::new()];
    for (s, &off) in scenarios.iter().zip(&offsets) {
        let mut next = Vec::with_capacity(contexts.len() * s.maximal_contexts().len());
        for prefix in &contexts {
            for ctx in s.maximal_contexts() {
                let mut c = prefix.clone();
                c.extend(ctx.iter().map(|i| i + off));
                next.push(c);
            }
        }
        contexts = next;
    }
    contexts.sort();
    if contexts.iter().any(|c| c.len() > MAX_CONTEXT_SIZE) {
        return Err(Error::EnumerationBudget {
            what: "basic measurements in one context",
            budget: MAX_CONTEXT_SIZE,
        });
    }
    Ok(Scenario::from_parts(space, contexts, labels))
}

/// The `(n, m, d)` Bell scenario: `n` wings, `m` settings per wing, `d` outcomes each.
///
/// Measurement `x` of wing `w` has basic index `w * m + x`.
pub fn bell_scenario(n: usize, m: usize, d: usize) -> Result<Scenario> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::Parameter(format!(
            "bell scenario needs n, m, d >= 1, got ({n}, {m}, {d})"
        )));
    }
    let wing = Scenario::build(&vec![d; m], &(0..m).map(|x| vec![x]).collect::<Vec<_>>())?;
    let wings: Vec<&Scenario> = (0..n).map(|_| &wing).collect();
    let mut s = compose(&wings)?;
    let mut labels = BTreeMap::new();
    for w in 0..n {
        for x in 0..m {
            let wing_name = wing_label(w);
            labels.insert(w * m + x, format!("{wing_name}:x={x}"));
        }
    }
    s.labels = labels;
    Ok(s)
}

fn wing_label(w: usize) -> String {
    if w < 26 {
        char::from(b'A' + w as u8).to_string()
    } else {
        format!("W{w}")
    }
}

/// The CHSH scenario, `bell_scenario(2, 2, 2)`.
pub fn chsh_scenario() -> Scenario {
    bell_scenario(2, 2, 2).expect("CHSH scenario fits the default budget")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incompatible_pair() {
        let s = Scenario::build(&[2, 2], &[vec![0], vec![1]]).unwrap();
        assert_eq!(s.num_atoms(), 4);
        assert_eq!(s.maximal_contexts(), &[vec![0], vec![1]]);
        // empty, {0}, {1}
        assert_eq!(s.measurements().len(), 3);
    }

    #[test]
    fn chsh_from_contexts() {
        let s = Scenario::build(&[2, 2, 2, 2], &[vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]])
            .unwrap();
        assert_eq!(s.num_atoms(), 16);
        assert_eq!(s.maximal_contexts().len(), 4);
        assert_eq!(s, chsh_scenario());
    }

    #[test]
    fn duplicate_contexts() {
        let s = Scenario::build(&[2], &[vec![0], vec![0]]).unwrap();
        assert_eq!(s.num_basic(), 1);
        assert_eq!(s.maximal_contexts(), &[vec![0]]);
    }

    #[test]
    fn dominated_context_dropped() {
        let s = Scenario::build(&[2, 2], &[vec![0], vec![0, 1]]).unwrap();
        assert_eq!(s.maximal_contexts(), &[vec![0, 1]]);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(Scenario::build(&[], &[]), Err(Error::EmptyScenario)));
        assert!(matches!(
            Scenario::build(&[2, 2], &[vec![0, 5]]),
            Err(Error::BasicIndexOutOfRange { index: 5, .. })
        ));
        assert!(matches!(
            Scenario::build(&[2, 0], &[]),
            Err(Error::ZeroCardinality { index: 1 })
        ));
        assert!(matches!(
            Scenario::build(&[2; 13], &[]),
            Err(Error::AtomBudget { .. })
        ));
    }

    #[test]
    fn bell_shapes() {
        let chsh = bell_scenario(2, 2, 2).unwrap();
        assert_eq!(chsh.num_basic(), 4);
        assert_eq!(chsh.maximal_contexts().len(), 4);
        assert_eq!(chsh.num_atoms(), 16);

        let single = bell_scenario(1, 3, 2).unwrap();
        assert_eq!(single.num_atoms(), 8);
        assert_eq!(single.maximal_contexts(), &[vec![0], vec![1], vec![2]]);

        let double = compose(&[&chsh, &chsh]).unwrap();
        assert_eq!(double.num_atoms(), 256);
        assert_eq!(double.maximal_contexts().len(), 16);
    }

    #[test]
    fn compose_identity_and_wings() {
        let chsh = chsh_scenario();
        assert_eq!(compose(&[&chsh]).unwrap(), chsh);
        let wing = bell_scenario(1, 2, 2).unwrap();
        assert_eq!(compose(&[&wing, &wing]).unwrap(), chsh);
    }

    #[test]
    fn cylinders() {
        let chsh = chsh_scenario();
        let x = chsh.outcome_of_basic(0, 0).unwrap();
        assert_eq!(x.count(), 8);
        let y = chsh.outcome_of_basic(2, 1).unwrap();
        assert_eq!(x.intersection(&y).count(), 4);
        let s = bell_scenario(1, 3, 2).unwrap();
        assert_eq!(s.outcome_of_basic(2, 1).unwrap().count(), 4);
        assert!(chsh.outcome_of_basic(4, 0).is_err());
        assert!(chsh.outcome_of_basic(0, 2).is_err());
    }

    #[test]
    fn algebra_sizes() {
        let chsh = chsh_scenario();
        let ctx = chsh.maximal_id(0);
        assert_eq!(chsh.algebra_outcomes(ctx).unwrap().len(), 16);
        let basic = chsh.algebra_outcomes(chsh.basic_id(0)).unwrap();
        assert_eq!(basic.len(), 4);
        assert!(basic.contains(&OutcomeSet::empty(16)));
        assert!(basic.contains(&OutcomeSet::full(16)));
        let empty = chsh.measurement_id(&[]).unwrap();
        assert_eq!(chsh.algebra_outcomes(empty).unwrap().len(), 2);
    }

    #[test]
    fn complement_laws() {
        let chsh = chsh_scenario();
        let x = chsh.outcome_of_basic(1, 1).unwrap();
        assert_eq!(x.complement().complement(), x);
        assert!(x.is_disjoint(&x.complement()));
        assert_eq!(x.union(&x.complement()), OutcomeSet::full(16));
    }

    #[test]
    fn cell_labels_roundtrip() {
        let chsh = chsh_scenario();
        let m = chsh.maximal_measurement(1); // [0,3]
        for (c, cell) in m.fine_outcomes().iter().enumerate() {
            let labels = m.cell_labels(chsh.space(), c);
            let implied = chsh.implied_labels(cell);
            assert_eq!(implied[0], Some(labels[0]));
            assert_eq!(implied[3], Some(labels[1]));
            assert_eq!(implied[1], None);
        }
    }
}
