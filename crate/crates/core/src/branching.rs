//! Single branching measurements and the orthogonality pairs they induce.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};
use crate::scenario::{OutcomeSet, Scenario};

/// Default cap on the number of `(M¹, M²(·))` recipes visited.
pub const DEFAULT_BRANCHING_BUDGET: usize = 1_000_000;

/// Where a cell of a branching partition came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellOrigin {
    /// Measurement id of `M²(X¹)`.
    pub measurement: usize,
    /// Index of the cell within that measurement's fine outcomes.
    pub cell: usize,
}

#[derive(Clone, Debug)]
pub struct BranchingMeasurement {
    /// Measurement id of the first stage.
    pub first: usize,
    /// Second-stage measurement id for each fine outcome of the first stage.
    pub second_of: Vec<usize>,
    /// Cells of the resulting partition, in first-stage then second-stage order.
    pub partition: Vec<OutcomeSet>,
    pub origins: Vec<CellOrigin>,
}

impl BranchingMeasurement {
    /// Builds `M_b(M¹, M²(·))`; every `M²(X¹)` must include `M¹`.
    pub fn new(scenario: &Scenario, first: usize, second_of: Vec<usize>) -> Result<Self> {
        let m1 = scenario.measurement(first);
        if second_of.len() != m1.fine_outcomes().len() {
            return Err(Error::Shape(format!(
                "first stage has {} outcomes but {} second stages were given",
                m1.fine_outcomes().len(),
                second_of.len()
            )));
        }
        let mut partition = Vec::new();
        let mut origins = Vec::new();
        for (x1, &m2) in m1.fine_outcomes().iter().zip(&second_of) {
            let second = scenario.measurement(m2);
            if !second.includes(m1) {
                return Err(Error::UnknownMeasurement {
                    context: second.basic_indices().to_vec(),
                });
            }
            for (c, x2) in second.fine_outcomes().iter().enumerate() {
                if x2.is_subset(x1) {
                    partition.push(x2.clone());
                    origins.push(CellOrigin {
                        measurement: m2,
                        cell: c,
                    });
                }
            }
        }
        Ok(BranchingMeasurement {
            first,
            second_of,
            partition,
            origins,
        })
    }

    pub fn trivial(scenario: &Scenario, id: usize) -> Self {
        let k = scenario.measurement(id).fine_outcomes().len();
        Self::new(scenario, id, vec![id; k]).expect("a measurement includes itself")
    }

    /// Sorted cells, used as the identity of the partition.
    pub fn partition_key(&self) -> Vec<OutcomeSet> {
        let mut key = self.partition.clone();
        key.sort();
        key
    }

    /// Whether a set is a union of cells of this partition.
    pub fn generates(&self, set: &OutcomeSet) -> bool {
        let mut acc = OutcomeSet::empty(set.universe());
        for cell in &self.partition {
            if cell.is_subset(set) {
                acc = acc.union(cell);
            } else if !cell.is_disjoint(set) {
                return false;
            }
        }
        &acc == set
    }
}

/// Enumerates all single branching measurements, deduplicated by partition.
pub fn enumerate_branching(scenario: &Scenario) -> Result<Vec<BranchingMeasurement>> {
    enumerate_branching_with_budget(scenario, DEFAULT_BRANCHING_BUDGET)
}

pub fn enumerate_branching_with_budget(
    scenario: &Scenario,
    budget: usize,
) -> Result<Vec<BranchingMeasurement>> {
    let mut seen: HashSet<Vec<OutcomeSet>> = HashSet::new();
    let mut out = Vec::new();
    let mut visited = 0usize;
    for first in 0..scenario.measurements().len() {
        let choices = scenario.measurements_including(first);
        let k = scenario.measurement(first).fine_outcomes().len();
        let mut digits = vec![0usize; k];
        'recipes: loop {
            visited += 1;
            if visited > budget {
                return Err(Error::EnumerationBudget {
                    what: "branching recipes",
                    budget,
                });
            }
            let second_of: Vec<usize> = digits.iter().map(|&d| choices[d]).collect();
            let mb = BranchingMeasurement::new(scenario, first, second_of)?;
            if seen.insert(mb.partition_key()) {
                out.push(mb);
            }
            // odometer, last digit fastest
            let mut pos = k;
            while pos > 0 {
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < choices.len() {
                    continue 'recipes;
                }
                digits[pos] = 0;
            }
            break;
        }
    }
    Ok(out)
}

/// A fine outcome of some measurement, with the measurement it was taken from.
#[derive(Clone, Debug)]
pub struct FineOutcome {
    pub set: OutcomeSet,
    pub measurement: usize,
    pub cell: usize,
}

/// Distinct fine outcomes of all measurements (first occurrence wins).
pub fn distinct_fine_outcomes(scenario: &Scenario) -> Vec<FineOutcome> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (id, m) in scenario.measurements().iter().enumerate() {
        for (c, cell) in m.fine_outcomes().iter().enumerate() {
            if seen.insert(cell.clone()) {
                out.push(FineOutcome {
                    set: cell.clone(),
                    measurement: id,
                    cell: c,
                });
            }
        }
    }
    out
}

/// A pair of outcomes that imply different outcomes of basic measurement `basic`.
#[derive(Clone, Debug)]
pub struct OrthogonalPair {
    pub x: FineOutcome,
    pub y: FineOutcome,
    pub basic: usize,
}

/// All unordered pairs of fine outcomes lying inside disjoint outcomes of one basic measurement.
pub fn branch_orthogonal_pairs(scenario: &Scenario) -> Vec<OrthogonalPair> {
    let outcomes = distinct_fine_outcomes(scenario);
    let implied: Vec<Vec<Option<usize>>> = outcomes
        .iter()
        .map(|o| scenario.implied_labels(&o.set))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..outcomes.len() {
        for b in (a + 1)..outcomes.len() {
            let hit = implied[a]
                .iter()
                .zip(&implied[b])
                .position(|(u, v)| matches!((u, v), (Some(p), Some(q)) if p != q));
            if let Some(i) = hit {
                pairs.push(OrthogonalPair {
                    x: outcomes[a].clone(),
                    y: outcomes[b].clone(),
                    basic: i,
                });
            }
        }
    }
    pairs
}

/// The branching measurement that contains both outcomes of an orthogonal pair:
/// first stage the shared basic measurement, second stage the measurements the
/// outcomes came from.
pub fn branching_for_pair(scenario: &Scenario, pair: &OrthogonalPair) -> Result<BranchingMeasurement> {
    let i = pair.basic;
    let first = scenario.basic_id(i);
    let labels_x = scenario.implied_labels(&pair.x.set);
    let labels_y = scenario.implied_labels(&pair.y.set);
    let (ax, ay) = match (labels_x[i], labels_y[i]) {
        (Some(p), Some(q)) if p != q => (p, q),
        _ => {
            return Err(Error::Witness(
                "pair does not imply disjoint outcomes of its basic measurement".into(),
            ))
        }
    };
    let k = scenario.space().cardinalities()[i];
    let mut second_of = vec![first; k];
    second_of[ax] = pair.x.measurement;
    second_of[ay] = pair.y.measurement;
    BranchingMeasurement::new(scenario, first, second_of)
}

/// Partitions as sorted lists of sorted atom lists, for stable reporting.
pub fn partition_inventory(branchings: &[BranchingMeasurement]) -> BTreeSet<Vec<Vec<usize>>> {
    branchings
        .iter()
        .map(|b| {
            let mut cells: Vec<Vec<usize>> = b.partition.iter().map(|c| c.atoms().collect()).collect();
            cells.sort();
            cells
        })
        .collect()
}
