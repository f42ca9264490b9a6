use std::collections::HashMap;

use crate::behaviour::{extend_to_branching, Behaviour, DEFAULT_TOL};
use crate::branching::enumerate_branching;
use crate::error::{Error, Result};
use crate::scenario::{OutcomeSet, Scenario};

use super::program::{tags, tri_len, CoeffAcc, Condition, ConeKind, ConeProgram, Equality, LazyFamily};

/// How SPJQM_b constraints are generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SpjqmbMode {
    /// Within-context equalities plus cross-context zeros on branch-orthogonal cells.
    #[default]
    Fast,
    /// Every pair of cells of every enumerated branching partition.
    Validation,
}

/// Merges `<X|Y> = rhs` constraints keyed by the unordered outcome pair.
struct PairTable {
    seen: HashMap<(OutcomeSet, OutcomeSet), usize>,
    tol: f64,
}

impl PairTable {
    fn new() -> Self {
        PairTable {
            seen: HashMap::new(),
            tol: 1e-8,
        }
    }

    /// Returns false if the pair was already present with a matching rhs.
    fn admit(&mut self, eqs: &[Equality], x: &OutcomeSet, y: &OutcomeSet, rhs: f64, next: usize) -> Result<bool> {
        let key = if x <= y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
        if let Some(&i) = self.seen.get(&key) {
            let old = eqs[i].rhs;
            if (old - rhs).abs() > self.tol {
                return Err(Error::Inconsistent(format!(
                    "outcome pair {:?} x {:?} gets probability {old} and {rhs} from different contexts (signalling)",
                    key.0.atoms().collect::<Vec<_>>(),
                    key.1.atoms().collect::<Vec<_>>()
                )));
            }
            return Ok(false);
        }
        self.seen.insert(key, next);
        Ok(true)
    }
}

fn atom_labels(s: &Scenario) -> Vec<String> {
    (0..s.num_atoms())
        .map(|g| {
            let l: Vec<String> = s.space().labels(g).iter().map(|a| a.to_string()).collect();
            format!("({})", l.join(","))
        })
        .collect()
}

fn cells_of(set: &OutcomeSet) -> Vec<usize> {
    set.atoms().collect()
}

/// Pushes `Σ_{γ∈X, γ'∈Y} G = rhs` over atoms unless the pair is already constrained.
fn push_pair(
    eqs: &mut Vec<Equality>,
    table: &mut PairTable,
    n: usize,
    x: &OutcomeSet,
    y: &OutcomeSet,
    rhs: f64,
    tag: &'static str,
) -> Result<()> {
    if !table.admit(eqs, x, y, rhs, eqs.len())? {
        return Ok(());
    }
    let mut acc = CoeffAcc::default();
    if x == y {
        acc.add_block(n, &cells_of(x), &cells_of(y), 1.0);
    } else {
        // disjoint cells: each unordered atom pair once
        for g in x.atoms() {
            for h in y.atoms() {
                acc.add(super::program::tri_index(n, g, h), 1.0);
            }
        }
    }
    eqs.push(Equality {
        coeffs: acc.finish(),
        rhs,
        tag,
    });
    Ok(())
}

/// Pairs `((k, x), (l, y))`, `k < l`, of maximal-context cells that imply different
/// outcomes of a shared basic measurement.
pub fn orthogonal_context_cells(s: &Scenario) -> Vec<((usize, usize), (usize, usize))> {
    let implied: Vec<Vec<Vec<Option<usize>>>> = (0..s.maximal_contexts().len())
        .map(|k| {
            s.maximal_measurement(k)
                .fine_outcomes()
                .iter()
                .map(|c| s.implied_labels(c))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for k in 0..implied.len() {
        for l in (k + 1)..implied.len() {
            for (x, lx) in implied[k].iter().enumerate() {
                for (y, ly) in implied[l].iter().enumerate() {
                    let clash = lx
                        .iter()
                        .zip(ly)
                        .any(|(u, v)| matches!((u, v), (Some(p), Some(q)) if p != q));
                    if clash {
                        out.push(((k, x), (l, y)));
                    }
                }
            }
        }
    }
    out
}

pub fn compile_jpm(b: &Behaviour) -> Result<ConeProgram> {
    b.ensure_consistent(DEFAULT_TOL)?;
    let s = b.scenario();
    let n = s.num_atoms();
    let mut eqs = vec![Equality {
        coeffs: (0..n).map(|g| (g, 1.0)).collect(),
        rhs: 1.0,
        tag: tags::JPM_NORMALIZATION,
    }];
    let mut seen: HashMap<OutcomeSet, f64> = HashMap::new();
    for k in 0..s.maximal_contexts().len() {
        for (x, p) in s.maximal_measurement(k).fine_outcomes().iter().zip(b.context_probs(k)) {
            if let Some(old) = seen.get(x) {
                if (old - p).abs() > 1e-8 {
                    return Err(Error::Inconsistent(format!("cell probability {old} vs {p}")));
                }
                continue;
            }
            seen.insert(x.clone(), *p);
            eqs.push(Equality {
                coeffs: x.atoms().map(|g| (g, 1.0)).collect(),
                rhs: *p,
                tag: tags::JPM_MARGINAL,
            });
        }
    }
    Ok(ConeProgram {
        condition: Condition::Jpm,
        kind: ConeKind::Linear,
        n,
        free: false,
        equalities: eqs,
        lazy: None,
        null_relations: vec![],
        trace_anchor: vec![],
        labels: atom_labels(s),
    })
}

/// Within-context `D(X, Y) = δ_XY P(X)` over atoms, shared by JQM and SPJQM.
fn context_pairs(b: &Behaviour, eqs: &mut Vec<Equality>, table: &mut PairTable, tag: &'static str) -> Result<Vec<usize>> {
    let s = b.scenario();
    let n = s.num_atoms();
    let mut diagonal = Vec::new();
    for k in 0..s.maximal_contexts().len() {
        let cells = s.maximal_measurement(k).fine_outcomes();
        let p = b.context_probs(k);
        for x in 0..cells.len() {
            for y in x..cells.len() {
                let rhs = if x == y { p[x] } else { 0.0 };
                let before = eqs.len();
                push_pair(eqs, table, n, &cells[x], &cells[y], rhs, tag)?;
                if x == y && eqs.len() > before {
                    diagonal.push(before);
                }
            }
        }
    }
    Ok(diagonal)
}

pub fn compile_jqm(b: &Behaviour) -> Result<ConeProgram> {
    b.ensure_consistent(DEFAULT_TOL)?;
    let s = b.scenario();
    let n = s.num_atoms();
    let mut acc = CoeffAcc::default();
    let all: Vec<usize> = (0..n).collect();
    acc.add_block(n, &all, &all, 1.0);
    let mut eqs = vec![Equality {
        coeffs: acc.finish(),
        rhs: 1.0,
        tag: tags::JQM_NORMALIZATION,
    }];
    let mut table = PairTable::new();
    context_pairs(b, &mut eqs, &mut table, tags::JQM_DECOHERENCE)?;
    let labels = {
        let atoms = atom_labels(s);
        let mut out = Vec::with_capacity(tri_len(n));
        for i in 0..n {
            for j in i..n {
                out.push(format!("d{}{}", atoms[i], atoms[j]));
            }
        }
        out
    };
    Ok(ConeProgram {
        condition: Condition::Jqm,
        kind: ConeKind::Linear,
        n: tri_len(n),
        free: true,
        equalities: eqs,
        lazy: Some(LazyFamily::SubsetPositivity { atoms: n }),
        null_relations: vec![],
        trace_anchor: vec![],
        labels,
    })
}

pub fn compile_spjqm(b: &Behaviour) -> Result<ConeProgram> {
    b.ensure_consistent(DEFAULT_TOL)?;
    let s = b.scenario();
    let mut eqs = Vec::new();
    let mut table = PairTable::new();
    let anchor = context_pairs(b, &mut eqs, &mut table, tags::SPJQM_DECOHERENCE)?;
    Ok(ConeProgram {
        condition: Condition::Spjqm,
        kind: ConeKind::Psd,
        n: s.num_atoms(),
        free: false,
        equalities: eqs,
        lazy: None,
        null_relations: vec![],
        trace_anchor: anchor,
        labels: atom_labels(s),
    })
}

pub fn compile_spjqmb(b: &Behaviour) -> Result<ConeProgram> {
    compile_spjqmb_with(b, SpjqmbMode::Fast)
}

pub fn compile_spjqmb_with(b: &Behaviour, mode: SpjqmbMode) -> Result<ConeProgram> {
    let mut p = compile_spjqm(b)?;
    p.condition = Condition::Spjqmb;
    let s = b.scenario();
    let n = s.num_atoms();
    let mut table = PairTable::new();
    let mut eqs = Vec::new();
    let anchor = context_pairs(b, &mut eqs, &mut table, tags::SPJQM_DECOHERENCE)?;
    match mode {
        SpjqmbMode::Fast => {
            for ((k, x), (l, y)) in orthogonal_context_cells(s) {
                let cx = &s.maximal_measurement(k).fine_outcomes()[x];
                let cy = &s.maximal_measurement(l).fine_outcomes()[y];
                push_pair(&mut eqs, &mut table, n, cx, cy, 0.0, tags::SPJQMB_BRANCH_ORTHOGONALITY)?;
            }
        }
        SpjqmbMode::Validation => {
            for mb in enumerate_branching(s)? {
                let probs = extend_to_branching(b, &mb)?;
                for x in 0..mb.partition.len() {
                    for y in x..mb.partition.len() {
                        let rhs = if x == y { probs[x] } else { 0.0 };
                        push_pair(
                            &mut eqs,
                            &mut table,
                            n,
                            &mb.partition[x],
                            &mb.partition[y],
                            rhs,
                            tags::SPJQMB_BRANCHING_DECOHERENCE,
                        )?;
                    }
                }
            }
        }
    }
    p.equalities = eqs;
    p.trace_anchor = anchor;
    Ok(p)
}

/// Appends the rows of `G r = 0`.
fn push_rows(eqs: &mut Vec<Equality>, n: usize, r: &[(usize, f64)], tag: &'static str) {
    for q in 0..n {
        let mut acc = CoeffAcc::default();
        for &(j, c) in r {
            acc.add(super::program::tri_index(n, q, j), c);
        }
        let coeffs = acc.finish();
        if !coeffs.is_empty() {
            eqs.push(Equality { coeffs, rhs: 0.0, tag });
        }
    }
}

pub fn compile_q1(b: &Behaviour) -> Result<ConeProgram> {
    b.ensure_consistent(DEFAULT_TOL)?;
    let s = b.scenario();
    let cards = s.space().cardinalities().to_vec();
    let mut offset = Vec::with_capacity(cards.len());
    let mut labels = vec!["Xi".to_string()];
    let mut next = 1;
    for (i, &c) in cards.iter().enumerate() {
        offset.push(next);
        for a in 0..c {
            labels.push(format!("{i}:{a}"));
        }
        next += c;
    }
    let n = next;
    let ti = |i: usize, j: usize| super::program::tri_index(n, i, j);
    let mut eqs = vec![Equality {
        coeffs: vec![(ti(0, 0), 1.0)],
        rhs: 1.0,
        tag: tags::Q1_NORMALIZATION,
    }];
    let mut anchor = vec![0];
    let mut null_relations = Vec::new();
    for (i, &c) in cards.iter().enumerate() {
        let members: Vec<usize> = (0..c).map(|a| offset[i] + a).collect();
        let rows = std::iter::once(0).chain(members.iter().copied());
        for x in rows {
            let mut acc = CoeffAcc::default();
            acc.add(ti(x, 0), 1.0);
            for &y in &members {
                acc.add(ti(x, y), -1.0);
            }
            eqs.push(Equality {
                coeffs: acc.finish(),
                rhs: 0.0,
                tag: tags::Q1_BASIC_SUM,
            });
        }
        let mut r = vec![(0, 1.0)];
        r.extend(members.iter().map(|&y| (y, -1.0)));
        null_relations.push(r);
    }
    for i in 0..cards.len() {
        for j in i..cards.len() {
            if !s.jointly_performable(i, j) {
                continue;
            }
            for a in 0..cards[i] {
                let x = s.outcome_of_basic(i, a)?;
                let b0 = if i == j { a } else { 0 };
                for bb in b0..cards[j] {
                    let y = s.outcome_of_basic(j, bb)?;
                    let rhs = if i == j {
                        if a == bb {
                            b.prob(&x).ok_or_else(|| Error::Inconsistent("basic outcome outside every context".into()))?
                        } else {
                            0.0
                        }
                    } else {
                        b.prob(&x.intersection(&y))
                            .ok_or_else(|| Error::Inconsistent("joint outcome outside every context".into()))?
                    };
                    if i == j && a == bb {
                        anchor.push(eqs.len());
                    }
                    eqs.push(Equality {
                        coeffs: vec![(ti(offset[i] + a, offset[j] + bb), 1.0)],
                        rhs,
                        tag: tags::Q1_JOINT,
                    });
                }
            }
        }
    }
    Ok(ConeProgram {
        condition: Condition::Q1,
        kind: ConeKind::Psd,
        n,
        free: false,
        equalities: eqs,
        lazy: None,
        null_relations,
        trace_anchor: anchor,
        labels,
    })
}

pub fn compile_q1ab(b: &Behaviour) -> Result<ConeProgram> {
    b.ensure_consistent(DEFAULT_TOL)?;
    let s = b.scenario();
    let nctx = s.maximal_contexts().len();
    let mut offset = Vec::with_capacity(nctx);
    let mut labels = vec!["Xi".to_string()];
    let mut next = 1;
    for k in 0..nctx {
        offset.push(next);
        let m = s.maximal_measurement(k);
        let key = Scenario::context_key(&s.maximal_contexts()[k]);
        for c in 0..m.fine_outcomes().len() {
            let l: Vec<String> = m.cell_labels(s.space(), c).iter().map(|a| a.to_string()).collect();
            labels.push(format!("{key}:({})", l.join(",")));
        }
        next += m.fine_outcomes().len();
    }
    let n = next;
    let ti = |i: usize, j: usize| super::program::tri_index(n, i, j);
    let mut eqs = vec![Equality {
        coeffs: vec![(ti(0, 0), 1.0)],
        rhs: 1.0,
        tag: tags::Q1AB_NORMALIZATION,
    }];
    let mut anchor = vec![0];
    let mut null_relations: Vec<Vec<(usize, f64)>> = Vec::new();

    for k in 0..nctx {
        let p = b.context_probs(k);
        let m = p.len();
        for x in 0..m {
            for y in x..m {
                if x == y {
                    anchor.push(eqs.len());
                }
                eqs.push(Equality {
                    coeffs: vec![(ti(offset[k] + x, offset[k] + y), 1.0)],
                    rhs: if x == y { p[x] } else { 0.0 },
                    tag: tags::Q1AB_CONTEXT,
                });
            }
        }
    }
    for ((k, x), (l, y)) in orthogonal_context_cells(s) {
        eqs.push(Equality {
            coeffs: vec![(ti(offset[k] + x, offset[l] + y), 1.0)],
            rhs: 0.0,
            tag: tags::Q1AB_ORTHOGONALITY,
        });
    }
    for k in 0..nctx {
        let mut r = vec![(0, 1.0)];
        r.extend((0..b.context_probs(k).len()).map(|c| (offset[k] + c, -1.0)));
        push_rows(&mut eqs, n, &r, tags::Q1AB_UNIT_SUM);
        null_relations.push(r);
    }
    for id in 0..s.measurements().len() {
        let meas = s.measurement(id);
        if meas.basic_indices().is_empty() {
            continue;
        }
        let ctxs = s.contexts_including(id);
        if ctxs.len() < 2 {
            continue;
        }
        for x in meas.fine_outcomes() {
            let inside = |k: usize| -> Vec<usize> {
                s.maximal_measurement(k)
                    .fine_outcomes()
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_subset(x))
                    .map(|(c, _)| offset[k] + c)
                    .collect()
            };
            let reference = inside(ctxs[0]);
            for &k in &ctxs[1..] {
                let mut r: Vec<(usize, f64)> = reference.iter().map(|&i| (i, 1.0)).collect();
                r.extend(inside(k).into_iter().map(|i| (i, -1.0)));
                push_rows(&mut eqs, n, &r, tags::Q1AB_ADDITIVITY);
                null_relations.push(r);
            }
        }
    }
    Ok(ConeProgram {
        condition: Condition::Q1ab,
        kind: ConeKind::Psd,
        n,
        free: false,
        equalities: eqs,
        lazy: None,
        null_relations,
        trace_anchor: anchor,
        labels,
    })
}

/// Index of the first row of context `k` in a Q^{1+AB} program for this scenario.
pub fn q1ab_offsets(s: &Scenario) -> Vec<usize> {
    let mut out = Vec::new();
    let mut next = 1;
    for k in 0..s.maximal_contexts().len() {
        out.push(next);
        next += s.maximal_measurement(k).fine_outcomes().len();
    }
    out
}

pub fn compile(condition: Condition, b: &Behaviour) -> Result<ConeProgram> {
    match condition {
        Condition::Jpm => compile_jpm(b),
        Condition::Jqm => compile_jqm(b),
        Condition::Spjqm => compile_spjqm(b),
        Condition::Spjqmb => compile_spjqmb(b),
        Condition::Q1 => compile_q1(b),
        Condition::Q1ab => compile_q1ab(b),
    }
}
