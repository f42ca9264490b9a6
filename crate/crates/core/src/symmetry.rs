//! Relabelling symmetries of a behaviour: permutations of basic measurements and of
//! their outcome labels that map maximal contexts to maximal contexts and leave every
//! probability unchanged.

use std::collections::HashMap;

use crate::behaviour::Behaviour;

/// Largest number of basic measurements for which measurement permutations are searched.
pub const MAX_SYMMETRY_BASIC: usize = 9;
/// Largest number of label-permutation combinations tried per measurement permutation.
pub const MAX_LABEL_COMBOS: usize = 1 << 12;

/// All permutations of `0..n` (Heap's algorithm).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Measurement permutations preserving cardinalities and the set of maximal contexts.
fn context_automorphisms(cards: &[usize], contexts: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = cards.len();
    let mut sorted: Vec<Vec<usize>> = contexts.to_vec();
    sorted.sort();
    let mut found = Vec::new();
    let mut pi = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn rec(
        i: usize,
        cards: &[usize],
        sorted: &[Vec<usize>],
        pi: &mut Vec<usize>,
        used: &mut Vec<bool>,
        found: &mut Vec<Vec<usize>>,
    ) {
        let n = cards.len();
        if i == n {
            let mut img: Vec<Vec<usize>> = sorted
                .iter()
                .map(|c| {
                    let mut m: Vec<usize> = c.iter().map(|&j| pi[j]).collect();
                    m.sort_unstable();
                    m
                })
                .collect();
            img.sort();
            if img == sorted {
                found.push(pi.clone());
            }
            return;
        }
        for t in 0..n {
            if !used[t] && cards[t] == cards[i] {
                used[t] = true;
                pi[i] = t;
                rec(i + 1, cards, sorted, pi, used, found);
                used[t] = false;
            }
        }
    }
    rec(0, cards, &sorted, &mut pi, &mut used, &mut found);
    found
}

/// Atom permutations (identity included) induced by the relabelling symmetries of `b`.
///
/// Scenarios with more than [`MAX_SYMMETRY_BASIC`] basic measurements only get the
/// identity; so do label searches that would exceed [`MAX_LABEL_COMBOS`].
pub fn behaviour_symmetries(b: &Behaviour, tol: f64) -> Vec<Vec<usize>> {
    let s = b.scenario();
    let space = s.space();
    let cards = space.cardinalities();
    let n = cards.len();
    let na = s.num_atoms();
    let identity: Vec<usize> = (0..na).collect();
    if n > MAX_SYMMETRY_BASIC {
        return vec![identity];
    }
    let label_perms: Vec<Vec<Vec<usize>>> = cards.iter().map(|&c| permutations(c)).collect();
    let combos: usize = label_perms.iter().map(|p| p.len()).try_fold(1usize, |a, l| a.checked_mul(l)).unwrap_or(usize::MAX);
    if combos > MAX_LABEL_COMBOS {
        return vec![identity];
    }
    let ctx_index: HashMap<&[usize], usize> =
        s.maximal_contexts().iter().enumerate().map(|(k, c)| (c.as_slice(), k)).collect();
    let mut out = Vec::new();
    for pi in context_automorphisms(cards, s.maximal_contexts()) {
        for combo in 0..combos {
            let mut rest = combo;
            let sigma: Vec<&Vec<usize>> = label_perms
                .iter()
                .map(|p| {
                    let q = &p[rest % p.len()];
                    rest /= p.len();
                    q
                })
                .collect();
            if preserves(b, &pi, &sigma, &ctx_index, tol) {
                out.push(
                    (0..na)
                        .map(|g| {
                            let mut l = vec![0; n];
                            for i in 0..n {
                                l[pi[i]] = sigma[i][space.label(g, i)];
                            }
                            space.atom_index(&l)
                        })
                        .collect(),
                );
            }
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        out.push(identity);
    }
    out
}

fn preserves(
    b: &Behaviour,
    pi: &[usize],
    sigma: &[&Vec<usize>],
    ctx_index: &HashMap<&[usize], usize>,
    tol: f64,
) -> bool {
    let s = b.scenario();
    let cards = s.space().cardinalities();
    for (k, ctx) in s.maximal_contexts().iter().enumerate() {
        let mut img: Vec<(usize, usize)> = ctx.iter().enumerate().map(|(t, &i)| (pi[i], t)).collect();
        img.sort_unstable();
        let key: Vec<usize> = img.iter().map(|p| p.0).collect();
        let Some(&k2) = ctx_index.get(key.as_slice()) else {
            return false;
        };
        let m = s.maximal_measurement(k);
        let p1 = b.context_probs(k);
        let p2 = b.context_probs(k2);
        for (cell, &p) in p1.iter().enumerate() {
            let l = m.cell_labels(s.space(), cell);
            let mut idx = 0;
            for &(j, t) in &img {
                idx = idx * cards[j] + sigma[ctx[t]][l[t]];
            }
            if (p2[idx] - p).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Orbits of unordered atom pairs `(i <= j)` under a permutation group, as an orbit id per
/// upper-triangle index, plus the number of orbits.
pub fn pair_orbits(na: usize, group: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let nvars = na * (na + 1) / 2;
    let idx = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * (2 * na - i + 1) / 2 + (j - i)
    };
    let mut orbit = vec![usize::MAX; nvars];
    let mut count = 0;
    for i in 0..na {
        for j in i..na {
            let v = idx(i, j);
            if orbit[v] != usize::MAX {
                continue;
            }
            for g in group {
                orbit[idx(g[i], g[j])] = count;
            }
            count += 1;
        }
    }
    (orbit, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviour::{isotropic, pr_box, uniform};
    use std::sync::Arc;

    #[test]
    fn heap_counts() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1).len(), 1);
    }

    #[test]
    fn uniform_chsh_has_full_group() {
        let s = Arc::new(crate::scenario::chsh_scenario());
        // context automorphisms of the 4-cycle (8) times label flips (16)
        assert_eq!(behaviour_symmetries(&uniform(s), 1e-12).len(), 128);
    }

    #[test]
    fn pr_box_symmetries_preserve_it() {
        let pr = pr_box();
        let g = behaviour_symmetries(&pr, 1e-12);
        assert!(g.len() > 1);
        assert_eq!(g.len(), behaviour_symmetries(&isotropic(0.3).unwrap(), 1e-12).len());
        for p in &g {
            let mut seen = p.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..16).collect::<Vec<_>>());
        }
    }
}
