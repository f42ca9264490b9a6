use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{OutcomeSet, Scenario};

use super::compile::q1ab_offsets;

/// Relative eigenvalue cutoff used when factorizing Gram matrices.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Real symmetric matrix `d` with `D(X, Y) = Σ_{γ∈X, γ'∈Y} d_{γγ'}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceMatrix {
    entries: DMatrix<f64>,
}

impl DecoherenceMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Shape(format!(
                "decoherence matrix is {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(Error::Shape(format!("decoherence matrix not symmetric (off by {asym:e})")));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        Ok(DecoherenceMatrix { entries: sym })
    }

    /// Point mass at atom `gamma`.
    pub fn point_mass(n: usize, gamma: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(gamma, gamma)] = 1.0;
        DecoherenceMatrix { entries: m }
    }

    pub fn diagonal(p: &[f64]) -> Self {
        DecoherenceMatrix {
            entries: DMatrix::from_diagonal(&DVector::from_column_slice(p)),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn functional(&self, x: &OutcomeSet, y: &OutcomeSet) -> f64 {
        x.atoms()
            .map(|g| y.atoms().map(|h| self.entries[(g, h)]).sum::<f64>())
            .sum()
    }

    /// `µ(X) = D(X, X)`.
    pub fn measure(&self, x: &OutcomeSet) -> f64 {
        self.functional(x, x)
    }

    pub fn total(&self) -> f64 {
        self.entries.sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.entries)
    }

    pub fn is_strongly_positive(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Kronecker product; atoms of the product are indexed with `self` most significant.
    pub fn compose(&self, other: &DecoherenceMatrix) -> DecoherenceMatrix {
        DecoherenceMatrix {
            entries: self.entries.kronecker(&other.entries),
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Gram matrix over a labelled index set, with an optional factorization.
#[derive(Clone, Debug, Serialize)]
pub struct GramWitness {
    pub labels: Vec<String>,
    #[serde(serialize_with = "ser_matrix")]
    pub matrix: DMatrix<f64>,
    /// Column `j` is the vector of index `j`.
    #[serde(skip)]
    pub vectors: Option<DMatrix<f64>>,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl GramWitness {
    pub fn new(labels: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for a {}x{} Gram matrix",
                labels.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(GramWitness {
            labels,
            matrix,
            vectors: None,
        })
    }

    pub fn from_vectors(labels: Vec<String>, vectors: DMatrix<f64>) -> Result<Self> {
        let matrix = vectors.transpose() * &vectors;
        let mut w = Self::new(labels, matrix)?;
        w.vectors = Some(vectors);
        Ok(w)
    }

    /// Square-root factor `V` with `VᵀV = matrix`, dropping eigenvalues below
    /// `RANK_CUTOFF · λ_max`.
    pub fn factorize(&mut self) -> Result<&DMatrix<f64>> {
        let n = self.matrix.nrows();
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let lmax = eig.eigenvalues.max().max(0.0);
        let lmin = eig.eigenvalues.min();
        if lmin < -1e-6 * lmax.max(1.0) {
            return Err(Error::Witness(format!("Gram matrix not PSD (min eigenvalue {lmin:e})")));
        }
        let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > RANK_CUTOFF * lmax).collect();
        let mut v = DMatrix::zeros(keep.len(), n);
        for (r, &k) in keep.iter().enumerate() {
            let s = eig.eigenvalues[k].sqrt();
            for j in 0..n {
                v[(r, j)] = s * eig.eigenvectors[(j, k)];
            }
        }
        self.vectors = Some(v);
        Ok(self.vectors.as_ref().expect("just set"))
    }

    /// Largest deviation between the matrix and the Gram of its factorization.
    pub fn factorization_error(&self) -> Option<f64> {
        self.vectors
            .as_ref()
            .map(|v| (v.transpose() * v - &self.matrix).amax())
    }
}

/// Order in which basic-measurement projectors are applied to `|Ξ⟩`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProjectorOrder {
    /// `E^{X_1} E^{X_2} … E^{X_p} |Ξ⟩`: highest basic index acts first.
    #[default]
    Descending,
    /// Lowest basic index acts first.
    Ascending,
}

fn span_projector(cols: &[DVector<f64>], dim: usize, cutoff: f64) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(dim, dim);
    if cols.is_empty() {
        return e;
    }
    let s = DMatrix::from_columns(cols);
    let k = s.transpose() * &s;
    let eig = SymmetricEigen::new(k);
    for (idx, &mu) in eig.eigenvalues.iter().enumerate() {
        if mu > cutoff {
            let q = &s * eig.eigenvectors.column(idx) / mu.sqrt();
            e += &q * q.transpose();
        }
    }
    e
}

/// Builds an atom Gram matrix from a Q^{1+AB} witness (index `0` is Ξ, then the cells of
/// each maximal context in order) by projecting `|Ξ⟩` through per-outcome projectors.
pub fn extend_q1ab_witness(w: &GramWitness, scenario: &Scenario, order: ProjectorOrder) -> Result<GramWitness> {
    let offsets = q1ab_offsets(scenario);
    let side = 1 + (0..scenario.maximal_contexts().len())
        .map(|k| scenario.maximal_measurement(k).fine_outcomes().len())
        .sum::<usize>();
    if w.matrix.nrows() != side {
        return Err(Error::Shape(format!(
            "witness side {} does not match the scenario ({side})",
            w.matrix.nrows()
        )));
    }
    let mut w = w.clone();
    let lmax = SymmetricEigen::new(w.matrix.clone()).eigenvalues.max().max(0.0);
    let v = w.factorize()?.clone();
    let dim = v.nrows();
    let cutoff = RANK_CUTOFF * lmax;
    let space = scenario.space();
    let cards = space.cardinalities();

    // projectors[i][a]
    let mut projectors: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(cards.len());
    for (i, &card) in cards.iter().enumerate() {
        let mut per_label: Vec<Vec<DVector<f64>>> = vec![Vec::new(); card];
        for (k, ctx) in scenario.maximal_contexts().iter().enumerate() {
            let Some(pos) = ctx.iter().position(|&j| j == i) else {
                continue;
            };
            let m = scenario.maximal_measurement(k);
            for c in 0..m.fine_outcomes().len() {
                let a = m.cell_labels(space, c)[pos];
                per_label[a].push(v.column(offsets[k] + c).into_owned());
            }
        }
        let mut es: Vec<DMatrix<f64>> = Vec::with_capacity(card);
        es.push(DMatrix::identity(dim, dim));
        for cols in per_label.iter().skip(1) {
            let e = span_projector(cols, dim, cutoff);
            es[0] -= &e;
            es.push(e);
        }
        projectors.push(es);
    }

    let xi = v.column(0).into_owned();
    let n = scenario.num_atoms();
    let mut atoms = DMatrix::zeros(dim, n);
    let idx: Vec<usize> = match order {
        ProjectorOrder::Descending => (0..cards.len()).rev().collect(),
        ProjectorOrder::Ascending => (0..cards.len()).collect(),
    };
    for g in 0..n {
        let labels = space.labels(g);
        let mut vec = xi.clone();
        for &i in &idx {
            vec = &projectors[i][labels[i]] * vec;
        }
        atoms.set_column(g, &vec);
    }
    let labels = (0..n)
        .map(|g| {
            let l: Vec<String> = space.labels(g).iter().map(|a| a.to_string()).collect();
            format!("({})", l.join(","))
        })
        .collect();
    GramWitness::from_vectors(labels, atoms)
}

/// Options for the positivity separation oracle.
#[derive(Clone, Debug)]
pub struct SeparationOptions {
    /// Exhaustive enumeration up to this many atoms.
    pub exact_limit: usize,
    pub starts: usize,
    pub seed: u64,
    /// Most cuts returned per call.
    pub max_cuts: usize,
    /// A subset counts as violated when its form is below `-tol`.
    pub tol: f64,
    /// Extra structured starting subsets.
    pub hints: Vec<Vec<usize>>,
    /// Kick-and-descend rounds after each local search (heuristic regime only).
    pub perturbations: usize,
    /// Block size for the exact-block search tried when local search finds nothing
    /// (at most 20; 0 or 1 disables it).
    pub block_size: usize,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            exact_limit: 20,
            starts: 64,
            seed: 0,
            max_cuts: 16,
            tol: 1e-9,
            hints: Vec::new(),
            perturbations: 24,
            block_size: 16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Separation {
    /// Violated subsets (sorted atoms) with their form values, most violated first.
    pub cuts: Vec<(Vec<usize>, f64)>,
    /// Whether absence of further violations is proven.
    pub exact: bool,
    /// Smallest form value seen.
    pub best: f64,
}

/// Searches for subsets `α` with `Σ_{γ,γ'∈α} d < -tol`.
pub fn jqm_separation(d: &DecoherenceMatrix, opts: &SeparationOptions) -> Separation {
    let n = d.size();
    if n <= opts.exact_limit {
        exact_separation(d.entries(), opts)
    } else {
        heuristic_separation(d.entries(), opts)
    }
}

struct CutPool {
    cuts: Vec<(Vec<usize>, f64)>,
    max: usize,
}

impl CutPool {
    fn offer(&mut self, set: Vec<usize>, value: f64) {
        if self.cuts.iter().any(|(s, _)| *s == set) {
            return;
        }
        if self.cuts.len() < self.max {
            self.cuts.push((set, value));
        } else if let Some(worst) = self
            .cuts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
        {
            if value < self.cuts[worst].1 {
                self.cuts[worst] = (set, value);
            }
        }
    }

    fn finish(mut self) -> Vec<(Vec<usize>, f64)> {
        self.cuts.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        self.cuts
    }
}

fn exact_separation(d: &DMatrix<f64>, opts: &SeparationOptions) -> Separation {
    let n = d.nrows();
    let mut pool = CutPool {
        cuts: Vec::new(),
        max: opts.max_cuts.max(1),
    };
    let mut g = vec![0.0; n];
    let mut member = vec![false; n];
    let mut f = 0.0;
    let mut best = 0.0f64;
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << n) {
        let k = step.trailing_zeros() as usize;
        let new_gray = step ^ (step >> 1);
        debug_assert_eq!(new_gray ^ gray, 1 << k);
        gray = new_gray;
        if member[k] {
            f += -2.0 * g[k] + d[(k, k)];
            member[k] = false;
            for j in 0..n {
                g[j] -= d[(j, k)];
            }
        } else {
            f += 2.0 * g[k] + d[(k, k)];
            member[k] = true;
            for j in 0..n {
                g[j] += d[(j, k)];
            }
        }
        best = best.min(f);
        if f < -opts.tol {
            // recompute exactly to avoid drift from the running sum
            let set: Vec<usize> = (0..n).filter(|&j| member[j]).collect();
            let exact = subset_form(d, &set);
            if exact < -opts.tol {
                pool.offer(set, exact);
            }
        }
        if step % 4096 == 0 {
            f = subset_form(d, &(0..n).filter(|&j| member[j]).collect::<Vec<_>>());
        }
    }
    Separation {
        cuts: pool.finish(),
        exact: true,
        best,
    }
}

/// `Σ_{i,j∈α} d_ij`.
pub fn subset_form(d: &DMatrix<f64>, set: &[usize]) -> f64 {
    set.iter().map(|&i| set.iter().map(|&j| d[(i, j)]).sum::<f64>()).sum()
}

fn descend(d: &DMatrix<f64>, start: &[usize]) -> (Vec<usize>, f64) {
    let n = d.nrows();
    let mut member = vec![false; n];
    for &i in start {
        member[i] = true;
    }
    let mut g: Vec<f64> = (0..n)
        .map(|i| start.iter().map(|&j| d[(i, j)]).sum())
        .collect();
    loop {
        let mut best = (-1e-15, usize::MAX);
        for k in 0..n {
            let delta = if member[k] {
                -2.0 * g[k] + d[(k, k)]
            } else {
                2.0 * g[k] + d[(k, k)]
            };
            if delta < best.0 {
                best = (delta, k);
            }
        }
        let k = best.1;
        if k == usize::MAX {
            break;
        }
        let sign = if member[k] { -1.0 } else { 1.0 };
        member[k] = !member[k];
        for j in 0..n {
            g[j] += sign * d[(j, k)];
        }
    }
    let set: Vec<usize> = (0..n).filter(|&j| member[j]).collect();
    let f = subset_form(d, &set);
    (set, f)
}

/// Exact minimization over the atoms of `block`, holding the rest of `member` fixed.
/// Returns the change in the form value (never positive).
fn optimize_block(d: &DMatrix<f64>, member: &mut [bool], block: &[usize]) -> f64 {
    let b = block.len();
    // linear term from the fixed part
    let g_out: Vec<f64> = block
        .iter()
        .map(|&k| {
            (0..d.nrows())
                .filter(|&j| member[j] && !block.contains(&j))
                .map(|j| d[(k, j)])
                .sum()
        })
        .collect();
    let sub = |a: usize, c: usize| d[(block[a], block[c])];
    let cur_mask: u64 = (0..b).filter(|&a| member[block[a]]).map(|a| 1u64 << a).sum();
    let eval = |mask: u64| -> f64 {
        let mut f = 0.0;
        for a in 0..b {
            if mask & (1 << a) != 0 {
                f += 2.0 * g_out[a];
                for c in 0..b {
                    if mask & (1 << c) != 0 {
                        f += sub(a, c);
                    }
                }
            }
        }
        f
    };
    let mut in_s = vec![false; b];
    let mut h = vec![0.0; b];
    let mut f = 0.0;
    let mut best = (0.0, 0u64);
    let mut gray = 0u64;
    for step in 1u64..(1u64 << b) {
        let k = step.trailing_zeros() as usize;
        gray ^= 1 << k;
        if in_s[k] {
            f += -2.0 * g_out[k] - 2.0 * h[k] + sub(k, k);
            in_s[k] = false;
            for j in 0..b {
                h[j] -= sub(j, k);
            }
        } else {
            f += 2.0 * g_out[k] + 2.0 * h[k] + sub(k, k);
            in_s[k] = true;
            for j in 0..b {
                h[j] += sub(j, k);
            }
        }
        if f < best.0 {
            best = (f, gray);
        }
    }
    let before = eval(cur_mask);
    let after = eval(best.1);
    if after < before - 1e-15 {
        for a in 0..b {
            member[block[a]] = best.1 & (1 << a) != 0;
        }
        after - before
    } else {
        0.0
    }
}

/// Contiguous and strided partitions of the atoms into blocks of `size`.
fn block_partitions(n: usize, size: usize) -> Vec<Vec<Vec<usize>>> {
    let size = size.min(n).max(1);
    let contiguous: Vec<Vec<usize>> = (0..n).step_by(size).map(|s| (s..(s + size).min(n)).collect()).collect();
    let nblocks = n.div_ceil(size);
    let strided: Vec<Vec<usize>> = (0..nblocks)
        .map(|r| (r..n).step_by(nblocks).collect::<Vec<_>>())
        .filter(|b| !b.is_empty())
        .collect();
    vec![contiguous, strided]
}

/// Block-exact descent: sweeps the partitions until no block improves.
fn block_descent(d: &DMatrix<f64>, start: &[usize], partitions: &[Vec<Vec<usize>>]) -> (Vec<usize>, f64) {
    let n = d.nrows();
    let mut member = vec![false; n];
    for &i in start {
        member[i] = true;
    }
    for _sweep in 0..50 {
        let mut gain = 0.0;
        for part in partitions {
            for block in part {
                gain += optimize_block(d, &mut member, block);
            }
        }
        if gain > -1e-13 {
            break;
        }
    }
    let set: Vec<usize> = (0..n).filter(|&j| member[j]).collect();
    let f = subset_form(d, &set);
    (set, f)
}

/// Local minima and random subsets used as seeds for the block search.
const BLOCK_SEEDS: usize = 8;

fn heuristic_separation(d: &DMatrix<f64>, opts: &SeparationOptions) -> Separation {
    let n = d.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<usize>> = opts.hints.clone();
    let eig = SymmetricEigen::new(d.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    for &k in order.iter().take(4) {
        if eig.eigenvalues[k] >= 0.0 {
            break;
        }
        let col = eig.eigenvectors.column(k);
        starts.push((0..n).filter(|&j| col[j] > 0.0).collect());
        starts.push((0..n).filter(|&j| col[j] < 0.0).collect());
    }
    // most negative off-diagonal pairs
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = d[(i, i)] + d[(j, j)] + 2.0 * d[(i, j)];
            if v < 0.0 {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(_, i, j) in pairs.iter().take(8) {
        starts.push(vec![i, j]);
    }
    for s in 0..opts.starts {
        let p = if s % 2 == 0 { 0.5 } else { 0.1 };
        starts.push((0..n).filter(|_| rng.gen_bool(p)).collect());
    }
    let mut pool = CutPool {
        cuts: Vec::new(),
        max: opts.max_cuts.max(1),
    };
    let mut best = 0.0f64;
    // best local minima, seeds for the block search
    let mut minima: Vec<(f64, Vec<usize>)> = Vec::new();
    for s in &starts {
        let (mut cur, mut fcur) = descend(d, s);
        best = best.min(fcur);
        if fcur < -opts.tol {
            pool.offer(cur.clone(), fcur);
        }
        // iterated local search: flip a few random atoms and descend again
        for _ in 0..opts.perturbations {
            let mut member = vec![false; n];
            for &i in &cur {
                member[i] = true;
            }
            let kicks = rng.gen_range(2..=6.min(n.max(2)));
            for _ in 0..kicks {
                let i = rng.gen_range(0..n);
                member[i] = !member[i];
            }
            let start: Vec<usize> = (0..n).filter(|&j| member[j]).collect();
            let (set, f) = descend(d, &start);
            best = best.min(f);
            if f < -opts.tol {
                pool.offer(set.clone(), f);
            }
            if f <= fcur {
                cur = set;
                fcur = f;
            }
        }
        if !minima.iter().any(|(_, m)| *m == cur) {
            minima.push((fcur, cur));
            minima.sort_by(|a, b| a.0.total_cmp(&b.0));
            minima.truncate(BLOCK_SEEDS);
        }
    }
    if pool.cuts.is_empty() && opts.block_size > 1 {
        // escalate: exact minimization over blocks of atoms from every start
        let parts = block_partitions(n, opts.block_size.min(20));
        let mut seeds: Vec<Vec<usize>> = minima.into_iter().map(|(_, m)| m).collect();
        for _ in 0..BLOCK_SEEDS {
            seeds.push((0..n).filter(|_| rng.gen_bool(0.5)).collect());
        }
        for s in &seeds {
            let (set, f) = block_descent(d, s, &parts);
            best = best.min(f);
            if f < -opts.tol {
                pool.offer(set, f);
            }
        }
    }
    Separation {
        cuts: pool.finish(),
        exact: false,
        best,
    }
}
