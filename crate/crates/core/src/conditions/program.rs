use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Error;

/// Which membership condition a program encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Jpm,
    Jqm,
    Spjqm,
    Spjqmb,
    Q1,
    Q1ab,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Jpm,
        Condition::Jqm,
        Condition::Spjqm,
        Condition::Spjqmb,
        Condition::Q1,
        Condition::Q1ab,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Jpm => "jpm",
            Condition::Jqm => "jqm",
            Condition::Spjqm => "spjqm",
            Condition::Spjqmb => "spjqmb",
            Condition::Q1 => "q1",
            Condition::Q1ab => "q1ab",
        }
    }

    /// Constraint families a compiled program of this condition is made of.
    pub fn families(self) -> &'static [&'static str] {
        match self {
            Condition::Jpm => &[tags::JPM_NORMALIZATION, tags::JPM_MARGINAL],
            Condition::Jqm => &[tags::JQM_NORMALIZATION, tags::JQM_DECOHERENCE],
            Condition::Spjqm => &[tags::SPJQM_DECOHERENCE],
            Condition::Spjqmb => &[tags::SPJQM_DECOHERENCE, tags::SPJQMB_BRANCH_ORTHOGONALITY],
            Condition::Q1 => &[tags::Q1_NORMALIZATION, tags::Q1_BASIC_SUM, tags::Q1_JOINT],
            Condition::Q1ab => &[
                tags::Q1AB_NORMALIZATION,
                tags::Q1AB_ADDITIVITY,
                tags::Q1AB_UNIT_SUM,
                tags::Q1AB_CONTEXT,
                tags::Q1AB_ORTHOGONALITY,
            ],
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parameter(format!("unknown condition '{s}'")))
    }
}

/// Provenance tags: one per constraint family.
pub mod tags {
    /// `Σ_γ P_J(γ) = 1`
    pub const JPM_NORMALIZATION: &str = "jpm.normalization: P_J(Xi) = 1";
    /// `P_J(X) = P(X)` for fine outcomes of maximal contexts
    pub const JPM_MARGINAL: &str = "jpm.marginal: P_J(X) = P(X), X in C~";
    pub const JQM_NORMALIZATION: &str = "jqm.normalization: D_J(Xi, Xi) = 1";
    /// experimental probabilities and decoherence of alternative outcomes, jointly
    pub const JQM_DECOHERENCE: &str = "jqm.decoherence: D_J(X, Y) = P(X n Y), X, Y in A_M";
    pub const JQM_POSITIVITY: &str = "jqm.positivity: mu_J(alpha) >= 0";
    pub const SPJQM_DECOHERENCE: &str = "spjqm.decoherence: <X|Y> = P(X n Y), X, Y in A_M, |X> = sum |{g}>";
    pub const SPJQMB_BRANCH_ORTHOGONALITY: &str =
        "spjqmb.branch-orthogonality: <X|Y> = 0, X, Y imply disjoint outcomes of a basic measurement";
    pub const SPJQMB_BRANCHING_DECOHERENCE: &str =
        "spjqmb.branching-decoherence: <X|Y> = P(X n Y), X, Y in A_Mb";
    pub const Q1_NORMALIZATION: &str = "q1.normalization: G(Xi, Xi) = 1";
    pub const Q1_BASIC_SUM: &str = "q1.basic-sum: G(X, Xi) = sum_{Y in M_i} G(X, Y), X in M_i or Xi";
    pub const Q1_JOINT: &str = "q1.joint-probability: G(X, Y) = P(X n Y), M_i, M_j jointly performable";
    pub const Q1AB_NORMALIZATION: &str = "q1ab.normalization: G(Xi, Xi) = 1";
    pub const Q1AB_ADDITIVITY: &str = "q1ab.additivity: |X u Y> = |X> + |Y> across contexts";
    pub const Q1AB_UNIT_SUM: &str = "q1ab.unit-sum: |Xi> = sum_{X in M} |X>";
    pub const Q1AB_CONTEXT: &str = "q1ab.context-probability: <X|Y> = P(X n Y), X, Y in A_M";
    pub const Q1AB_ORTHOGONALITY: &str = "q1ab.orthogonality: <X|Y> = 0, X, Y imply disjoint outcomes of a basic measurement";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConeKind {
    /// Vector variables; the cone is the nonnegative orthant unless the program is free.
    Linear,
    /// A real symmetric matrix variable in the PSD cone.
    Psd,
}

/// `Σ coef · var = rhs`. For PSD programs variables are upper-triangle entries `X_ij`, `i <= j`.
#[derive(Clone, Debug, Serialize)]
pub struct Equality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub tag: &'static str,
}

/// Inequalities generated on demand.
#[derive(Clone, Debug, Serialize)]
pub enum LazyFamily {
    /// `Σ_{γ, γ' ∈ α} d_{γγ'} >= 0` for every subset `α` of `atoms` atoms.
    SubsetPositivity { atoms: usize },
}

#[derive(Clone, Debug)]
pub struct ConeProgram {
    pub condition: Condition,
    pub kind: ConeKind,
    /// Vector length (linear) or matrix side (PSD).
    pub n: usize,
    /// Linear programs only: variables unrestricted in sign.
    pub free: bool,
    pub equalities: Vec<Equality>,
    pub lazy: Option<LazyFamily>,
    /// PSD only: vectors `r` with `X r = 0` on every feasible point (implied by the
    /// equalities together with positivity).
    pub null_relations: Vec<Vec<(usize, f64)>>,
    /// PSD only: equalities whose coefficient matrices sum to a PSD matrix; bounds
    /// the trace of feasible points on its range.
    pub trace_anchor: Vec<usize>,
    /// Names of the rows/columns (PSD) or variables (linear, when meaningful).
    pub labels: Vec<String>,
}

/// Index of `(i, j)`, `i <= j`, in row-major upper-triangle order of an `n x n` matrix.
pub fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

/// Inverse of [`tri_index`].
pub fn tri_pair(n: usize, idx: usize) -> (usize, usize) {
    let mut i = 0;
    let mut start = 0;
    while start + (n - i) <= idx {
        start += n - i;
        i += 1;
    }
    (i, i + idx - start)
}

pub fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Accumulates coefficients keyed by variable index, dropping exact zeros.
#[derive(Default)]
pub(crate) struct CoeffAcc(BTreeMap<usize, f64>);

impl CoeffAcc {
    pub fn add(&mut self, idx: usize, c: f64) {
        *self.0.entry(idx).or_insert(0.0) += c;
    }

    /// `Σ_{i ∈ xs, j ∈ ys} X_ij` over ordered pairs of a symmetric matrix.
    pub fn add_block(&mut self, n: usize, xs: &[usize], ys: &[usize], c: f64) {
        for &i in xs {
            for &j in ys {
                self.add(tri_index(n, i, j), c);
            }
        }
    }

    pub fn finish(self) -> Vec<(usize, f64)> {
        self.0.into_iter().filter(|(_, c)| *c != 0.0).collect()
    }
}

impl ConeProgram {
    /// Number of scalar variables.
    pub fn num_vars(&self) -> usize {
        match self.kind {
            ConeKind::Linear => self.n,
            ConeKind::Psd => tri_len(self.n),
        }
    }

    /// Dense symmetric coefficient matrix of an equality, so that
    /// `<A, X>_F = Σ coef · X_ij`.
    pub fn coefficient_matrix(&self, eq: &Equality) -> DMatrix<f64> {
        let n = self.n;
        let mut a = DMatrix::zeros(n, n);
        for &(idx, c) in &eq.coeffs {
            let (i, j) = tri_pair(n, idx);
            if i == j {
                a[(i, i)] += c;
            } else {
                a[(i, j)] += c / 2.0;
                a[(j, i)] += c / 2.0;
            }
        }
        a
    }

    /// Upper-triangle variable vector of a symmetric matrix.
    pub fn vars_of_matrix(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut out = Vec::with_capacity(tri_len(n));
        for i in 0..n {
            for j in i..n {
                out.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        out
    }

    pub fn matrix_of_vars(n: usize, vars: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = vars[tri_index(n, i, j)];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Largest absolute equality residual at a variable vector.
    pub fn max_residual(&self, vars: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|e| {
                let lhs: f64 = e.coeffs.iter().map(|&(i, c)| c * vars[i]).sum();
                (lhs - e.rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_residual_matrix(&self, m: &DMatrix<f64>) -> f64 {
        self.max_residual(&Self::vars_of_matrix(m))
    }

    /// Constraint count per provenance tag.
    pub fn family_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for e in &self.equalities {
            *out.entry(e.tag).or_insert(0) += 1;
        }
        out
    }

    /// Sparse text export: a header, then one line per equality
    /// `coef <idx> <val> ... rhs <r> tag "<tag>"`. PSD indices are row-major
    /// upper-triangle positions.
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            ConeKind::Linear if self.free => "LINEAR-FREE",
            ConeKind::Linear => "LINEAR",
            ConeKind::Psd => "PSD",
        };
        let _ = writeln!(out, "# condition {}", self.condition);
        let _ = writeln!(out, "kind {kind} n {}", self.n);
        if self.kind == ConeKind::Psd {
            let _ = writeln!(out, "# index (i,j), i<=j -> i*(2n-i+1)/2 + (j-i)");
        }
        if let Some(LazyFamily::SubsetPositivity { atoms }) = &self.lazy {
            let _ = writeln!(out, "lazy subset-positivity atoms {atoms}");
        }
        let _ = writeln!(out, "equalities {}", self.equalities.len());
        for e in &self.equalities {
            out.push_str("coef");
            for &(i, c) in &e.coeffs {
                let _ = write!(out, " {i} {c}");
            }
            let _ = writeln!(out, " rhs {} tag \"{}\"", e.rhs, e.tag);
        }
        out
    }
}
