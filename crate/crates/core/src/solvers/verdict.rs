use serde::Serialize;

use crate::conditions::Condition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Feasible,
    Infeasible,
    Undecided,
}

impl Status {
    pub fn is_conclusive(self) -> bool {
        self != Status::Undecided
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
            Status::Undecided => "UNDECIDED",
        })
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Residuals {
    /// Largest absolute equality violation of the witness.
    pub equality: Option<f64>,
    /// Smallest eigenvalue of the witness (PSD programs).
    pub min_eigenvalue: Option<f64>,
    /// Largest violation of sign constraints or materialized cuts.
    pub inequality: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Vector { values: Vec<f64> },
    /// Full symmetric matrix, row major.
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    /// `c = yᵀA_eq + wᵀA_ge` with `w >= 0`, `c <= 0` on nonnegative variables, `c = 0` on
    /// free ones, and `yᵀb + wᵀh > 0`.
    Farkas {
        eq_multipliers: Vec<f64>,
        ge_multipliers: Vec<f64>,
        gap: f64,
        /// Largest sign violation of the combined row, accepted below tolerance.
        max_violation: f64,
    },
    /// `S = Σ y_k A_k` with `λ_min(S) >= -delta` on the anchored face, and
    /// `yᵀb < -delta · trace_bound`, so no PSD matrix meets the equalities.
    PsdSeparator {
        multipliers: Vec<f64>,
        gap: f64,
        min_eigenvalue: f64,
        trace_bound: f64,
    },
    /// Positivity cuts `μ(α_i) >= 0` whose weighted sum lies in the span of the equalities
    /// with a negative value.
    CutSet {
        subsets: Vec<Vec<usize>>,
        weights: Vec<f64>,
        eq_multipliers: Vec<f64>,
        gap: f64,
        residual: f64,
    },
    /// The equalities alone have no solution.
    InconsistentEqualities { multipliers: Vec<f64>, gap: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub condition: Condition,
    pub status: Status,
    pub residuals: Residuals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    pub iterations: usize,
    /// Positivity cuts in the final JQM model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cuts: Option<usize>,
    /// Whether the separation step ran exhaustively (JQM only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_separation: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Verdict {
    pub fn new(condition: Condition, status: Status) -> Self {
        Verdict {
            condition,
            status,
            residuals: Residuals::default(),
            witness: None,
            certificate: None,
            iterations: 0,
            cuts: None,
            exact_separation: None,
            note: None,
            wall_time_ms: None,
        }
    }

    pub fn undecided(condition: Condition, note: impl Into<String>) -> Self {
        let mut v = Self::new(condition, Status::Undecided);
        v.note = Some(note.into());
        v
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Witness matrix, if the witness is one.
    pub fn witness_matrix(&self) -> Option<nalgebra::DMatrix<f64>> {
        match &self.witness {
            Some(Witness::Matrix { rows }) => {
                let n = rows.len();
                Some(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
            _ => None,
        }
    }

    pub fn witness_vector(&self) -> Option<&[f64]> {
        match &self.witness {
            Some(Witness::Vector { values }) => Some(values),
            _ => None,
        }
    }
}

pub(crate) fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
