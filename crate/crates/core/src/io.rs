//! JSON file formats for scenarios, behaviours, quantum models and decoherence matrices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::behaviour::Behaviour;
use crate::conditions::DecoherenceMatrix;
use crate::error::{Error, Result};
use crate::quantum::{QuantumModel, C64};
use crate::scenario::Scenario;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub factors: Vec<usize>,
    pub maximal_contexts: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        let mut contexts = s.maximal_contexts().to_vec();
        contexts.sort();
        ScenarioFile {
            factors: s.space().cardinalities().to_vec(),
            maximal_contexts: contexts,
            labels: s.labels().iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    pub fn build(&self) -> Result<Scenario> {
        let mut labels = BTreeMap::new();
        for (k, v) in &self.labels {
            let i: usize = k
                .parse()
                .map_err(|_| Error::Format(format!("label key {k:?} is not a basic measurement index")))?;
            if i >= self.factors.len() {
                return Err(Error::BasicIndexOutOfRange {
                    index: i,
                    count: self.factors.len(),
                });
            }
            labels.insert(i, v.clone());
        }
        Ok(Scenario::build(&self.factors, &self.maximal_contexts)?.with_labels(labels))
    }
}

/// The scenario of a behaviour file: inline, or a path relative to the behaviour file.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Path(String),
    Inline(ScenarioFile),
}

impl<'de> Deserialize<'de> for ScenarioRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(p) => Ok(ScenarioRef::Path(p)),
            v @ serde_json::Value::Object(_) => serde_json::from_value(v)
                .map(ScenarioRef::Inline)
                .map_err(|e| D::Error::custom(format!("scenario: {e}"))),
            _ => Err(D::Error::custom("scenario must be an object or a path string")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviourFile {
    pub scenario: ScenarioRef,
    /// Context key such as `[0,2]` to fine probabilities in mixed-radix label order.
    pub probs: BTreeMap<String, Vec<f64>>,
}

impl BehaviourFile {
    pub fn from_behaviour(b: &Behaviour) -> Self {
        let s = b.scenario();
        BehaviourFile {
            scenario: ScenarioRef::Inline(ScenarioFile::from_scenario(s)),
            probs: s
                .maximal_contexts()
                .iter()
                .enumerate()
                .map(|(k, c)| (Scenario::context_key(c), b.context_probs(k).to_vec()))
                .collect(),
        }
    }

    /// `base` resolves a scenario given by path.
    pub fn build(&self, base: Option<&Path>) -> Result<Behaviour> {
        let scenario = match &self.scenario {
            ScenarioRef::Inline(f) => f.build()?,
            ScenarioRef::Path(p) => {
                let path = match base {
                    Some(dir) => dir.join(p),
                    None => PathBuf::from(p),
                };
                read_scenario(&path)?
            }
        };
        behaviour_from_tables(Arc::new(scenario), &self.probs)
    }
}

fn parse_key(key: &str) -> Result<Vec<usize>> {
    let inner = key
        .trim()
        .strip_prefix('[')
        .and_then(|k| k.strip_suffix(']'))
        .ok_or_else(|| Error::Format(format!("context key {key:?} is not of the form [i,j,...]")))?;
    let mut out: Vec<usize> = Vec::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        out.push(
            part.parse()
                .map_err(|_| Error::Format(format!("context key {key:?}: {part:?} is not an index")))?,
        );
    }
    out.sort_unstable();
    Ok(out)
}

pub fn behaviour_from_tables(scenario: Arc<Scenario>, probs: &BTreeMap<String, Vec<f64>>) -> Result<Behaviour> {
    let mut tables: Vec<Option<Vec<f64>>> = vec![None; scenario.maximal_contexts().len()];
    for (key, table) in probs {
        let ctx = parse_key(key)?;
        let k = scenario
            .maximal_contexts()
            .iter()
            .position(|c| *c == ctx)
            .ok_or_else(|| Error::Format(format!("probs key {key} is not a maximal context")))?;
        if tables[k].replace(table.clone()).is_some() {
            return Err(Error::Format(format!("context {key} given twice")));
        }
    }
    let mut out = Vec::with_capacity(tables.len());
    for (k, t) in tables.into_iter().enumerate() {
        out.push(t.ok_or_else(|| {
            Error::Format(format!(
                "probs missing for context {}",
                Scenario::context_key(&scenario.maximal_contexts()[k])
            ))
        })?);
    }
    Behaviour::new(scenario, out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectorEntry {
    pub basic: usize,
    pub label: usize,
    /// Rows of `[re, im]` pairs.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dimension: usize,
    pub state: Vec<[f64; 2]>,
    pub projectors: Vec<ProjectorEntry>,
}

impl ModelFile {
    pub fn from_model(m: &QuantumModel) -> Self {
        ModelFile {
            dimension: m.dimension(),
            state: m.state().iter().map(|z| [z.re, z.im]).collect(),
            projectors: m
                .projectors()
                .iter()
                .map(|(&(basic, label), e)| ProjectorEntry {
                    basic,
                    label,
                    matrix: (0..e.nrows())
                        .map(|i| (0..e.ncols()).map(|j| [e[(i, j)].re, e[(i, j)].im]).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn build(&self) -> Result<QuantumModel> {
        let d = self.dimension;
        if self.state.len() != d {
            return Err(Error::Format(format!("state has {} entries, dimension is {d}", self.state.len())));
        }
        let state = DVector::from_iterator(d, self.state.iter().map(|z| C64::new(z[0], z[1])));
        let mut projectors = BTreeMap::new();
        for p in &self.projectors {
            if p.matrix.len() != d || p.matrix.iter().any(|r| r.len() != d) {
                return Err(Error::Format(format!(
                    "projector (basic {}, label {}) is not {d}x{d}",
                    p.basic, p.label
                )));
            }
            let m = DMatrix::from_fn(d, d, |i, j| C64::new(p.matrix[i][j][0], p.matrix[i][j][1]));
            if projectors.insert((p.basic, p.label), m).is_some() {
                return Err(Error::Format(format!("projector (basic {}, label {}) given twice", p.basic, p.label)));
            }
        }
        QuantumModel::new(state, projectors)
    }
}

/// Atom-indexed real symmetric matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixFile {
            rows: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.rows.len();
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::Format("matrix is not square".into()));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.rows[i][j]))
    }

    pub fn decoherence(&self) -> Result<DecoherenceMatrix> {
        DecoherenceMatrix::new(self.matrix()?)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    read_json::<ScenarioFile>(path)?.build()
}

pub fn read_behaviour(path: &Path) -> Result<Behaviour> {
    read_json::<BehaviourFile>(path)?.build(path.parent())
}

pub fn read_model(path: &Path) -> Result<QuantumModel> {
    read_json::<ModelFile>(path)?.build()
}

pub fn read_matrix(path: &Path) -> Result<DecoherenceMatrix> {
    read_json::<MatrixFile>(path)?.decoherence()
}

pub fn behaviour_json(b: &Behaviour) -> String {
    serde_json::to_string_pretty(&BehaviourFile::from_behaviour(b)).expect("behaviour serializes")
}

pub fn scenario_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviour::pr_box;
    use crate::quantum::singlet_chsh_model;

    #[test]
    fn behaviour_round_trip() {
        let b = pr_box();
        let text = behaviour_json(&b);
        let back = serde_json::from_str::<BehaviourFile>(&text).unwrap().build(None).unwrap();
        assert_eq!(back.tables(), b.tables());
        assert!(text.contains("\"[0,2]\""));
    }

    #[test]
    fn canonical_scenario_sorts_contexts() {
        let f = ScenarioFile {
            factors: vec![2, 2, 2, 2],
            maximal_contexts: vec![vec![1, 3], vec![0, 2], vec![3, 0], vec![1, 2]],
            labels: BTreeMap::new(),
        };
        let s = f.build().unwrap();
        assert_eq!(
            ScenarioFile::from_scenario(&s).maximal_contexts,
            vec![vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]]
        );
    }

    #[test]
    fn model_round_trip() {
        let m = singlet_chsh_model();
        let f = ModelFile::from_model(&m);
        let back = f.build().unwrap();
        assert_eq!(back.dimension(), 4);
        assert_eq!(back.projectors().len(), m.projectors().len());
    }

    #[test]
    fn missing_context_is_reported() {
        let text = r#"{"scenario":{"factors":[2,2],"maximal_contexts":[[0,1]]},"probs":{}}"#;
        let err = serde_json::from_str::<BehaviourFile>(text).unwrap().build(None).unwrap_err();
        assert!(err.to_string().contains("[0,1]"));
    }

    #[test]
    fn unknown_field_rejected() {
        let text = r#"{"factors":[2],"maximal_contexts":[[0]],"bogus":1}"#;
        assert!(serde_json::from_str::<ScenarioFile>(text).is_err());
    }
}
