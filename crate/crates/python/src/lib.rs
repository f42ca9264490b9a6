//! Python bindings. Behaviours cross the boundary as JSON strings in the behaviour file format.

use std::sync::Arc;

use jointmeasure::behaviour::{self, Behaviour};
use jointmeasure::conditions::Condition;
use jointmeasure::io::{behaviour_json, BehaviourFile};
use jointmeasure::solvers::{decide, inclusion_audit, SolveOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse(text: &str) -> PyResult<Behaviour> {
    let file: BehaviourFile = serde_json::from_str(text).map_err(value_err)?;
    file.build(None).map_err(value_err)
}

/// Built-in CHSH behaviour as JSON: "pr-box", "uniform", "singlet" or "isotropic" (uses `lam`).
#[pyfunction]
#[pyo3(signature = (name, lam = 0.0))]
fn builtin_behaviour(name: &str, lam: f64) -> PyResult<String> {
    let chsh = || Arc::new(jointmeasure::scenario::chsh_scenario());
    let b = match name {
        "pr-box" => behaviour::pr_box(),
        "uniform" => behaviour::uniform(chsh()),
        "singlet" => jointmeasure::quantum::singlet_behaviour(),
        "isotropic" => behaviour::isotropic(lam).map_err(value_err)?,
        other => return Err(PyValueError::new_err(format!("unknown behaviour {other:?}"))),
    };
    Ok(behaviour_json(&b))
}

/// Independent product of behaviours, as JSON.
#[pyfunction]
fn compose(behaviours: Vec<String>) -> PyResult<String> {
    let parts: Vec<Behaviour> = behaviours.iter().map(|t| parse(t)).collect::<PyResult<_>>()?;
    let refs: Vec<&Behaviour> = parts.iter().collect();
    Ok(behaviour_json(&behaviour::compose_behaviours(&refs).map_err(value_err)?))
}

#[pyfunction]
#[pyo3(signature = (behaviour, tol = behaviour::DEFAULT_TOL))]
fn is_consistent(behaviour: &str, tol: f64) -> PyResult<bool> {
    Ok(parse(behaviour)?.validate(tol).is_valid())
}

#[pyfunction]
fn chsh_value(behaviour: &str) -> PyResult<f64> {
    behaviour::chsh_value(&parse(behaviour)?).map_err(value_err)
}

/// `π` minus the largest arcsine combination of the CHSH correlators; negative when violated.
#[pyfunction]
#[pyo3(signature = (behaviour, tol = 1e-9))]
fn tlm_margin(behaviour: &str, tol: f64) -> PyResult<f64> {
    Ok(behaviour::tlm_check(&parse(behaviour)?, tol).map_err(value_err)?.margin)
}

/// Decides the named conditions ("all" for every one) and returns a JSON report with
/// one verdict per condition, witnesses omitted, plus the inclusion audit.
#[pyfunction]
#[pyo3(signature = (behaviour, conditions = vec!["all".to_string()], seed = 0, cut_budget = 5000, max_iters = 200_000))]
fn check(behaviour: &str, conditions: Vec<String>, seed: u64, cut_budget: usize, max_iters: usize) -> PyResult<String> {
    let b = parse(behaviour)?;
    b.ensure_consistent(behaviour::DEFAULT_TOL).map_err(value_err)?;
    let mut list = Vec::new();
    for c in &conditions {
        if c == "all" {
            list.extend(Condition::ALL);
        } else {
            list.push(c.parse::<Condition>().map_err(value_err)?);
        }
    }
    let opts = SolveOptions {
        seed,
        cut_budget,
        max_iters,
        ..SolveOptions::default()
    };
    let mut verdicts = Vec::new();
    for c in list {
        let mut v = decide(c, &b, &opts).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        v.witness = None;
        verdicts.push(v);
    }
    let report = serde_json::json!({
        "audit": inclusion_audit(&verdicts),
        "verdicts": verdicts,
    });
    Ok(report.to_string())
}

#[pymodule]
fn pyjointmeasure(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(builtin_behaviour, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(is_consistent, m)?)?;
    m.add_function(wrap_pyfunction!(chsh_value, m)?)?;
    m.add_function(wrap_pyfunction!(tlm_margin, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
