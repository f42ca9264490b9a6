//! Input resolution: files on disk or `@name` built-ins.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use jointmeasure::behaviour::{compose_behaviours, deterministic, isotropic, pr_box, uniform, Behaviour};
use jointmeasure::io;
use jointmeasure::quantum::{singlet_chsh_model, QuantumModel};
use jointmeasure::scenario::{bell_scenario, chsh_scenario, Scenario};

pub const BUILTIN_HELP: &str = "@pr-box, @uniform, @singlet, @double-pr, @isotropic=<λ>, @deterministic=<atom>";

fn builtin_arg(spec: &str, name: &str) -> Option<String> {
    spec.strip_prefix(name)
        .and_then(|rest| rest.strip_prefix('='))
        .map(str::to_string)
}

pub fn behaviour(spec: &str) -> Result<Behaviour> {
    if let Some(name) = spec.strip_prefix('@') {
        let chsh = || Arc::new(chsh_scenario());
        return Ok(match name {
            "pr-box" => pr_box(),
            "uniform" => uniform(chsh()),
            "singlet" => jointmeasure::quantum::singlet_behaviour(),
            "double-pr" => compose_behaviours(&[&pr_box(), &pr_box()])?,
            _ => {
                if let Some(v) = builtin_arg(name, "isotropic") {
                    let l: f64 = v.parse().with_context(|| format!("bad λ in {spec}"))?;
                    isotropic(l)?
                } else if let Some(v) = builtin_arg(name, "deterministic") {
                    let g: usize = v.parse().with_context(|| format!("bad atom in {spec}"))?;
                    deterministic(chsh(), g)?
                } else {
                    bail!("unknown built-in behaviour {spec} (known: {BUILTIN_HELP})")
                }
            }
        });
    }
    io::read_behaviour(Path::new(spec)).with_context(|| format!("reading behaviour {spec}"))
}

pub fn scenario(spec: &str) -> Result<Scenario> {
    if let Some(name) = spec.strip_prefix('@') {
        if name == "chsh" {
            return Ok(chsh_scenario());
        }
        if let Some(v) = builtin_arg(name, "bell") {
            let parts: Vec<usize> = v
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("bad triple in {spec}"))?;
            if let [n, m, d] = parts[..] {
                return Ok(bell_scenario(n, m, d)?);
            }
        }
        bail!("unknown built-in scenario {spec} (known: @chsh, @bell=n,m,d)");
    }
    io::read_scenario(Path::new(spec)).with_context(|| format!("reading scenario {spec}"))
}

/// A model and the scenario it is evaluated on.
pub fn model(spec: &str, scenario_spec: Option<&str>) -> Result<(QuantumModel, Scenario)> {
    let model = match spec {
        "@singlet" => singlet_chsh_model(),
        s if s.starts_with('@') => bail!("unknown built-in model {s} (known: @singlet)"),
        s => io::read_model(Path::new(s)).with_context(|| format!("reading model {s}"))?,
    };
    let scenario = match (scenario_spec, spec) {
        (Some(s), _) => scenario(s)?,
        (None, "@singlet") => chsh_scenario(),
        (None, _) => return Err(anyhow!("--scenario is required for model files")),
    };
    Ok((model, scenario))
}
