use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use jointmeasure::behaviour::{chsh_value, compose_behaviours, Behaviour, ConsistencyReport, DEFAULT_TOL};
use jointmeasure::branching::{branch_orthogonal_pairs, enumerate_branching_with_budget, OrthogonalPair};
use jointmeasure::conditions::{compile, compile_spjqm, compile_spjqmb_with, Condition, ConeProgram, DecoherenceMatrix};
use jointmeasure::io::{self, BehaviourFile, MatrixFile, ScenarioFile};
use jointmeasure::scenario::{compose as compose_scenarios, Scenario};
use jointmeasure::solvers::{
    bisect_boundary, gap_candidates, inclusion_audit, sample_chsh_behaviour, separation_hints, solve_program, Audit,
    BisectResult, GapCandidate, SearchHints, SolveOptions, Status, Verdict, OPEN_GAPS, SYMMETRY_TOL,
};
use jointmeasure::symmetry::behaviour_symmetries;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::Common;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_UNDECIDED: u8 = 2;

fn emit<T: Serialize>(common: &Common, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match &common.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pool(common: &Common) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(common.jobs.max(1)).build()?)
}

fn program_for(c: Condition, b: &Behaviour, opts: &SolveOptions) -> Result<ConeProgram> {
    Ok(match c {
        Condition::Spjqmb => compile_spjqmb_with(b, opts.spjqmb_mode)?,
        c => compile(c, b)?,
    })
}

fn hints_for(c: Condition, b: &Behaviour, opts: &SolveOptions) -> SearchHints {
    if c != Condition::Jqm {
        return SearchHints::default();
    }
    SearchHints {
        subsets: separation_hints(b),
        symmetry: if opts.use_symmetry {
            behaviour_symmetries(b, SYMMETRY_TOL)
        } else {
            vec![]
        },
    }
}

fn solve(c: Condition, b: &Behaviour, opts: &SolveOptions, timings: bool) -> Result<(Verdict, ConeProgram)> {
    let start = Instant::now();
    let p = program_for(c, b, opts)?;
    let mut v = solve_program(&p, &hints_for(c, b, opts), opts)?;
    if timings {
        v.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok((v, p))
}

fn ensure_consistent(spec: &str, b: &Behaviour) -> Result<()> {
    let report = b.validate(DEFAULT_TOL);
    if !report.is_valid() {
        bail!("{spec}: behaviour is not consistent: {}", report.summary());
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckEntry {
    input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<f64>,
    verdicts: Vec<Verdict>,
    audit: Audit,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    gap_candidates: Vec<GapCandidate>,
    /// Constraint count per provenance tag, per condition.
    provenance: BTreeMap<Condition, BTreeMap<&'static str, usize>>,
}

#[derive(Serialize)]
struct GapProbe {
    outer: Condition,
    inner: Condition,
    /// Samples with both verdicts conclusive.
    compared: usize,
    candidates: Vec<String>,
}

#[derive(Serialize)]
struct CheckReport {
    seed: u64,
    entries: Vec<CheckEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_probe: Option<Vec<GapProbe>>,
}

pub fn check(
    common: &Common,
    conditions: &[Condition],
    include_witness: bool,
    export: Option<&Path>,
    inputs: &[String],
    samples: usize,
) -> Result<u8> {
    let opts = common.solve_options();
    let mut names: Vec<String> = inputs.to_vec();
    let mut behaviours = Vec::new();
    for spec in inputs {
        let b = crate::inputs::behaviour(spec)?;
        ensure_consistent(spec, &b)?;
        behaviours.push(b);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(common.seed);
    for k in 0..samples {
        behaviours.push(sample_chsh_behaviour(&mut rng)?);
        names.push(format!("sample:{k}"));
    }
    let tasks: Vec<(usize, Condition)> = (0..behaviours.len())
        .flat_map(|i| conditions.iter().map(move |&c| (i, c)))
        .collect();
    let results: Vec<Result<(Verdict, ConeProgram)>> = pool(common)?.install(|| {
        tasks
            .par_iter()
            .map(|&(i, c)| solve(c, &behaviours[i], &opts, common.timings))
            .collect()
    });
    let mut entries: Vec<CheckEntry> = names
        .iter()
        .zip(&behaviours)
        .map(|(spec, b)| CheckEntry {
            input: spec.clone(),
            chsh: chsh_value(b).ok(),
            verdicts: vec![],
            audit: Audit::default(),
            gap_candidates: vec![],
            provenance: BTreeMap::new(),
        })
        .collect();
    let mut code = EXIT_OK;
    for (&(i, c), r) in tasks.iter().zip(results) {
        let (mut v, p) = r?;
        if v.status == Status::Undecided {
            code = EXIT_UNDECIDED;
        }
        if !include_witness {
            v.witness = None;
        }
        if let Some(dir) = export {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("input{i}_{}.txt", c.name()));
            std::fs::write(&path, p.to_sparse_text()).with_context(|| format!("writing {}", path.display()))?;
        }
        entries[i].provenance.insert(c, p.family_counts());
        entries[i].verdicts.push(v);
    }
    for e in &mut entries {
        e.audit = inclusion_audit(&e.verdicts);
        if !e.audit.is_consistent() {
            log::error!("{}: verdicts break known inclusions: {:?}", e.input, e.audit.violations);
        }
        e.gap_candidates = gap_candidates(&e.verdicts);
    }
    let gap_probe = (samples > 0).then(|| {
        OPEN_GAPS
            .iter()
            .map(|&(outer, inner)| {
                let conclusive = |e: &&CheckEntry, c: Condition| {
                    e.verdicts.iter().any(|v| v.condition == c && v.status.is_conclusive())
                };
                GapProbe {
                    outer,
                    inner,
                    compared: entries.iter().filter(|e| conclusive(e, outer) && conclusive(e, inner)).count(),
                    candidates: entries
                        .iter()
                        .filter(|e| e.gap_candidates.iter().any(|g| g.outer == outer && g.inner == inner))
                        .map(|e| e.input.clone())
                        .collect(),
                }
            })
            .collect()
    });
    emit(
        common,
        &CheckReport {
            seed: common.seed,
            entries,
            gap_probe,
        },
    )?;
    Ok(code)
}

#[derive(Serialize)]
struct BoundEntry {
    condition: Condition,
    /// `None` when the whole segment is feasible.
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bisection: Option<BisectResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    undecided: bool,
}

#[derive(Serialize)]
struct BoundReport {
    family: String,
    lo: f64,
    hi: f64,
    tol_lambda: f64,
    results: Vec<BoundEntry>,
}

fn strip(v: &mut Verdict, timings: bool) {
    v.witness = None;
    if !timings {
        v.wall_time_ms = None;
    }
}

pub fn bound(
    common: &Common,
    isotropic: bool,
    between: Option<&[String]>,
    conditions: &[Condition],
    lo: f64,
    hi: f64,
    tol_lambda: f64,
) -> Result<u8> {
    let opts = common.solve_options();
    let (label, ends) = match (isotropic, between) {
        (true, _) => ("isotropic".to_string(), None),
        (false, Some([a, b])) => {
            let (ba, bb) = (crate::inputs::behaviour(a)?, crate::inputs::behaviour(b)?);
            ensure_consistent(a, &ba)?;
            ensure_consistent(b, &bb)?;
            (format!("between {a} and {b}"), Some((ba, bb)))
        }
        _ => bail!("bound needs --family isotropic or --between A B"),
    };
    let family = |l: f64| -> jointmeasure::Result<Behaviour> {
        match &ends {
            None => jointmeasure::behaviour::isotropic(l),
            Some((a, b)) => a.mix(b, l),
        }
    };
    let run = |c: Condition| -> Result<BoundEntry> {
        let check = |b: &Behaviour, effort: u32| -> jointmeasure::Result<Verdict> {
            let o = opts.with_effort(effort);
            let p = program_for(c, b, &o).map_err(|e| jointmeasure::Error::Parameter(e.to_string()))?;
            solve_program(&p, &hints_for(c, b, &o), &o)
        };
        let top = check(&family(hi)?, 1)?;
        if top.status == Status::Feasible {
            return Ok(BoundEntry {
                condition: c,
                lambda_star: None,
                chsh: None,
                bisection: None,
                note: Some(format!("feasible at hi = {hi}: no boundary on the segment")),
                undecided: false,
            });
        }
        let mut r = bisect_boundary(family, check, lo, hi, tol_lambda)?;
        strip(&mut r.feasible, common.timings);
        strip(&mut r.infeasible, common.timings);
        Ok(BoundEntry {
            condition: c,
            lambda_star: Some(r.lambda_star),
            chsh: family(r.lambda_star).ok().and_then(|b| chsh_value(&b).ok()),
            undecided: r.undecided,
            note: None,
            bisection: Some(r),
        })
    };
    let results: Vec<Result<BoundEntry>> = pool(common)?.install(|| conditions.par_iter().map(|&c| run(c)).collect());
    let results: Vec<BoundEntry> = results.into_iter().collect::<Result<_>>()?;
    let code = if results.iter().any(|r| r.undecided) {
        EXIT_UNDECIDED
    } else {
        EXIT_OK
    };
    emit(
        common,
        &BoundReport {
            family: label,
            lo,
            hi,
            tol_lambda,
            results,
        },
    )?;
    Ok(code)
}

#[derive(Serialize)]
struct MatrixReport {
    rows: Vec<Vec<f64>>,
    size: usize,
    input_min_eigenvalues: Vec<f64>,
    min_eigenvalue: f64,
    inputs_strongly_positive: bool,
    strongly_positive: bool,
}

#[derive(Serialize, Default)]
struct ComposeReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    behaviour: Option<BehaviourFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<MatrixReport>,
}

pub fn compose(
    common: &Common,
    scenarios: &[String],
    behaviours: &[String],
    matrices: &[PathBuf],
    psd_tol: f64,
) -> Result<u8> {
    if scenarios.is_empty() && behaviours.is_empty() && matrices.is_empty() {
        bail!("compose needs --scenario, --behaviour or --matrix inputs");
    }
    let mut report = ComposeReport::default();
    let mut code = EXIT_OK;
    if !scenarios.is_empty() {
        let parts: Vec<Scenario> = scenarios.iter().map(|s| crate::inputs::scenario(s)).collect::<Result<_>>()?;
        let refs: Vec<&Scenario> = parts.iter().collect();
        report.scenario = Some(ScenarioFile::from_scenario(&compose_scenarios(&refs)?));
    }
    if !behaviours.is_empty() {
        let parts: Vec<Behaviour> = behaviours
            .iter()
            .map(|s| {
                let b = crate::inputs::behaviour(s)?;
                ensure_consistent(s, &b)?;
                Ok(b)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Behaviour> = parts.iter().collect();
        report.behaviour = Some(BehaviourFile::from_behaviour(&compose_behaviours(&refs)?));
    }
    if !matrices.is_empty() {
        let parts: Vec<DecoherenceMatrix> = matrices
            .iter()
            .map(|p| io::read_matrix(p).with_context(|| format!("reading matrix {}", p.display())))
            .collect::<Result<_>>()?;
        let mut product = parts[0].clone();
        for m in &parts[1..] {
            product = product.compose(m);
        }
        let input_min: Vec<f64> = parts.iter().map(DecoherenceMatrix::min_eigenvalue).collect();
        let inputs_sp = input_min.iter().all(|&e| e >= -psd_tol);
        let min = product.min_eigenvalue();
        let sp = min >= -psd_tol;
        if inputs_sp && !sp {
            log::error!("composition of strongly positive matrices has eigenvalue {min:e}");
            code = EXIT_UNDECIDED;
        }
        report.matrix = Some(MatrixReport {
            rows: MatrixFile::from_matrix(product.entries()).rows,
            size: product.size(),
            input_min_eigenvalues: input_min,
            min_eigenvalue: min,
            inputs_strongly_positive: inputs_sp,
            strongly_positive: sp,
        });
    }
    emit(common, &report)?;
    Ok(code)
}

#[derive(Serialize)]
struct OutcomeRef {
    measurement: Vec<usize>,
    /// Outcome label per basic measurement of `measurement`.
    labels: Vec<usize>,
}

#[derive(Serialize)]
struct PairReport {
    x: OutcomeRef,
    y: OutcomeRef,
    basic: usize,
}

#[derive(Serialize)]
struct BranchReport {
    measurements: usize,
    branching_measurements: usize,
    /// Partitions not already given by an ordinary measurement.
    proper_branching: usize,
    orthogonal_pairs: usize,
    partitions: Vec<Vec<Vec<usize>>>,
    pairs: Vec<PairReport>,
}

fn outcome_ref(s: &Scenario, measurement: usize, cell: usize) -> OutcomeRef {
    let m = s.measurement(measurement);
    OutcomeRef {
        measurement: m.basic_indices().to_vec(),
        labels: m.cell_labels(s.space(), cell),
    }
}

fn pair_report(s: &Scenario, p: &OrthogonalPair) -> PairReport {
    PairReport {
        x: outcome_ref(s, p.x.measurement, p.x.cell),
        y: outcome_ref(s, p.y.measurement, p.y.cell),
        basic: p.basic,
    }
}

pub fn branch(common: &Common, spec: &str, budget: usize) -> Result<u8> {
    let s = crate::inputs::scenario(spec)?;
    let all = enumerate_branching_with_budget(&s, budget)?;
    let partitions: Vec<Vec<Vec<usize>>> = jointmeasure::branching::partition_inventory(&all).into_iter().collect();
    let ordinary: std::collections::BTreeSet<Vec<Vec<usize>>> = (0..s.measurements().len())
        .map(|id| {
            let mut cells: Vec<Vec<usize>> =
                s.measurement(id).fine_outcomes().iter().map(|c| c.atoms().collect()).collect();
            cells.sort();
            cells
        })
        .collect();
    let pairs: Vec<PairReport> = branch_orthogonal_pairs(&s).iter().map(|p| pair_report(&s, p)).collect();
    emit(
        common,
        &BranchReport {
            measurements: s.measurements().len(),
            branching_measurements: partitions.len(),
            proper_branching: partitions.iter().filter(|p| !ordinary.contains(*p)).count(),
            orthogonal_pairs: pairs.len(),
            partitions,
            pairs,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct WitnessReport {
    rows: Vec<Vec<f64>>,
    max_equality_residual: f64,
    min_eigenvalue: f64,
    verified: bool,
}

#[derive(Serialize)]
struct ModelReport {
    behaviour: BehaviourFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<f64>,
    consistency: ConsistencyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    spjqm_witness: Option<WitnessReport>,
}

pub fn model_eval(common: &Common, spec: &str, scenario: Option<&str>, witness: bool) -> Result<u8> {
    let (model, s) = crate::inputs::model(spec, scenario)?;
    let s = std::sync::Arc::new(s);
    let b = model.behaviour(s.clone())?;
    let mut code = EXIT_OK;
    let spjqm_witness = if witness {
        let g = model.spjqm_witness(&s)?;
        let p = compile_spjqm(&b)?;
        let residual = p.max_residual_matrix(&g);
        let min_eig = DecoherenceMatrix::new(g.clone())?.min_eigenvalue();
        let verified = residual <= common.tol_psd && min_eig >= -common.tol_psd;
        if !verified {
            code = EXIT_UNDECIDED;
        }
        Some(WitnessReport {
            rows: MatrixFile::from_matrix(&g).rows,
            max_equality_residual: residual,
            min_eigenvalue: min_eig,
            verified,
        })
    } else {
        None
    };
    emit(
        common,
        &ModelReport {
            behaviour: BehaviourFile::from_behaviour(&b),
            chsh: chsh_value(&b).ok(),
            consistency: b.validate(DEFAULT_TOL),
            spjqm_witness,
        },
    )?;
    Ok(code)
}

#[derive(Serialize)]
struct ValidateEntry {
    input: String,
    valid: bool,
    report: ConsistencyReport,
}

pub fn validate(common: &Common, inputs: &[String], tol: f64) -> Result<u8> {
    if inputs.is_empty() {
        bail!("validate needs at least one behaviour");
    }
    let mut entries = Vec::new();
    for spec in inputs {
        let b = crate::inputs::behaviour(spec)?;
        let report = b.validate(tol);
        entries.push(ValidateEntry {
            input: spec.clone(),
            valid: report.is_valid(),
            report,
        });
    }
    let ok = entries.iter().all(|e| e.valid);
    emit(common, &entries)?;
    Ok(if ok { EXIT_OK } else { EXIT_INPUT })
}
