use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jointmeasure::conditions::{Condition, SpjqmbMode};
use jointmeasure::solvers::SolveOptions;

mod commands;
mod inputs;

/// Membership tests for joint-measurement behaviours.
#[derive(Parser, Debug)]
#[command(name = "jointmeasure", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Equality tolerance for LP programs.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_lp: f64,
    /// Residual tolerance for PSD programs.
    #[arg(long, global = true, default_value_t = 1e-7)]
    tol_psd: f64,
    /// Iteration cap for the PSD solver.
    #[arg(long, global = true, default_value_t = 200_000)]
    max_iters: usize,
    /// Positivity cuts allowed in the JQM loop.
    #[arg(long, global = true, default_value_t = 5000)]
    cut_budget: usize,
    /// Wall-clock budget of one JQM solve, in seconds.
    #[arg(long, global = true, default_value_t = 600)]
    time_budget: u64,
    /// Seed for randomized local search and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent (behaviour, condition) pairs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Include wall times in reports (makes them run-dependent).
    #[arg(long, global = true)]
    timings: bool,
    /// Enumerate branching measurements for SPJQM_b instead of using orthogonal pairs.
    #[arg(long, global = true)]
    spjqmb_validation: bool,
    /// Do not restrict the JQM search to symmetric decoherence matrices.
    #[arg(long, global = true)]
    no_symmetry: bool,
}

impl Common {
    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol_lp: self.tol_lp,
            tol_psd: self.tol_psd,
            max_iters: self.max_iters,
            cut_budget: self.cut_budget,
            time_budget: Duration::from_secs(self.time_budget),
            seed: self.seed,
            spjqmb_mode: if self.spjqmb_validation {
                SpjqmbMode::Validation
            } else {
                SpjqmbMode::Fast
            },
            use_symmetry: !self.no_symmetry,
            ..SolveOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ConditionArg {
    Jpm,
    Jqm,
    Spjqm,
    Spjqmb,
    Q1,
    Q1ab,
    All,
}

impl ConditionArg {
    fn expand(self) -> Vec<Condition> {
        match self {
            ConditionArg::Jpm => vec![Condition::Jpm],
            ConditionArg::Jqm => vec![Condition::Jqm],
            ConditionArg::Spjqm => vec![Condition::Spjqm],
            ConditionArg::Spjqmb => vec![Condition::Spjqmb],
            ConditionArg::Q1 => vec![Condition::Q1],
            ConditionArg::Q1ab => vec![Condition::Q1ab],
            ConditionArg::All => Condition::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Isotropic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WitnessKind {
    Spjqm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide membership conditions for behaviours.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        condition: ConditionArg,
        /// Include witness matrices in the report.
        #[arg(long)]
        include_witness: bool,
        /// Write each compiled program as sparse text into this directory.
        #[arg(long)]
        export_programs: Option<PathBuf>,
        /// Also check this many seeded random CHSH behaviours and report where the
        /// open inclusions SPJQM_b ⊆ SPJQM and SPJQM ⊆ Q1 separate them.
        #[arg(long)]
        sample: Option<usize>,
        /// Behaviour files or built-ins (@pr-box, @uniform, @singlet, @double-pr,
        /// @isotropic=<λ>, @deterministic=<atom>).
        #[arg(required_unless_present = "sample")]
        inputs: Vec<String>,
    },
    /// Locate the membership boundary along a one-parameter family.
    Bound {
        #[arg(long, value_enum, required_unless_present = "between")]
        family: Option<Family>,
        /// Interpolate `λ·A + (1-λ)·B` between two behaviours.
        #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "family")]
        between: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "all")]
        condition: ConditionArg,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        /// Bracket width at which bisection stops.
        #[arg(long, default_value_t = 1e-4)]
        tol_lambda: f64,
    },
    /// Compose scenarios, behaviours and decoherence matrices.
    Compose {
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long = "behaviour")]
        behaviours: Vec<String>,
        #[arg(long = "matrix")]
        matrices: Vec<PathBuf>,
        /// Tolerance for the positivity report of composed matrices.
        #[arg(long, default_value_t = 1e-10)]
        psd_tol: f64,
    },
    /// List branching measurements and branch-orthogonal outcome pairs.
    Branch {
        /// Scenario file, @chsh or @bell=n,m,d.
        scenario: String,
        #[arg(long, default_value_t = jointmeasure::branching::DEFAULT_BRANCHING_BUDGET)]
        budget: usize,
    },
    /// Evaluate a quantum model on a scenario.
    ModelEval {
        /// Model file or @singlet.
        model: String,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_enum)]
        witness: Option<WitnessKind>,
    },
    /// Report normalization and no-signalling violations.
    Validate {
        inputs: Vec<String>,
        #[arg(long, default_value_t = jointmeasure::behaviour::DEFAULT_TOL)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = cli.common;
    let result = match cli.command {
        Command::Check {
            condition,
            include_witness,
            export_programs,
            sample,
            inputs,
        } => commands::check(
            &common,
            &condition.expand(),
            include_witness,
            export_programs.as_deref(),
            &inputs,
            sample.unwrap_or(0),
        ),
        Command::Bound {
            family,
            between,
            condition,
            lo,
            hi,
            tol_lambda,
        } => commands::bound(
            &common,
            family.is_some(),
            between.as_deref(),
            &condition.expand(),
            lo,
            hi,
            tol_lambda,
        ),
        Command::Compose {
            scenarios,
            behaviours,
            matrices,
            psd_tol,
        } => commands::compose(&common, &scenarios, &behaviours, &matrices, psd_tol),
        Command::Branch { scenario, budget } => commands::branch(&common, &scenario, budget),
        Command::ModelEval {
            model,
            scenario,
            witness,
        } => commands::model_eval(&common, &model, scenario.as_deref(), witness.is_some()),
        Command::Validate { inputs, tol } => commands::validate(&common, &inputs, tol),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_INPUT)
        }
    }
}
