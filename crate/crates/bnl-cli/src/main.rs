//! `bnl` — exact analysis of discrete Bayesian networks via program
//! transformers: expected sampling times, posteriors, parameter sweeps,
//! seeded simulation, and enumeration cross-checks.
//!
//! Exit codes: 0 success, 2 input error, 4 simulation truncation,
//! 3 analysis-premise error (unsupported loop shape or an expectation table
//! exceeding the `BNL_MAX_TABLE_CELLS` cap).

use bnl_core::bayesnet::{load_param_network, parse_bif_with_options, BnError, Network};
use bnl_core::coeff::{
    decimal_fixed, decimal_sci6, parse_rational, CoeffError, Coefficient,
};
use bnl_core::engine::{self, EngineError};
use bnl_core::expectation::ExpError;
use bnl_core::pgcl::TransformError;
use bnl_core::sim::{self, SimError};
use bnl_core::translate::{self, TranslateError};
use clap::{Args, Parser, Subcommand};
use num::BigRational;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bnl",
    version,
    about = "Exact expected-sampling-time and posterior analysis of Bayesian networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Network file: `.json` for parameterized networks, BIF otherwise.
    file: PathBuf,
    /// Observation `VAR=VALUE` (label or numeric index); repeatable.
    #[arg(long = "observe", value_name = "VAR=VALUE")]
    observe: Vec<String>,
    /// Parameter binding `NAME=RATIONAL`; repeatable.
    #[arg(long = "param", value_name = "NAME=RATIONAL")]
    param: Vec<String>,
    /// Rescale parameter-free CPT rows whose mass is within 1e-6 of 1.
    #[arg(long)]
    normalize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact expected sampling time of the observation (rejection loop runtime).
    Est {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Exact posterior probability of a query under observations.
    Prob {
        #[command(flatten)]
        input: InputArgs,
        /// Query atom `VAR=VALUE`; repeatable.
        #[arg(long = "query", value_name = "VAR=VALUE", required = true)]
        query: Vec<String>,
    },
    /// Print the translated sampling program.
    Translate {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Evaluate the symbolic expected sampling time over a parameter grid (CSV).
    Sweep {
        /// Network file: `.json` for parameterized networks, BIF otherwise.
        file: PathBuf,
        /// Observation `VAR=VALUE`; repeatable.
        #[arg(long = "observe", value_name = "VAR=VALUE")]
        observe: Vec<String>,
        /// Parameter to sweep.
        #[arg(long)]
        param: String,
        /// Grid: `start:end:step` (inclusive), a bare value, or a comma list.
        #[arg(long)]
        grid: String,
        /// Rescale parameter-free CPT rows whose mass is within 1e-6 of 1.
        #[arg(long)]
        normalize: bool,
    },
    /// Seeded rejection-sampling simulation with runtime-model step counts.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Per-trial step cap; truncated trials are excluded from the mean.
        #[arg(long = "max-steps", default_value_t = 10_000_000)]
        max_steps: u64,
        /// Number of deterministic trial shards.
        #[arg(long, default_value_t = 1)]
        shards: u64,
    },
    /// Node, edge, and average-Markov-blanket statistics.
    Stats {
        /// Network file: `.json` for parameterized networks, BIF otherwise.
        file: PathBuf,
        /// Rescale parameter-free CPT rows whose mass is within 1e-6 of 1.
        #[arg(long)]
        normalize: bool,
    },
    /// Cross-check transformer posteriors against brute-force enumeration.
    Check {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 8)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A diagnostic plus the exit code contract: 2 input, 3 premise, 4 truncation.
struct CliError {
    message: String,
    code: u8,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn input_error(e: impl fmt::Display) -> CliError {
    CliError { message: e.to_string(), code: 2 }
}

fn premise_code_for_exp(e: &ExpError) -> u8 {
    match e {
        ExpError::TableTooLarge { .. } => 3,
        _ => 2,
    }
}

impl From<BnError> for CliError {
    fn from(e: BnError) -> Self {
        input_error(e)
    }
}

impl From<CoeffError> for CliError {
    fn from(e: CoeffError) -> Self {
        input_error(e)
    }
}

impl From<TranslateError> for CliError {
    fn from(e: TranslateError) -> Self {
        input_error(e)
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        let code = match &e {
            TransformError::UnsupportedLoop(_) | TransformError::OrbitBodyNotLoopFree => 3,
            TransformError::Expectation(exp) => premise_code_for_exp(exp),
        };
        CliError { message: e.to_string(), code }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::Transform(t) => return CliError::from(t.clone()),
            EngineError::Exp(exp) => premise_code_for_exp(exp),
            EngineError::OracleTooLarge { .. } => 3,
            _ => 2,
        };
        CliError { message: e.to_string(), code }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::AllTrialsTruncated { .. } => 4,
            _ => 2,
        };
        CliError { message: e.to_string(), code }
    }
}

fn load_network(file: &Path, normalize: bool, params: &[String]) -> Result<Network, CliError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| input_error(format!("cannot read {}: {e}", file.display())))?;
    let is_json = file
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    let net = if is_json {
        load_param_network(&text)?
    } else {
        parse_bif_with_options(&text, normalize)?
    };
    if params.is_empty() {
        return Ok(net);
    }
    let mut bindings = BTreeMap::new();
    for spec in params {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| input_error(format!("--param `{spec}` is not NAME=RATIONAL")))?;
        bindings.insert(name.trim().to_string(), parse_rational(value.trim())?);
    }
    Ok(net.bind_params(&bindings)?)
}

/// Parses repeatable `VAR=VALUE` atoms, resolving labels to domain values.
fn parse_atoms(net: &Network, specs: &[String]) -> Result<BTreeMap<String, BigRational>, CliError> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let (var, value) = spec
            .split_once('=')
            .ok_or_else(|| input_error(format!("`{spec}` is not VAR=VALUE")))?;
        let var = var.trim();
        let value = net.parse_value(var, value.trim())?;
        out.insert(var.to_string(), value);
    }
    Ok(out)
}

fn render_assignment(net: &Network, assignment: &BTreeMap<String, BigRational>) -> String {
    if assignment.is_empty() {
        return "(none)".to_string();
    }
    assignment
        .iter()
        .map(|(var, value)| {
            let label = net.label_of_value(var, value).unwrap_or("?");
            format!("{var}={label}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_coefficient(c: &Coefficient) -> String {
    match c.as_constant() {
        Some(q) => format!(
            "{} ({}) [{}]",
            c,
            decimal_fixed(&q, 6),
            decimal_sci6(&q)
        ),
        None => c.to_string(),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Est { input } => {
            let net = load_network(&input.file, input.normalize, &input.param)?;
            let obs = parse_atoms(&net, &input.observe)?;
            let report = engine::est(&net, &obs)?;
            println!("est = {}", render_coefficient(&report.est));
            println!("observed = {}", render_assignment(&net, &report.observed));
            println!("program_size = {}", report.program_size);
            println!("branch_order = {}", report.branch_order);
        }
        Command::Prob { input, query } => {
            let net = load_network(&input.file, input.normalize, &input.param)?;
            let obs = parse_atoms(&net, &input.observe)?;
            let query = parse_atoms(&net, &query)?;
            let p = engine::posterior(&net, &query, &obs)?;
            println!("posterior = {}", render_coefficient(&p));
        }
        Command::Translate { input } => {
            let net = load_network(&input.file, input.normalize, &input.param)?;
            let obs = parse_atoms(&net, &input.observe)?;
            let program = translate::with_observations(&net, &obs)?;
            println!("{program}");
        }
        Command::Sweep { file, observe, param, grid, normalize } => {
            let net = load_network(&file, normalize, &[])?;
            let obs = parse_atoms(&net, &observe)?;
            let grid = engine::parse_grid(&grid)?;
            let rows = engine::sweep(&net, &obs, &param, &grid)?;
            print!("{}", engine::render_sweep_csv(&rows));
        }
        Command::Simulate { input, seed, trials, max_steps, shards } => {
            let net = load_network(&input.file, input.normalize, &input.param)?;
            let obs = parse_atoms(&net, &input.observe)?;
            let program = translate::with_observations(&net, &obs)?;
            let result =
                sim::simulate_sharded(&program, net.domains(), seed, trials, max_steps, shards)?;
            println!(
                "trials={} mean={} var={} ci99={} truncated={}",
                result.trials,
                decimal_fixed(&result.mean_steps, 6),
                decimal_fixed(&result.sample_variance, 6),
                decimal_fixed(&result.half_width_99, 6),
                result.truncated
            );
        }
        Command::Stats { file, normalize } => {
            let net = load_network(&file, normalize, &[])?;
            println!(
                "nodes={} edges={} avg_mb={}",
                net.node_count(),
                net.edge_count(),
                decimal_fixed(&net.markov_blanket_avg(), 2)
            );
        }
        Command::Check { input, trials, seed } => {
            let net = load_network(&input.file, input.normalize, &input.param)?;
            let obs = parse_atoms(&net, &input.observe)?;
            let report = engine::soundness_check(&net, &obs, trials, seed)?;
            for m in &report.mismatches {
                println!(
                    "mismatch: query {} -> wp {} vs enumeration {}",
                    render_assignment(&net, &m.query),
                    m.via_wp,
                    m.via_enumeration
                );
            }
            println!("mismatches={}", report.mismatches.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
