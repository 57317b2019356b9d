//! `advlq`: synthesis, evaluation and the tradeoff experiments from the
//! command line. Every run writes CSV tables plus a `<command>.meta.json`
//! sidecar whose `spec` field reproduces the run.

mod commands;
mod output;
mod spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advlq::error::ErrorClass;
use advlq::hard_synthesis::HardOptions;
use advlq::par::{self, Exec};
use clap::{Args, Parser, Subcommand};

use crate::commands::Ctx;
use crate::output::Out;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] advlq::error::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Io { .. } | CliError::Csv { .. } => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Precondition => 3,
                ErrorClass::Solver => 4,
                ErrorClass::Divergence => 5,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "advlq",
    version,
    about = "Adversarially robust LQ synthesis and tradeoff experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Synthesize a controller for a budget `epsilon` or a soft level `gamma`.
    Synth(RunArgs),
    /// Nominal and adversarial cost of a given controller.
    Evaluate(RunArgs),
    /// NC/AC tradeoff curves over a design-budget grid.
    Tradeoff(RunArgs),
    /// Nominal vs robust designs across the integrator coupling ρ.
    Envelope(RunArgs),
    /// Scalar predictor bounds against the true excess cost.
    #[command(name = "bounds_scalar_filter")]
    BoundsScalarFilter(RunArgs),
    /// Linearized cartpole tradeoff curves per fixation point.
    #[command(name = "cartpole_tradeoff")]
    CartpoleTradeoff(RunArgs),
    /// Nonlinear cartpole runs of the LQG and the robust controller.
    #[command(name = "cartpole_sim")]
    CartpoleSim(RunArgs),
    /// Run whatever `kind` the spec names.
    Run(RunArgs),
    /// Print a builtin plant (integrator, cartpole, scalar) as plant JSON.
    Builtin { name: String },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment spec (JSON). Defaults are used for anything it omits.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for grid rows; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for simulations; overrides the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative bisection tolerance of the hard synthesis; overrides the spec.
    #[arg(long)]
    tol: Option<f64>,
}

fn spec_kind(path: &Path) -> Result<String, CliError> {
    let v: serde_json::Value = serde_json::from_str(&spec::read(path)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    match v.get("kind").and_then(|k| k.as_str()) {
        Some(k) if spec::KINDS.contains(&k) => Ok(k.to_string()),
        Some(k) => Err(CliError::Parse(format!(
            "unknown kind {k:?}; expected one of {:?}",
            spec::KINDS
        ))),
        None => Err(CliError::Parse("the spec has no kind".into())),
    }
}

fn execute(kind: &str, args: &RunArgs) -> Result<(), CliError> {
    let mut spec = spec::load(kind, args.spec.as_deref())?;
    let seed = args.seed.or(spec.seed).unwrap_or(0);
    let tol = args
        .tol
        .or(spec.tol)
        .unwrap_or(HardOptions::default().rel_tol);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Parse(format!(
            "tol must lie in (0, 1), got {tol}"
        )));
    }
    spec.seed = Some(seed);
    spec.tol = Some(tol);
    let ctx = Ctx {
        opts: HardOptions {
            rel_tol: tol,
            ..Default::default()
        },
        exec: if args.jobs == Some(1) {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
        seed,
    };
    log::info!("{kind}: config {}", output::config_hash(&spec));
    let mut out = Out::new(&args.out)?;
    par::with_jobs(args.jobs, || {
        commands::run(&spec.experiment, &ctx, &mut out)
    })?;
    out.finish(spec.experiment.kind(), &spec, seed)
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    let (kind, args) = match cmd {
        Cmd::Builtin { name } => {
            let spec =
                advlq::systems::builtin(&name).map_err(|e| CliError::Parse(e.to_string()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&spec).expect("plant specs serialize")
            );
            return Ok(());
        }
        Cmd::Run(a) => {
            let path = a
                .spec
                .as_deref()
                .ok_or_else(|| CliError::Parse("run needs --spec".into()))?;
            (spec_kind(path)?, a)
        }
        Cmd::Synth(a) => ("synth".into(), a),
        Cmd::Evaluate(a) => ("evaluate".into(), a),
        Cmd::Tradeoff(a) => ("tradeoff".into(), a),
        Cmd::Envelope(a) => ("envelope".into(), a),
        Cmd::BoundsScalarFilter(a) => ("bounds_scalar_filter".into(), a),
        Cmd::CartpoleTradeoff(a) => ("cartpole_tradeoff".into(), a),
        Cmd::CartpoleSim(a) => ("cartpole_sim".into(), a),
    };
    execute(&kind, &args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADVLQ_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
