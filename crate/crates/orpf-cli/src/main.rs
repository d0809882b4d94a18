//! `orpf` command-line front end.

mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use orpf::pipeline::PipelineConfig;
use orpf::taps::TapMode;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "orpf", version, about = "Optimal reactive power flow with tap optimization")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by all subcommands. Flags override the config file, which
/// overrides the built-in defaults.
#[derive(Debug, Args)]
struct GlobalArgs {
    /// Pipeline configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Stationarity tolerance of the solver.
    #[arg(long, global = true)]
    tol_stat: Option<f64>,
    /// Feasibility tolerance of the solver.
    #[arg(long, global = true)]
    tol_feas: Option<f64>,
    /// Iteration limit of the solver.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Parallel workers for batch runs; 1 runs sequentially.
    #[arg(long, global = true, env = "ORPF_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Seed of the case sampler.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of sampled study cases; all profile steps when omitted.
    #[arg(long, global = true)]
    cases: Option<usize>,
    /// Tap handling.
    #[arg(long, global = true, value_enum)]
    taps: Option<TapArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TapArg {
    Relax,
    Heuristic,
    Exhaustive,
}

impl From<TapArg> for TapMode {
    fn from(t: TapArg) -> Self {
        match t {
            TapArg::Relax => TapMode::Relax,
            TapArg::Heuristic => TapMode::Heuristic,
            TapArg::Exhaustive => TapMode::Exhaustive,
        }
    }
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Network file (JSON).
    #[arg(long)]
    net: PathBuf,
    /// Time-series profiles (CSV) defining the study cases.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a network and optional profiles.
    Validate(NetArgs),
    /// Power flow at the initial operating point of one case.
    Powerflow {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 0)]
        case: usize,
        /// Write the bus admittance matrix as CSV to this file.
        #[arg(long)]
        dump_ybus: Option<PathBuf>,
    },
    /// Optimize a single case.
    Optimize {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 0)]
        case: usize,
        /// Objective name, e.g. `B.U` or `max:E.Q@0.05`.
        #[arg(long, conflicts_with = "weights", required_unless_present = "weights")]
        objective: Option<String>,
        /// Weights file (JSON).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-objective optimization of every case and cross evaluation.
    Interdependence {
        #[command(flatten)]
        net: NetArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive objective weights from interdependence means.
    TuneWeights {
        /// Relative importances, e.g. `B.U=10,G.Q=5`; unlisted objectives get 0.
        #[arg(long)]
        tilde: String,
        /// Interdependence CSV or JSON result providing the column means.
        #[arg(long)]
        stats: PathBuf,
        /// Write the weights here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize every case for a weighted objective.
    RunCombined {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        weights: PathBuf,
        /// Interdependence result (JSON) for the envelope check and report.
        #[arg(long)]
        interdependence: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write report files from stored results.
    Report {
        #[arg(long)]
        interdependence: PathBuf,
        #[arg(long)]
        combined: Option<PathBuf>,
        /// Network file; only its name is used.
        #[arg(long)]
        net: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Machine-readable failure printed on stderr.
#[derive(Debug, Serialize)]
struct ErrorEnvelope {
    error: String,
    message: String,
}

/// Failure with an explicit exit code and kind tag.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub code: u8,
}

fn kind_of(err: &anyhow::Error) -> (&'static str, u8) {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return (f.kind, f.code);
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<orpf::Error>() {
            return (e.kind(), 1);
        }
        if cause.is::<std::io::Error>() {
            return ("io", 1);
        }
        if cause.is::<serde_json::Error>() {
            return ("parse", 1);
        }
    }
    ("error", 1)
}

fn emit_error(kind: &str, message: String) {
    let env = ErrorEnvelope {
        error: kind.to_string(),
        message,
    };
    eprintln!("{}", serde_json::to_string(&env).expect("envelope serializes"));
}

/// Effective configuration: defaults, then the config file, then flags.
fn resolve_config(g: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = read(p)?;
            serde_json::from_str(&text).with_context(|| format!("config file {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    let solver = &mut cfg.optimize.solver;
    if let Some(v) = g.tol_stat {
        solver.tol_stat = v;
    }
    if let Some(v) = g.tol_feas {
        solver.tol_feas = v;
    }
    if let Some(v) = g.max_iter {
        solver.max_iter = v;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if g.cases.is_some() {
        cfg.cases = g.cases;
    }
    if let Some(t) = g.taps {
        cfg.taps.mode = t.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let workers = cli.global.workers.max(1);
    match cli.command {
        Command::Validate(n) => commands::validate(&n.net, n.profiles.as_deref()),
        Command::Powerflow { net, case, dump_ybus } => {
            commands::powerflow(&net.net, net.profiles.as_deref(), case, dump_ybus.as_deref(), &cfg)
        }
        Command::Optimize {
            net,
            case,
            objective,
            weights,
            out,
        } => commands::optimize(
            &net.net,
            net.profiles.as_deref(),
            case,
            objective.as_deref(),
            weights.as_deref(),
            out.as_deref(),
            &cfg,
        ),
        Command::Interdependence { net, out } => {
            commands::interdependence(&net.net, net.profiles.as_deref(), &out, &cfg, workers)
        }
        Command::TuneWeights { tilde, stats, out } => commands::tune_weights(&tilde, &stats, out.as_deref()),
        Command::RunCombined {
            net,
            weights,
            interdependence,
            out,
        } => commands::run_combined(
            &net.net,
            net.profiles.as_deref(),
            &weights,
            interdependence.as_deref(),
            &out,
            &cfg,
            workers,
        ),
        Command::Report {
            interdependence,
            combined,
            net,
            out,
        } => commands::report(&interdependence, combined.as_deref(), net.as_deref(), &out, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            emit_error("usage", e.render().to_string().trim_end().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = kind_of(&err);
            emit_error(kind, format!("{err:#}"));
            ExitCode::from(code)
        }
    }
}
