//! `wflab <subcommand> <config.json> [flags]`
//!
//! Exit status: 0 success, 1 other failure (including a violated bound),
//! 2 validation error, 3 hypothesis violation, 4 insufficient samples.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use wflab_cli::commands::{self, Failure, Outcome};
use wflab_cli::config::{apply_override, parse_override, set_path, Command, ConfigError, ExperimentConfig};
use wflab_cli::emit::{emit_report, ReportMeta};

const DEFAULT_OUT: &str = "wflab-out";

#[derive(Parser)]
#[command(name = "wflab", version, about = "Large-deviation experiments for scaled jump processes")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Minimal action to a point (`y`) or an open target set.
    Rate(RunArgs),
    /// Monte Carlo estimate of the semigroup, plain or tilted.
    Simulate(RunArgs),
    /// Compare h log P(target) against the variational bound.
    VerifyLdp(RunArgs),
    /// Probe the kernel for the standing hypotheses.
    CheckHypotheses(RunArgs),
    /// Chernoff exit bounds from the dominating Hamiltonian.
    Bounds(RunArgs),
    /// Tangent-plane minorant of the local rate.
    Minorant(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo paths for `simulate` and `verify-ldp`.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` override applied to the config before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Sub {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Sub::Rate(a) => (Command::Rate, a),
            Sub::Simulate(a) => (Command::Simulate, a),
            Sub::VerifyLdp(a) => (Command::VerifyLdp, a),
            Sub::CheckHypotheses(a) => (Command::CheckHypotheses, a),
            Sub::Bounds(a) => (Command::Bounds, a),
            Sub::Minorant(a) => (Command::Minorant, a),
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("WFLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("WFLAB_THREADS={raw:?} is not a positive integer"))?;
    if n == 0 {
        return Err("WFLAB_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn read_config(args: &RunArgs, cmd: Command) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| ConfigError(format!("{}: {e}", args.config.display())))?;
    let mut raw: Value =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", args.config.display())))?;
    if !raw.is_object() {
        return Err(ConfigError("config must be a JSON object".into()));
    }
    for o in &args.overrides {
        let (k, v) = parse_override(o)?;
        apply_override(&mut raw, &k, &v)?;
    }
    if let Some(seed) = args.seed {
        set_path(&mut raw, "seed", seed.into())?;
    }
    if let Some(paths) = args.paths {
        if !matches!(cmd, Command::Simulate | Command::VerifyLdp) {
            return Err(ConfigError(format!("--paths does not apply to `{}`", cmd.name())));
        }
        set_path(&mut raw, &format!("{}.paths", cmd.block()), paths.into())?;
    }
    if let Some(out) = &args.out {
        set_path(&mut raw, "output", Value::String(out.display().to_string()))?;
    }
    Ok(raw)
}

fn execute(cmd: Command, raw: &Value, base: &Path) -> Result<Outcome, Failure> {
    let cfg = ExperimentConfig::from_value(raw.clone()).map_err(Failure::config)?;
    cfg.validate_for(cmd).map_err(Failure::config)?;
    let kernel = cfg.kernel(base).map_err(Failure::config)?;
    commands::run(cmd, &cfg, &kernel)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (cmd, args) = Cli::parse().command.split();

    if let Err(msg) = init_threads() {
        eprintln!("wflab: {msg}");
        return ExitCode::from(2);
    }

    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let raw = read_config(&args, cmd);
    let outcome = match &raw {
        Ok(v) => execute(cmd, v, &base),
        Err(e) => Err(Failure::config(e.clone())),
    };

    let echo = raw.as_ref().ok().cloned().unwrap_or(Value::Null);
    // echo the normalized config when it parses, the raw value otherwise
    let config = ExperimentConfig::from_value(echo.clone()).map(|c| c.to_value()).unwrap_or(echo.clone());
    let out_dir = args
        .out
        .clone()
        .or_else(|| echo.get("output").and_then(Value::as_str).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let meta = ReportMeta {
        subcommand: cmd.name(),
        name: echo.get("name").and_then(Value::as_str),
        seed: echo.get("seed").map_or(Some(0), Value::as_u64),
        config,
    };

    let code = match &outcome {
        Ok(_) => 0,
        Err(f) => {
            eprintln!("wflab {}: {} ({})", cmd.name(), f.message, f.code);
            f.exit
        }
    };
    if let Err(e) = emit_report(&out_dir, &meta, outcome.as_ref()) {
        eprintln!("wflab: cannot write report: {e}");
        return ExitCode::from(if code == 0 { 1 } else { code as u8 });
    }
    log::info!("report written to {}", out_dir.display());
    ExitCode::from(code as u8)
}
