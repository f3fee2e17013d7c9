use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use gsfl::config::{config_hash, parse_config};
use gsfl::diagnostics::{gradcheck, split_equivalence};
use gsfl::report::{emit_csv, emit_summary, render_csv, render_summary, summarize, RunManifest};
use gsfl::schemes::{run_all, Experiment};
use gsfl::{Error, ExperimentConfig, RoundMetrics};

const GRADCHECK_MODELS: usize = 10;
const GRADCHECK_TOLERANCE: f64 = 1e-5;
const SPLIT_EQUIV_CONFIGS: usize = 20;
const SPLIT_EQUIV_STEPS: usize = 10;
const SPLIT_EQUIV_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "gsfl", version, about = "Group-based split federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the configured scheme and write per-round metrics as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check backprop against central finite differences on random small models.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reference checks of the training engine.
    Oracle {
        #[command(subcommand)]
        check: OracleCheck,
    },
    /// Run CL, SL, FL and GSFL on one config and write a combined CSV.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
enum OracleCheck {
    /// Split training versus unsplit SGD on random models.
    SplitEquiv {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_user_error() {
            Failure::User(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<(ExperimentConfig, String), Failure> {
    let mut cfg = parse_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let text = std::fs::read_to_string(config).map_err(|e| Failure::User(format!("{}: {e}", config.display())))?;
    Ok((cfg, config_hash(&text)?))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_metrics(metrics: &[RoundMetrics], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => emit_csv(metrics, p)?,
        None => print!("{}", render_csv(metrics)),
    }
    Ok(())
}

fn run(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let (cfg, hash) = load(config, seed)?;
    let started_at = now();
    let report = Experiment::prepare(&cfg)?.run()?;
    write_metrics(&report.metrics, out)?;
    if let Some(p) = out {
        RunManifest {
            config_hash: hash,
            seed: cfg.seed,
            scheme: cfg.scheme.to_string(),
            started_at,
            outputs: vec![p.to_path_buf()],
        }
        .write(with_suffix(p, ".manifest.json"))?;
    }
    eprintln!(
        "{}: {} rounds, final accuracy {:.4}, simulated time {:.3} s",
        cfg.scheme,
        report.metrics.len(),
        report.final_accuracy(),
        report.metrics.last().map_or(0.0, |m| m.cumulative_latency_s)
    );
    Ok(())
}

fn compare(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let (cfg, hash) = load(config, seed)?;
    let started_at = now();
    let reports = run_all(&cfg)?;
    let metrics: Vec<RoundMetrics> = reports.iter().flat_map(|r| r.metrics.iter().cloned()).collect();
    let summary = summarize(&reports);
    write_metrics(&metrics, out)?;
    match out {
        Some(p) => {
            let summary_path = with_suffix(p, ".summary.csv");
            emit_summary(&summary, &summary_path)?;
            RunManifest {
                config_hash: hash,
                seed: cfg.seed,
                scheme: "compare".into(),
                started_at,
                outputs: vec![p.to_path_buf(), summary_path],
            }
            .write(with_suffix(p, ".manifest.json"))?;
            eprint!("{}", render_summary(&summary));
        }
        None => eprint!("{}", render_summary(&summary)),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seed } => run(&config, out.as_deref(), seed),
        Command::Compare { config, out, seed } => compare(&config, out.as_deref(), seed),
        Command::Gradcheck { seed } => {
            let s = gradcheck(seed, GRADCHECK_MODELS)?;
            println!(
                "gradcheck: {} models, {} parameters, max relative error {:.3e}",
                s.models, s.parameters, s.max_rel_error
            );
            if s.max_rel_error < GRADCHECK_TOLERANCE {
                Ok(())
            } else {
                Err(Failure::Internal(format!("gradient check exceeded {GRADCHECK_TOLERANCE:e}")))
            }
        }
        Command::Oracle {
            check: OracleCheck::SplitEquiv { seed },
        } => {
            let s = split_equivalence(seed, SPLIT_EQUIV_CONFIGS, SPLIT_EQUIV_STEPS)?;
            println!(
                "split-equiv: {} configurations, max parameter distance {:.3e}",
                s.configs, s.max_param_distance
            );
            if s.max_param_distance <= SPLIT_EQUIV_TOLERANCE {
                Ok(())
            } else {
                Err(Failure::Internal(format!("split training diverged beyond {SPLIT_EQUIV_TOLERANCE:e}")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
