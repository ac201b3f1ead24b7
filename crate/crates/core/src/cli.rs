//! `bevsel` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bandit::PolicyKind;
use crate::config::{ResolvedConfig, RunConfig};
use crate::experiment::{compare, load_summary, run_experiment, sweep, verify_result, Metric, SweepAxis};
use crate::sim::Pipeline;
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "BEVSEL_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "bevsel",
    version,
    about = "Collaborator selection and straggler-aware fusion experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every seed of a config and write records, summary and CSV.
    Run {
        config: PathBuf,
        /// Output directory (default: config `output_dir`, else under the output root).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        pipeline: Option<Pipeline>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Use seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Tabulate metrics of two or more results against a reference.
    Compare {
        #[arg(required = true, num_args = 2..)]
        results: Vec<PathBuf>,
        /// Comma-separated metric names.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<Metric>>,
        /// Label of the reference result (default: the first).
        #[arg(long)]
        reference: Option<String>,
        /// Write the comparison CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// One run per value of a parameter, plus an aggregate CSV.
    Sweep {
        config: PathBuf,
        /// D, K, alpha, omega or profile.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Check a config, or with --result recheck a result directory.
    Validate {
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        result: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) => EXIT_CONFIG,
        Error::BoundViolation(_) => EXIT_INVARIANT,
        Error::Io { .. } => EXIT_IO,
        Error::HashMismatch { .. } | Error::SchemaMismatch { .. } => EXIT_MISMATCH,
        _ => EXIT_OTHER,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e.root() {
        Error::Config(_) => "config",
        Error::BoundViolation(_) => "bound_violation",
        Error::Io { .. } => "io",
        Error::HashMismatch { .. } => "hash_mismatch",
        Error::SchemaMismatch { .. } => "schema_mismatch",
        _ => "runtime",
    }
}

/// One JSON object describing `e`, for stderr.
pub fn error_json(e: &Error) -> String {
    let slot = match e {
        Error::Slot { slot, .. } => Some(*slot),
        _ => None,
    };
    let mut v = serde_json::json!({
        "error": error_kind(e),
        "exit_code": exit_code(e),
        "message": e.root().to_string(),
        "slot": slot,
    });
    if let Error::BoundViolation(r) = e.root() {
        v["bound_check"] = serde_json::to_value(r).unwrap_or_default();
    }
    v.to_string()
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

fn output_dir(cfg: &ResolvedConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(o) = out {
        return Ok(o);
    }
    if let Some(o) = &cfg.run.output_dir {
        return Ok(if o.is_absolute() {
            o.clone()
        } else {
            output_root().join(o)
        });
    }
    let hash = cfg.scenario_hash()?;
    let label = match cfg.run.mode {
        crate::config::Mode::EndToEnd => format!("{}-{}", cfg.run.policy, cfg.run.pipeline),
        crate::config::Mode::SyntheticChains => cfg.run.policy.to_string(),
    };
    Ok(output_root().join(format!("{label}-{}", &hash[..12])))
}

fn load_with_overrides(
    path: &Path,
    policy: Option<PolicyKind>,
    pipeline: Option<Pipeline>,
    horizon: Option<u64>,
    seeds: Option<u64>,
) -> Result<ResolvedConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(p) = policy {
        cfg.run.policy = p;
    }
    if let Some(p) = pipeline {
        cfg.run.pipeline = p;
    }
    if let Some(h) = horizon {
        cfg.run.horizon = Some(h);
    }
    if let Some(n) = seeds {
        cfg.run.seeds = None;
        cfg.run.seed_count = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            policy,
            pipeline,
            horizon,
            seeds,
        } => {
            let cfg = load_with_overrides(&config, policy, pipeline, horizon, seeds)?;
            let dir = output_dir(&cfg, out)?;
            let s = run_experiment(&cfg, &dir)?;
            let a = &s.aggregate;
            println!("{}", dir.display());
            eprintln!(
                "{}: {} seeds x {} slots, final regret {:.4} (se {:.4})",
                s.label(),
                s.seeds.len(),
                s.horizon,
                a.final_regret.mean,
                a.final_regret.se
            );
        }
        Command::Compare {
            results,
            metrics,
            reference,
            out,
            json,
        } => {
            let loaded = results
                .iter()
                .map(|p| Ok((p.display().to_string(), load_summary(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let metrics = metrics.unwrap_or_else(|| Metric::ALL.to_vec());
            let c = compare(&loaded, &metrics, reference.as_deref())?;
            let csv = c.to_csv()?;
            match out {
                Some(p) => write_text(&p, &csv)?,
                None => print!("{csv}"),
            }
            if let Some(p) = json {
                let text = serde_json::to_string_pretty(&c).map_err(|e| Error::Serde(e.to_string()))?;
                write_text(&p, &(text + "\n"))?;
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            workers,
        } => {
            let cfg = RunConfig::load(&config)?;
            let dir = match out {
                Some(o) => o,
                None => output_dir(&cfg, None)?.with_extension(format!("sweep-{}", axis.name())),
            };
            let rows = sweep(&cfg, axis, &values, &dir, workers)?;
            println!("{}", dir.join("sweep.csv").display());
            for r in rows {
                eprintln!("{}={}: final regret {:.4}", r.axis, r.value, r.final_regret);
            }
        }
        Command::Validate { config, result } => match (config, result) {
            (Some(c), None) => {
                let cfg = RunConfig::load(&c)?;
                println!("ok {}", cfg.scenario_hash()?);
            }
            (None, Some(r)) => {
                let s = verify_result(&r)?;
                println!("ok {}", s.config_hash);
            }
            _ => return Err(Error::Config("validate needs a config path or --result DIR".into())),
        },
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
