use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use robtop::config::{Preset, RunConfig};
use robtop::Error;

/// Worst-case compliance topology optimization of a degraded cantilever.
#[derive(Debug, Parser)]
#[command(name = "robtop", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Start from a named benchmark.
    #[arg(long, value_name = "NAME")]
    preset: Option<Preset>,

    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Run several budgets, e.g. `D=0.01,0.02,0.03`.
    #[arg(long, value_name = "D=LIST")]
    sweep: Option<String>,

    /// Evaluate the report with a RAMP continuation, e.g. `steps=10`.
    #[arg(long, value_name = "steps=N")]
    continuation: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Recorded in the metadata; the pipeline itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn flag_value<'a>(flag: &str, text: &'a str, keys: &[&str]) -> Result<&'a str, String> {
    match text.split_once('=') {
        Some((k, v)) if keys.contains(&k.trim()) => Ok(v.trim()),
        _ => Err(format!("--{flag} expects {}=…, got `{text}`", keys[0])),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?),
        None => None,
    };
    let mut overrides = cli.overrides.clone();
    if let Some(s) = &cli.sweep {
        overrides.push(format!("sweep={}", flag_value("sweep", s, &["D", "budget"])?));
    }
    if let Some(c) = &cli.continuation {
        overrides.push(format!("continuation={}", flag_value("continuation", c, &["steps"])?));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("out={}", o.display()));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    RunConfig::from_sources(text.as_deref(), cli.preset, &overrides).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("robtop: configuration error: {msg}");
            return ExitCode::from(2);
        }
    };
    match robtop::run::run(&config) {
        Ok(summary) => {
            println!("nominal compliance {:.6e}", summary.nominal.compliance);
            println!("budget,wc_topo_reference_delta,nom_topo_worst_delta,wc_topo_worst_delta");
            for r in &summary.rows {
                println!(
                    "{},{:+.3},{:+.3},{:+.3}",
                    r.budget, r.wc_topo_reference_delta, r.nom_topo_worst_delta, r.wc_topo_worst_delta
                );
            }
            println!("wrote {}", config.out.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let stage = match &err {
                Error::Stage { stage, .. } => *stage,
                Error::Io(_) | Error::Csv(_) => "output",
                _ => "setup",
            };
            eprintln!("robtop: [{stage}] {err}");
            ExitCode::FAILURE
        }
    }
}
