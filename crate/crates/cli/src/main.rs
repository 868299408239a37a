use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use magnetocube::analysis::{Analysis, AnalysisRegistry, AnalysisReport};
use magnetocube::config::{parse_config, ScenarioConfig};
use magnetocube::{Error, Result};
use rayon::prelude::*;

/// Magnetic-torquer and drag-panel attitude control simulator.
#[derive(Debug, Parser)]
#[command(name = "magnetocube", version)]
struct Cli {
    /// Scenario JSON; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Analysis to run, or "all".
    #[arg(long, default_value = "simulate")]
    analysis: String,
    /// Override the configured controller.
    #[arg(long)]
    controller: Option<String>,
    /// Override the configured field model.
    #[arg(long)]
    field_model: Option<String>,
    /// List analyses, controllers and field models, then exit.
    #[arg(long)]
    list: bool,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(c) = &cli.controller {
        cfg.controller = c.clone();
    }
    if let Some(f) = &cli.field_model {
        cfg.field_model = f.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn thread_cap() -> Option<usize> {
    std::env::var("MAGNETOCUBE_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

fn run_all(jobs: &[Arc<dyn Analysis>], cfg: &ScenarioConfig, cli: &Cli) -> Result<Vec<Result<AnalysisReport>>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|a| a.run(cfg, &cli.out)).collect()))
}

fn run(cli: &Cli) -> Result<Option<Error>> {
    let registry = AnalysisRegistry::default();
    if cli.list {
        println!("analyses:");
        for a in registry.all() {
            println!("  {:16} {}", a.name(), a.description());
        }
        println!("controllers: {}", magnetocube::control::ControllerRegistry::default().names().join(", "));
        println!("field models: {}", magnetocube::environment::FieldRegistry::default().names().join(", "));
        return Ok(None);
    }
    let cfg = load(cli)?;
    let jobs = if cli.analysis == "all" { registry.all() } else { vec![registry.get(&cli.analysis)?] };
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io(format!("{}: {e}", cli.out.display())))?;

    let results = if jobs.len() > 1 { run_all(&jobs, &cfg, cli)? } else { vec![jobs[0].run(&cfg, &cli.out)] };
    let mut first_failure = None;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(rep) => {
                if !cli.quiet {
                    println!("== {} ==\n{}", rep.name, rep.summary.trim_end());
                    for f in &rep.files {
                        println!("wrote {}", f.display());
                    }
                }
                if let Some(e) = rep.failure {
                    log::error!("{}: {e} (partial output written)", rep.name);
                    first_failure.get_or_insert(e);
                }
            }
            Err(e) => {
                log::error!("{}: {e}", job.name());
                first_failure.get_or_insert(e);
            }
        }
    }
    Ok(first_failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) => ExitCode::from(e.category().exit_code() as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
