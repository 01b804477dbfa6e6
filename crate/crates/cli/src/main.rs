use akq_cli::report::{preflight, RunReport};
use akq_cli::suites::run_all;
use akq_cli::{Engine, RunConfig, SpectraCache};
use anyhow::Context;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Almost-Kähler and spin-c quantization experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every suite of a TOML config; exits nonzero iff a suite fails.
    Run { config: PathBuf },
    /// List the entries of a spectra cache directory.
    InspectCache { dir: PathBuf },
    /// Print the summary of a finished run directory.
    Report { run_dir: PathBuf },
}

fn run(config: PathBuf) -> anyhow::Result<bool> {
    let cfg = RunConfig::load(&config)?;
    preflight(&cfg.run.output).with_context(|| format!("output directory {} is not writable", cfg.run.output.display()))?;
    let engine = Engine::from_config(&cfg)?;
    let report = run_all(&engine, &cfg)?;
    report.write(&cfg.run.output)?;
    print!("{}", report.summary());
    if let Some(s) = report.timing.speedup {
        println!("wall time {:.2}s, {:.1}x faster than the previous run", report.timing.wall_seconds, s);
    }
    Ok(report.passed)
}

fn inspect(dir: PathBuf) -> anyhow::Result<bool> {
    let cache = SpectraCache::open(&dir)?;
    let mut clean = true;
    for (path, entry) in cache.scan()? {
        let file = path.file_name().unwrap_or_default().to_string_lossy();
        match entry {
            Ok(e) => println!(
                "{file}  {} {} k={} pairs={} rows={} converged={} code={}",
                e.meta.backend,
                e.meta.operator,
                e.k,
                e.cols(),
                e.rows,
                e.meta.converged,
                e.meta.code_version
            ),
            Err(e) => {
                clean = false;
                println!("{file}  unreadable: {e}");
            }
        }
    }
    Ok(clean)
}

fn report(dir: PathBuf) -> anyhow::Result<bool> {
    let r = RunReport::read(&dir)?;
    print!("{}", r.summary());
    anyhow::ensure!(r.consistent(), "report flags disagree with its rows");
    Ok(r.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => run(config),
        Command::InspectCache { dir } => inspect(dir),
        Command::Report { run_dir } => report(run_dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
