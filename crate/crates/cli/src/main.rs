use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jch_core::experiments::{
    output::{write_checksums, write_summary, CHECKSUM_FILE},
    run_experiment_with, run_sweep, verify_checksums, write_result, Comparison, ExperimentConfig, RunOptions,
};

#[derive(Parser)]
#[command(name = "jchlens", version, about = "Run JCH lattice lens experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Propagator tolerance, overriding the config.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Allow long-running full-scale configs.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run every point of the config's sweep axis.
    Sweep { config: PathBuf },
    /// Print the summary of a result directory and verify its checksums.
    Report { dir: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> jch_core::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(t) = cli.tol {
        cfg.tolerances.propagator = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn options(cli: &Cli) -> RunOptions {
    RunOptions { allow_paper_scale: cli.paper_scale, keep_snapshots: true }
}

fn print_rows(rows: &[Comparison]) {
    for c in rows {
        let verdict = match c.pass() {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "info",
        };
        println!(
            "{verdict:4}  {:<32} predicted {:>14.6e}  measured {:>14.6e}  discrepancy {:>12.4e}",
            c.quantity, c.predicted, c.measured, c.discrepancy
        );
    }
}

fn run(cli: &Cli, path: &Path) -> jch_core::Result<bool> {
    let cfg = load(cli, path)?;
    log::info!("running {} from {}", cfg.experiment.name(), path.display());
    let result = run_experiment_with(&cfg, &options(cli))?;
    let files = write_result(&result, &cli.out)?;
    print_rows(&result.comparisons);
    println!("wrote {} files to {}", files.len(), cli.out.display());
    Ok(result.comparisons.iter().all(|c| c.pass() != Some(false)))
}

fn sweep(cli: &Cli, path: &Path) -> jch_core::Result<bool> {
    let cfg = load(cli, path)?;
    let points = run_sweep(&cfg, &options(cli))?;
    let axis = cfg.sweep.as_ref().map(|s| s.parameter.clone()).unwrap_or_default();
    fs::create_dir_all(&cli.out)?;
    let mut files = Vec::new();
    let mut merged = Vec::new();
    let mut ok = true;
    for p in &points {
        let dir = cli.out.join(format!("point_{:03}", p.index));
        let written = write_result(&p.result, &dir)?;
        files.extend(written);
        for c in &p.result.comparisons {
            ok &= c.pass() != Some(false);
            merged.push(Comparison { quantity: format!("{}[{}={}]", c.quantity, axis, p.value), ..c.clone() });
        }
    }
    let summary = cli.out.join("summary.tsv");
    let mut w = std::io::BufWriter::new(fs::File::create(&summary)?);
    write_summary(&mut w, &merged)?;
    w.flush()?;
    files.push(summary);
    write_checksums(&cli.out, &files, &cli.out.join(CHECKSUM_FILE))?;
    print_rows(&merged);
    println!("wrote {} sweep points to {}", points.len(), cli.out.display());
    Ok(ok)
}

fn report(dir: &Path) -> jch_core::Result<bool> {
    let summary = fs::read_to_string(dir.join("summary.tsv"))?;
    print!("{summary}");
    let bad = verify_checksums(dir)?;
    if bad.is_empty() {
        println!("checksums ok");
    } else {
        for b in &bad {
            println!("checksum mismatch: {b}");
        }
    }
    Ok(bad.is_empty() && !summary.lines().skip(1).any(|l| l.ends_with("\tno")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = jch_core::set_threads(n) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Sweep { config } => sweep(&cli, config),
        Command::Report { dir } => report(dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
