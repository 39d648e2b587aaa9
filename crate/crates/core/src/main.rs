use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stokes_lab::runner::{run, verify, ExperimentConfig, Kind, MANIFEST};

#[derive(Parser)]
#[command(name = "stokes-lab", version, about = "Run and verify Stokes observability experiments")]
struct Cli {
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stokes eigenmodes and the basis archive.
    Eigen(RunArgs),
    /// L² and L¹ spectral constants on a mask.
    Spectral(RunArgs),
    /// Telescoped observability constant and dual null control.
    Observe(RunArgs),
    /// Relaxed optimal sensor shape.
    Shape(RunArgs),
    /// Minimal-time bang-bang control.
    Timeopt(RunArgs),
    /// Re-check the outputs listed in a manifest (or a run directory).
    Verify {
        #[arg(long, alias = "manifest")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(kind: Kind, a: RunArgs) -> stokes_lab::Result<bool> {
    let config = ExperimentConfig::load(&a.config)?.resolve(kind, a.seed, a.out)?;
    let manifest = run(&config)?;
    let dir = config.out.expect("resolved");
    println!("{}", dir.join(MANIFEST).display());
    for f in &manifest.files {
        println!("  {} {}", &f.sha256[..16], f.name);
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.cmd {
        Cmd::Eigen(a) => execute(Kind::Eigen, a),
        Cmd::Spectral(a) => execute(Kind::Spectral, a),
        Cmd::Observe(a) => execute(Kind::Observe, a),
        Cmd::Shape(a) => execute(Kind::Shape, a),
        Cmd::Timeopt(a) => execute(Kind::Timeopt, a),
        Cmd::Verify { config, out, seed: _ } => {
            let path = match (config, out) {
                (Some(p), _) if p.is_file() => p,
                (Some(p), _) | (None, Some(p)) => p.join(MANIFEST),
                (None, None) => {
                    eprintln!("error: give --config MANIFEST or --out DIR");
                    return ExitCode::FAILURE;
                }
            };
            verify(&path).map(|v| {
                for c in &v.checks {
                    println!("{} {} ({})", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
                }
                v.passed()
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
