//! Batch front end: run experiment grids, solve partition instances,
//! verify candidate policies, and re-aggregate run directories.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use bae_cli::exit_codes;
use bae_cli::instance::SolveInstance;
use bae_cli::verifyspec::{parse_verify_job, run_verify};
use bae_cli::{config::ExperimentConfig, report, runner};
use bae_core::{Rng, Stream};
use bae_theory::{brute_force_oracle, solve};

#[derive(Parser)]
#[command(name = "bae", about = "Supervised-autoencoder experiment toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for runs/, summary.csv, summary.json, tables.md.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seed override.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads across runs (results are deterministic either way).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Use the full 20-seed protocol (seeds 0..19).
    #[arg(long, default_value_t = false)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulated-regression grid.
    Simulate(GridArgs),
    /// Run the image-classification grid (IDX files).
    Images(GridArgs),
    /// Solve one K-finite partition instance.
    Solve {
        /// Instance file (JSON: W, sample, K, options).
        #[arg(long)]
        config: PathBuf,
        /// Cross-check against the exhaustive oracle (small instances).
        #[arg(long, default_value_t = false)]
        oracle: bool,
        /// Master seed for restarts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify a candidate policy against the structural certificate.
    Verify {
        /// Verification job file (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-aggregate a completed run directory.
    Report {
        /// Directory previously produced by simulate/images.
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn effective_seeds(cfg: &ExperimentConfig, args: &GridArgs) -> Vec<u64> {
    if args.paper_scale {
        return (0..20).collect();
    }
    match &args.seeds {
        Some(s) if !s.is_empty() => s.clone(),
        _ => cfg.seeds.clone(),
    }
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("BAE_DATA_DIR").map(PathBuf::from)
}

fn run_grid(args: &GridArgs, expect_images: bool) -> Result<i32> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return Ok(exit_codes::VALIDATION);
        }
    };
    let is_images = matches!(cfg.dataset, bae_cli::config::DatasetConfig::Idx { .. });
    if is_images != expect_images {
        eprintln!(
            "config dataset kind does not match the subcommand (use `{}`)",
            if is_images { "images" } else { "simulate" }
        );
        return Ok(exit_codes::VALIDATION);
    }
    let seeds = effective_seeds(&cfg, args);
    let summary = runner::run_experiment(&cfg, &seeds, &args.out, args.jobs.max(1), data_dir().as_deref())?;
    for a in &summary.aggregates {
        let mean = a.mean.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
        let std = a.std.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:<18} {} runs  mean {} ± {}  failures {}",
            a.grid, a.algorithm, a.runs, mean, std, a.failures
        );
    }
    println!("artifacts written to {}", args.out.display());
    Ok(exit_codes::OK)
}

fn run_solve(config: &PathBuf, oracle: bool, seed: u64) -> Result<i32> {
    let text = fs::read_to_string(config)?;
    let inst = match SolveInstance::from_json(&text) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("instance error: {e:#}");
            return Ok(exit_codes::VALIDATION);
        }
    };
    let w = inst.w.build()?;
    let sample = inst.sample.build()?;
    let opts = inst.solve_options()?;
    let mut rng = Rng::with_stream(seed, Stream::Solver);
    let policy = solve(&w, &sample, &opts, &mut rng)?;

    println!("objective {:.12}", policy.objective);
    for (k, (point, size)) in policy
        .actions
        .points()
        .iter()
        .zip(&policy.cell_sizes)
        .enumerate()
    {
        println!(
            "action {k}: {:?}  (cell size {size})",
            point.iter().map(|v| (v * 1e9).round() / 1e9).collect::<Vec<_>>()
        );
    }
    if policy.k_reduced {
        println!("note: effective K reduced from the requested {}", inst.k);
    }
    if policy.tied_optimum {
        println!("note: multiple action sets tie at the optimum");
    }
    if !policy.bregman_consistent {
        println!("note: optimum is not a fixed point of the first-order assignment rule");
    }

    if oracle {
        let exact = brute_force_oracle(&w, &sample, inst.k)?;
        let gap = (exact.objective - policy.objective).abs();
        println!("oracle objective {:.12} (gap {gap:.3e})", exact.objective);
        if gap > 1e-9 {
            eprintln!("solver missed the exhaustive optimum");
            return Ok(exit_codes::VERIFICATION);
        }
    }
    Ok(exit_codes::OK)
}

fn run_verify_cmd(config: &PathBuf) -> Result<i32> {
    let text = fs::read_to_string(config)?;
    let job = match parse_verify_job(&text) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("verify job error: {e:#}");
            return Ok(exit_codes::VALIDATION);
        }
    };
    let outcome = run_verify(&job)?;
    for (name, ok, detail) in &outcome.lines {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    Ok(if outcome.all_ok {
        exit_codes::OK
    } else {
        exit_codes::VERIFICATION
    })
}

fn run_report(run_dir: &PathBuf) -> Result<i32> {
    let summary = report::reaggregate(run_dir)?;
    println!(
        "re-aggregated {} runs into {} rows; summary.csv/tables.md rewritten",
        summary.per_run.len(),
        summary.aggregates.len()
    );
    Ok(exit_codes::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => run_grid(args, false),
        Command::Images(args) => run_grid(args, true),
        Command::Solve { config, oracle, seed } => run_solve(config, *oracle, *seed),
        Command::Verify { config } => run_verify_cmd(config),
        Command::Report { run_dir } => run_report(run_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_codes::RUNTIME as u8)
        }
    }
}
