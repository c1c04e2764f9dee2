//! Command-line front end: dataset generation, seeded experiment runs,
//! parameter sweeps, and the analytical-guarantee verification grids.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 data error,
//! 4 verification failure.

use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chagnn::experiment::{
    run_experiment, run_sweep, sweep_csv, ExperimentConfig, SweepParam,
};
use chagnn::io::save_dataset;
use chagnn::synth::{generate_synthetic, SyntheticSpec};
use chagnn::theory::{
    default_theorem1_grid, default_theorem2_grid, theorem1_check, theorem2_check,
};
use chagnn::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "chagnn",
    version,
    about = "Graph-robustness toolkit: injection attacks, pruning defense, guarantee checks"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset directory from a spec file.
    Synth {
        /// JSON file holding the generator spec.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded experiment; prints the result record and writes it out.
    Run {
        /// JSON experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Results file (default results.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured number of runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one experiment per swept value and emit a CSV table.
    Sweep {
        /// JSON experiment configuration with a "sweep" section.
        #[arg(long)]
        config: PathBuf,
        /// CSV file (default sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the loss-ratio identity and the penalty/benefit bound on the
    /// built-in grids; exit 0 only if every point passes.
    VerifyTheorems {
        /// Absolute tolerance for the loss-ratio identity.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// Monte Carlo samples per bound check.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional report file; the report always prints to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
struct SweepSection {
    param: SweepParam,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct SweepConfig {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    sweep: SweepSection,
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) => EXIT_CONFIG,
        Error::Format { .. } | Error::Io(_) => EXIT_DATA,
        Error::Degenerate(_) | Error::UndefinedRatio => EXIT_VERIFY,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        file: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = chagnn::configure_threads(jobs) {
            return fail(&e);
        }
    }
    match cli.cmd {
        Cmd::Synth { config, seed, out } => cmd_synth(&config, seed, &out),
        Cmd::Run {
            config,
            out,
            runs,
            seed,
        } => cmd_run(&config, out.as_deref(), runs, seed),
        Cmd::Sweep {
            config,
            out,
            runs,
            seed,
        } => cmd_sweep(&config, out.as_deref(), runs, seed),
        Cmd::VerifyTheorems {
            tolerance,
            samples,
            seed,
            out,
        } => cmd_verify(tolerance, samples, seed, out.as_deref()),
    }
}

fn cmd_synth(config: &Path, seed: u64, out: &Path) -> ExitCode {
    let spec: SyntheticSpec = match read_json(config) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let ds = match generate_synthetic(&spec, seed) {
        Ok(ds) => ds,
        Err(e) => return fail(&e),
    };
    if let Err(e) = save_dataset(&ds, out) {
        return fail(&e);
    }
    println!(
        "wrote {} nodes / {} edges to {}",
        ds.num_nodes(),
        ds.graph.num_edges(),
        out.display()
    );
    ExitCode::SUCCESS
}

fn apply_overrides(cfg: &mut ExperimentConfig, runs: Option<usize>, seed: Option<u64>) {
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
}

fn cmd_run(config: &Path, out: Option<&Path>, runs: Option<usize>, seed: Option<u64>) -> ExitCode {
    let mut cfg: ExperimentConfig = match read_json(config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    apply_overrides(&mut cfg, runs, seed);
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let json = match serde_json::to_string_pretty(&outcome.record) {
        Ok(j) => j + "\n",
        Err(e) => return fail(&Error::Input(format!("serializing results: {e}"))),
    };
    print!("{json}");
    let path = out.unwrap_or(Path::new("results.json"));
    if let Err(e) = fs::write(path, &json) {
        return fail(&e.into());
    }
    if !outcome.failures.is_empty() {
        for (idx, msg) in &outcome.failures {
            eprintln!("run {idx} failed: {msg}");
        }
        eprintln!(
            "{} of {} runs failed; partial results written to {}",
            outcome.failures.len(),
            cfg.runs,
            path.display()
        );
        return ExitCode::from(EXIT_DATA);
    }
    ExitCode::SUCCESS
}

fn cmd_sweep(
    config: &Path,
    out: Option<&Path>,
    runs: Option<usize>,
    seed: Option<u64>,
) -> ExitCode {
    let mut sweep: SweepConfig = match read_json(config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    apply_overrides(&mut sweep.experiment, runs, seed);
    let outcomes = match run_sweep(&sweep.experiment, sweep.sweep.param, &sweep.sweep.values) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let csv = sweep_csv(sweep.sweep.param, &sweep.sweep.values, &outcomes);
    print!("{csv}");
    let path = out.unwrap_or(Path::new("sweep.csv"));
    if let Err(e) = fs::write(path, &csv) {
        return fail(&e.into());
    }
    let failed: usize = outcomes.iter().map(|o| o.failures.len()).sum();
    if failed > 0 {
        eprintln!("{failed} runs failed across the sweep; partial table written");
        return ExitCode::from(EXIT_DATA);
    }
    ExitCode::SUCCESS
}

fn cmd_verify(tolerance: f64, samples: usize, seed: u64, out: Option<&Path>) -> ExitCode {
    if tolerance < 0.0 {
        eprintln!("error: --tolerance must be non-negative");
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut all_pass = true;
    let mut t1 = Vec::new();
    for sc in default_theorem1_grid() {
        let check = match theorem1_check(&sc, seed, tolerance) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        all_pass &= check.pass;
        let (l0, l1, l2, rm) = match &check.report {
            Some(r) => (Some(r.l0), Some(r.l1), Some(r.l2), Some(r.ratio_measured)),
            None => (None, None, None, None),
        };
        t1.push(serde_json::json!({
            "scenario": check.scenario,
            "L0": l0,
            "L1": l1,
            "L2": l2,
            "ratio_measured": rm,
            "ratio_closed": check.report.as_ref().map(|r| r.ratio_closed_form),
            "ratio_ba": check.report.as_ref().map(|r| r.ratio_ba),
            "degenerate": check.degenerate,
            "pass": check.pass,
        }));
    }
    let mut t2 = Vec::new();
    for (sc, p) in default_theorem2_grid() {
        let report = match theorem2_check(&sc, p, samples, seed) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        all_pass &= report.pass;
        t2.push(serde_json::json!({
            "p": report.accuracy,
            "bound": report.bound,
            "ratio_est": report.ratio_est,
            "p1_est": report.p1_est,
            "p2_est": report.p2_est,
            "pass": report.pass,
        }));
    }
    let report = serde_json::json!({
        "theorem1": t1,
        "theorem2": t2,
        "all_pass": all_pass,
    });
    let json = match serde_json::to_string_pretty(&report) {
        Ok(j) => j + "\n",
        Err(e) => return fail(&Error::Input(format!("serializing report: {e}"))),
    };
    print!("{json}");
    if let Some(path) = out {
        if let Err(e) = fs::write(path, &json) {
            return fail(&e.into());
        }
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("verification failed: see report");
        ExitCode::from(EXIT_VERIFY)
    }
}
