//! `ikf`: dataset generation, Monte Carlo runs, two-step checks and
//! mixing-coefficient estimation for interleaved KF least squares.

mod chart;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use interleave_kf::experiment::with_threads;
use interleave_kf::twostep::{self, UnbiasednessConfig, UnbiasednessOutcome};
use interleave_kf::synth::{export_dataset, load_dataset, DatasetManifest};
use interleave_kf::{estimate_alpha, run_monte_carlo, Error, MonteCarloReport, Scenario, SeedPlan};
use thiserror::Error;

use crate::chart::{line_chart, Series};
use crate::config::{CliConfig, OutputFormat};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("check failed")]
    CheckFailed,
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Io(_) => CliError::Io(e.to_string()),
            Error::Csv(c) if c.is_io_error() => CliError::Io(e.to_string()),
            Error::Json(_) => CliError::Io(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "ikf", version, about = "Interleaved Kalman-filter least squares experiments")]
struct Cli {
    /// JSON config file; every key optional
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = auto (overrides config)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path (directory for `generate`, CSV file for `run`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Monte Carlo iterations (overrides config)
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one iteration's bird, fish and penguin blocks as CSV plus a manifest
    Generate {
        #[arg(long, default_value_t = 0)]
        iteration: u64,
    },
    /// Run the Monte Carlo experiment and write per-step bias/MSE
    Run,
    /// Check the two-step closed form and the Monte Carlo unbiasedness bound
    CheckLemmas {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Use column scales that violate the isotropy precondition
        #[arg(long)]
        anisotropic: bool,
    },
    /// Grid-search the mixing coefficient on an exported dataset
    EstimateAlpha {
        /// Directory written by `generate`
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
}

fn resolve(cli: &Cli) -> Result<CliConfig, CliError> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(it) = cli.iterations {
        cfg.iterations = it;
    }
    Ok(cfg)
}

fn cmd_generate(cfg: &CliConfig, iteration: u64) -> Result<(), CliError> {
    let exp = cfg.experiment()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("dataset"));
    let (bird, fish) = exp.population_params()?;
    let data = exp.dataset(&bird, &fish, iteration)?;
    let manifest = DatasetManifest {
        q: exp.q,
        n: exp.n,
        m: exp.m,
        alpha: exp.alpha,
        mode: exp.penguin_mode,
        master_seed: exp.master_seed,
        iteration,
        penguin_noise_sd: exp.noise_sd,
        bird,
        fish,
        r_p: data.r_p.iter().copied().collect(),
    };
    export_dataset(&out, &manifest, &data).map_err(|e| match e {
        Error::Io(io) => io_err(&out, io),
        other => other.into(),
    })?;
    eprintln!("wrote {} blocks per group to {}", exp.m, out.display());
    Ok(())
}

fn chart_for(report: &MonteCarloReport, metric: &str) -> String {
    let styled = |s: Scenario| match s {
        Scenario::BirdsOnly => ("#d62728", false),
        Scenario::FishOnly => ("#ff7f0e", false),
        Scenario::PenguinOnly => ("#2ca02c", false),
        Scenario::InterleavedBirdFirst => ("#1f77b4", false),
        Scenario::InterleavedFishFirst => ("#1f77b4", true),
    };
    let mut scenarios: Vec<Scenario> = report.metrics.iter().map(|m| m.scenario).collect();
    scenarios.dedup();
    let series: Vec<Series> = scenarios
        .into_iter()
        .map(|s| {
            let (color, dashed) = styled(s);
            let points = report
                .series(s)
                .into_iter()
                .map(|m| (m.step as f64, if metric == "bias" { m.mean_bias } else { m.mean_mse }))
                .collect();
            Series { name: s.name().to_string(), color, dashed, points }
        })
        .collect();
    let (title, y) = if metric == "bias" {
        ("Mean bias per step", "mean bias")
    } else {
        ("Penguin test MSE per step", "mean MSE")
    };
    line_chart(title, "step", y, &series)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn cmd_run(cfg: &CliConfig) -> Result<(), CliError> {
    let exp = cfg.experiment()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results.csv"));
    let report = run_monte_carlo(&exp, cfg.threads)?;
    if cfg.format.csv() {
        write_file(&out, report.to_csv_string()?.as_bytes())?;
    }
    if cfg.format.svg() {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        for metric in ["bias", "mse"] {
            let path = out.with_file_name(format!("{stem}_{metric}.svg"));
            write_file(&path, chart_for(&report, metric).as_bytes())?;
        }
    }
    eprintln!(
        "{} iterations, {} failed, {} rows",
        report.iterations,
        report.n_failed,
        report.metrics.len()
    );
    Ok(())
}

fn cmd_check_lemmas(cfg: &CliConfig, trials: usize, anisotropic: bool) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let mut stdout = std::io::stdout().lock();
    let mut all_pass = true;

    let cf = with_threads(cfg.threads, || twostep::check_closed_form(SeedPlan::new(cfg.master_seed), trials))??;
    all_pass &= cf.pass;
    let _ = writeln!(
        stdout,
        "lemma-1 {} comparisons={} max_discrepancy={:.3e} tolerance={:e}",
        if cf.pass { "PASS" } else { "FAIL" },
        cf.comparisons,
        cf.max_discrepancy,
        twostep::CLOSED_FORM_TOLERANCE
    );

    let mut ub_cfg = UnbiasednessConfig {
        alpha: cfg.alpha,
        n: cfg.n,
        q: cfg.q,
        iterations: cfg.iterations,
        noise_sd: cfg.noise_sd,
        bird_column_sd: vec![cfg.feature_sd; cfg.q],
        fish_column_sd: vec![cfg.feature_sd; cfg.q],
        master_seed: cfg.master_seed,
    };
    if anisotropic {
        ub_cfg = ub_cfg.anisotropic();
    }
    match twostep::check_unbiasedness(&ub_cfg, cfg.threads)? {
        UnbiasednessOutcome::SkippedPrecondition(why) => {
            let _ = writeln!(stdout, "lemma-2 SKIPPED-precondition {why}");
        }
        UnbiasednessOutcome::Evaluated { max_abs_dev, bound, pass, .. } => {
            all_pass &= pass;
            let _ = writeln!(
                stdout,
                "lemma-2 {} iterations={} max_abs_dev={:.4e} bound={:.4e} ({}x max standard error)",
                if pass { "PASS" } else { "FAIL" },
                ub_cfg.iterations,
                max_abs_dev,
                bound,
                twostep::UNBIASED_SE_MULTIPLE
            );
        }
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}

fn cmd_estimate_alpha(cfg: &CliConfig, data: &Path, grid: usize) -> Result<(), CliError> {
    let (manifest, ds) = load_dataset(data).map_err(|e| match e {
        Error::Io(io) => io_err(data, io),
        other => CliError::Config(format!("{}: {other}", data.display())),
    })?;
    if grid < 2 {
        return Err(CliError::Config("--grid must be at least 2".into()));
    }
    let alpha = with_threads(cfg.threads, || estimate_alpha(&ds.birds, &ds.fish, &ds.penguin_train, grid))??;
    let json = serde_json::json!({
        "alpha_hat": alpha,
        "grid_size": grid,
        "manifest_alpha": manifest.alpha,
    });
    println!("{json}");
    if let Some(out) = &cfg.out {
        write_file(out, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| match &cli.command {
        Command::Generate { iteration } => cmd_generate(&cfg, *iteration),
        Command::Run => cmd_run(&cfg),
        Command::CheckLemmas { trials, anisotropic } => cmd_check_lemmas(&cfg, *trials, *anisotropic),
        Command::EstimateAlpha { data, grid } => cmd_estimate_alpha(&cfg, data, *grid),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::CheckFailed) {
                eprintln!("ikf: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
