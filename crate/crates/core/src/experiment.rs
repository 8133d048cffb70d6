//! Monte Carlo comparison of the five training scenarios.
//!
//! Each iteration draws fresh bird, fish and penguin blocks (population
//! parameters are drawn once and shared), trains every scenario, and
//! records per-step signed bias against `r_p` and prediction MSE on the
//! penguin test blocks. Iteration results are reduced in index order, so
//! the aggregate is bit-identical for any thread count.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interleave::{
    center_blocks, prediction_mse, run_interleaved, Centering, InterleaveOrder, MixtureSpec,
};
use crate::lls::{run_blocks_from_zero, DataBlock};
use crate::synth::{
    gen_population_params, generate_dataset, BlockShape, Dataset, PenguinMode, PenguinRule,
    PopulationSpec, SeedPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    BirdsOnly,
    FishOnly,
    PenguinOnly,
    InterleavedBirdFirst,
    InterleavedFishFirst,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::BirdsOnly,
        Scenario::FishOnly,
        Scenario::PenguinOnly,
        Scenario::InterleavedBirdFirst,
        Scenario::InterleavedFishFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::BirdsOnly => "birds_only",
            Scenario::FishOnly => "fish_only",
            Scenario::PenguinOnly => "penguin_only",
            Scenario::InterleavedBirdFirst => "interleaved_bird_first",
            Scenario::InterleavedFishFirst => "interleaved_fish_first",
        }
    }

    pub fn is_interleaved(self) -> bool {
        matches!(self, Scenario::InterleavedBirdFirst | Scenario::InterleavedFishFirst)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub iterations: usize,
    pub noise_sd: f64,
    pub feature_sd: f64,
    pub master_seed: u64,
    pub penguin_mode: PenguinMode,
    pub scenarios: Vec<Scenario>,
    /// Score MSE on a freshly drawn penguin test set rather than on the
    /// penguin training blocks.
    pub hold_out_test: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            n: 100,
            q: 6,
            m: 6,
            iterations: 5000,
            noise_sd: 1.0,
            feature_sd: 1.0,
            master_seed: 42,
            penguin_mode: PenguinMode::ConvexCombination,
            scenarios: Scenario::ALL.to_vec(),
            hold_out_test: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        MixtureSpec::new(self.alpha)?;
        if self.m < 2 || !self.m.is_multiple_of(2) {
            return Err(Error::InvalidSchedule(self.m));
        }
        if self.n == 0 || self.q == 0 || self.iterations == 0 {
            return Err(Error::Domain("n, q and iterations must be at least 1".into()));
        }
        if !(self.feature_sd > 0.0) || !(self.noise_sd >= 0.0) {
            return Err(Error::Domain("feature_sd must be > 0 and noise_sd >= 0".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::EmptyInput("no scenarios configured"));
        }
        Ok(())
    }

    pub fn mix(&self) -> Result<MixtureSpec> {
        MixtureSpec::new(self.alpha)
    }

    pub fn penguin_rule(&self) -> Result<PenguinRule> {
        Ok(PenguinRule { mode: self.penguin_mode, mix: self.mix()? })
    }

    pub fn shape(&self) -> BlockShape {
        BlockShape { n: self.n, q: self.q, m: self.m }
    }

    pub fn seed(&self) -> SeedPlan {
        SeedPlan::new(self.master_seed)
    }

    /// Bird and fish parameters for this experiment, fixed across iterations.
    pub fn population_params(&self) -> Result<(PopulationSpec, PopulationSpec)> {
        let (bird, fish) = gen_population_params(self.q, self.seed())?;
        Ok((
            bird.with_scales(self.feature_sd, self.noise_sd)?,
            fish.with_scales(self.feature_sd, self.noise_sd)?,
        ))
    }

    /// Data for one iteration.
    pub fn dataset(&self, bird: &PopulationSpec, fish: &PopulationSpec, iteration: u64) -> Result<Dataset> {
        generate_dataset(
            bird,
            fish,
            self.shape(),
            self.penguin_rule()?,
            self.noise_sd,
            self.seed(),
            iteration,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub scenario: Scenario,
    /// 1-based.
    pub step: usize,
    pub mean_bias: f64,
    pub se_bias: f64,
    pub mean_mse: f64,
    pub se_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub metrics: Vec<StepMetrics>,
    pub iterations: usize,
    pub n_failed: usize,
}

impl MonteCarloReport {
    pub fn get(&self, scenario: Scenario, step: usize) -> Option<&StepMetrics> {
        self.metrics.iter().find(|s| s.scenario == scenario && s.step == step)
    }

    pub fn series(&self, scenario: Scenario) -> Vec<&StepMetrics> {
        self.metrics.iter().filter(|s| s.scenario == scenario).collect()
    }

    /// `scenario,step,mean_bias,se_bias,mean_mse,se_mse,n_failed`, rows in
    /// scenario order then step order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "step", "mean_bias", "se_bias", "mean_mse", "se_mse", "n_failed"])?;
        for s in &self.metrics {
            w.write_record([
                s.scenario.name().to_string(),
                s.step.to_string(),
                s.mean_bias.to_string(),
                s.se_bias.to_string(),
                s.mean_mse.to_string(),
                s.se_mse.to_string(),
                self.n_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}

/// Signed mean over coordinates of `psi − r_p`.
pub fn bias_metric(psi: &DVector<f64>, r_p: &DVector<f64>) -> Result<f64> {
    if psi.len() != r_p.len() || psi.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "estimate length {} vs truth length {}",
            psi.len(),
            r_p.len()
        )));
    }
    Ok((psi - r_p).mean())
}

/// `Σ ‖pᵢ − Zᵢ psi‖² / Σ nᵢ` over the (already centered) test blocks.
pub fn mse_metric(psi: &DVector<f64>, penguin_test: &[DataBlock]) -> Result<f64> {
    prediction_mse(psi, penguin_test)
}

/// Per-step estimates for one scenario on one iteration's data.
pub fn run_scenario(scenario: Scenario, data: &Dataset, config: &ExperimentConfig) -> Result<Vec<DVector<f64>>> {
    let traj = match scenario {
        Scenario::BirdsOnly => run_blocks_from_zero(&center_blocks(&data.birds)?)?,
        Scenario::FishOnly => run_blocks_from_zero(&center_blocks(&data.fish)?)?,
        Scenario::PenguinOnly => run_blocks_from_zero(&center_blocks(&data.penguin_train)?)?,
        Scenario::InterleavedBirdFirst | Scenario::InterleavedFishFirst => {
            let k = config.m / 2;
            if data.birds.len() < k || data.fish.len() < k {
                return Err(Error::EmptyInput("fewer than m/2 bird or fish blocks"));
            }
            let order = if scenario == Scenario::InterleavedBirdFirst {
                InterleaveOrder::BirdFirst
            } else {
                InterleaveOrder::FishFirst
            };
            run_interleaved(
                &data.birds[..k],
                &data.fish[..k],
                config.mix()?,
                &DVector::zeros(data.r_p.len()),
                order,
                Centering::Apply,
            )?
        }
    };
    Ok(traj.into_iter().map(|s| s.psi).collect())
}

/// `(bias, mse)` per configured scenario, per step.
type IterationMetrics = Vec<Vec<(f64, f64)>>;

fn run_iteration(
    config: &ExperimentConfig,
    bird: &PopulationSpec,
    fish: &PopulationSpec,
    iteration: u64,
) -> Result<IterationMetrics> {
    let data = config.dataset(bird, fish, iteration)?;
    let test = if config.hold_out_test { &data.penguin_test } else { &data.penguin_train };
    let test = center_blocks(test)?;
    config
        .scenarios
        .iter()
        .map(|&scenario| {
            run_scenario(scenario, &data, config)?
                .iter()
                .map(|psi| Ok((bias_metric(psi, &data.r_p)?, mse_metric(psi, &test)?)))
                .collect()
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers, or on rayon's global
/// pool when `threads == 0`.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Sample mean and standard error of the mean (0 for a single sample).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Full experiment with population parameters drawn from the config seed.
pub fn run_monte_carlo(config: &ExperimentConfig, threads: usize) -> Result<MonteCarloReport> {
    config.validate()?;
    let (bird, fish) = config.population_params()?;
    run_monte_carlo_with(config, &bird, &fish, threads)
}

/// Full experiment with caller-supplied population parameters.
pub fn run_monte_carlo_with(
    config: &ExperimentConfig,
    bird: &PopulationSpec,
    fish: &PopulationSpec,
    threads: usize,
) -> Result<MonteCarloReport> {
    config.validate()?;
    let outcomes: Vec<Result<IterationMetrics>> = with_threads(threads, || {
        (0..config.iterations as u64)
            .into_par_iter()
            .map(|it| run_iteration(config, bird, fish, it))
            .collect()
    })?;

    let n_failed = outcomes.iter().filter(|o| o.is_err()).count();
    if n_failed * 100 > config.iterations {
        return Err(Error::DataQuality { failed: n_failed, total: config.iterations });
    }
    let ok: Vec<&IterationMetrics> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    if ok.is_empty() {
        return Err(Error::DataQuality { failed: n_failed, total: config.iterations });
    }

    let mut metrics = Vec::with_capacity(config.scenarios.len() * config.m);
    let mut order: Vec<(usize, Scenario)> = config.scenarios.iter().copied().enumerate().collect();
    order.sort_by_key(|&(_, s)| s);
    order.dedup_by_key(|&mut (_, s)| s);
    for (si, scenario) in order {
        for step in 0..config.m {
            let biases: Vec<f64> = ok.iter().map(|it| it[si][step].0).collect();
            let mses: Vec<f64> = ok.iter().map(|it| it[si][step].1).collect();
            let (mean_bias, se_bias) = mean_and_se(&biases);
            let (mean_mse, se_mse) = mean_and_se(&mses);
            metrics.push(StepMetrics { scenario, step: step + 1, mean_bias, se_bias, mean_mse, se_mse });
        }
    }
    Ok(MonteCarloReport { metrics, iterations: config.iterations, n_failed })
}
