use std::path::{Path, PathBuf};

use interleave_kf::synth::PenguinMode;
use interleave_kf::{ExperimentConfig, Scenario};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Svg,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn svg(self) -> bool {
        matches!(self, OutputFormat::Svg | OutputFormat::Both)
    }
}

/// Contents of the `--config` JSON file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
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
    pub hold_out_test: bool,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// 0 = one worker per core.
    pub threads: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            alpha: e.alpha,
            n: e.n,
            q: e.q,
            m: e.m,
            iterations: e.iterations,
            noise_sd: e.noise_sd,
            feature_sd: e.feature_sd,
            master_seed: e.master_seed,
            penguin_mode: e.penguin_mode,
            scenarios: e.scenarios,
            hold_out_test: e.hold_out_test,
            out: None,
            format: OutputFormat::default(),
            threads: 0,
        }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let cfg = ExperimentConfig {
            alpha: self.alpha,
            n: self.n,
            q: self.q,
            m: self.m,
            iterations: self.iterations,
            noise_sd: self.noise_sd,
            feature_sd: self.feature_sd,
            master_seed: self.master_seed,
            penguin_mode: self.penguin_mode,
            scenarios: self.scenarios.clone(),
            hold_out_test: self.hold_out_test,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
