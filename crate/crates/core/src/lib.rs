//! Kalman-filter recursion for block linear least squares and its
//! interleaved two-population variant, with a seeded synthetic-data
//! generator and a Monte Carlo harness for bias and prediction error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod interleave;
pub mod linalg;
pub mod lls;
pub mod synth;
pub mod twostep;

pub use error::{Error, Result};
pub use experiment::{
    bias_metric, mse_metric, run_monte_carlo, run_scenario, ExperimentConfig, MonteCarloReport,
    Scenario, StepMetrics,
};
pub use interleave::{
    center_blocks, estimate_alpha, interleave_schedule, psi2_closed_form, run_interleaved,
    scale_block, Centering, InterleaveOrder, MixtureSpec, Population,
};
pub use lls::{batch_lls, cost, init_state, kf_step, run_blocks, DataBlock, FilterState};
pub use synth::{
    gen_blocks, gen_penguin, gen_population_params, PenguinMode, PenguinRule, PopulationSpec,
    SeedPlan, Stream,
};
