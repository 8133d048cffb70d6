//! Numerical checks of the two-step properties of the interleaved run.
//!
//! * The two-step estimate equals a weighted normal-equations solve
//!   ([`psi2_closed_form`]) exactly, in either order.
//! * Under isotropic, equal-scale features its Monte Carlo mean sits close
//!   to `r_p`. The property is first order only, so the check is a bound
//!   in units of the Monte Carlo standard error, not exact equality.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{mean_and_se, with_threads};
use crate::interleave::{
    center_block, psi2_closed_form, run_interleaved, Centering, InterleaveOrder, MixtureSpec,
};
use crate::lls::DataBlock;
use crate::synth::{gen_blocks, gen_population_params, PopulationSpec, SeedPlan, Stream};

pub const CLOSED_FORM_ALPHAS: [f64; 4] = [0.1, 0.25, 0.5, 0.9];
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;
pub const UNBIASED_SE_MULTIPLE: f64 = 4.0;

/// `‖a − b‖∞ / max(1, ‖b‖∞)`.
pub fn scaled_discrepancy(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Random raw block: shifted, column-scaled Gaussian features and
/// arbitrary Gaussian targets.
pub fn random_block<R: Rng>(rng: &mut R, n: usize, q: usize) -> Result<DataBlock> {
    let shift: f64 = 4.0 * rng.random::<f64>() - 2.0;
    let scales: Vec<f64> = (0..q).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect();
    let x = DMatrix::from_fn(n, q, |_, j| {
        shift + scales[j] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    });
    let y = DVector::from_fn(n, |_, _| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
    DataBlock::new(y, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormOutcome {
    /// Number of `(instance, order)` comparisons.
    pub comparisons: usize,
    pub max_discrepancy: f64,
    pub pass: bool,
}

/// Compares step 2 of the interleaved recursion with the closed form on
/// `trials` random instances, both orders, cycling `α` through
/// [`CLOSED_FORM_ALPHAS`].
pub fn check_closed_form(seed: SeedPlan, trials: usize) -> Result<ClosedFormOutcome> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    let mut max_discrepancy = 0.0_f64;
    let mut comparisons = 0;
    for t in 0..trials {
        let mut rng = seed.rng(Stream::Instances, t as u64);
        let q = rng.random_range(1..=8);
        let n = rng.random_range(q + 3..=q + 40);
        let bird = random_block(&mut rng, n, q)?;
        let n_fish = rng.random_range(q + 3..=q + 40);
        let fish = random_block(&mut rng, n_fish, q)?;
        let mix = MixtureSpec::new(CLOSED_FORM_ALPHAS[t % CLOSED_FORM_ALPHAS.len()])?;
        let (bc, fc) = (center_block(&bird)?, center_block(&fish)?);
        let closed = psi2_closed_form(bc.features(), bc.targets(), fc.features(), fc.targets(), mix)?;
        let psi0 = DVector::from_fn(q, |_, _| rng.random::<f64>() * 10.0 - 5.0);
        for order in [InterleaveOrder::BirdFirst, InterleaveOrder::FishFirst] {
            let traj = run_interleaved(std::slice::from_ref(&bird), std::slice::from_ref(&fish), mix, &psi0, order, Centering::Apply)?;
            max_discrepancy = max_discrepancy.max(scaled_discrepancy(&traj[1].psi, &closed));
            comparisons += 1;
        }
    }
    Ok(ClosedFormOutcome { comparisons, max_discrepancy, pass: max_discrepancy < CLOSED_FORM_TOLERANCE })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessConfig {
    pub alpha: f64,
    pub n: usize,
    pub q: usize,
    pub iterations: usize,
    pub noise_sd: f64,
    /// Per-column feature standard deviations, bird population.
    pub bird_column_sd: Vec<f64>,
    /// Per-column feature standard deviations, fish population.
    pub fish_column_sd: Vec<f64>,
    pub master_seed: u64,
}

impl Default for UnbiasednessConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            n: 100,
            q: 6,
            iterations: 5000,
            noise_sd: 1.0,
            bird_column_sd: vec![1.0; 6],
            fish_column_sd: vec![1.0; 6],
            master_seed: 42,
        }
    }
}

impl UnbiasednessConfig {
    /// Column scales that violate the equal-scale, isotropic precondition.
    pub fn anisotropic(mut self) -> Self {
        self.bird_column_sd = (0..self.q).map(|j| 1.0 + 0.5 * j as f64).collect();
        self.fish_column_sd = vec![1.0; self.q];
        self
    }

    /// The common feature scale `σ` when every column of both populations
    /// shares it.
    pub fn common_scale(&self) -> Option<f64> {
        let first = *self.bird_column_sd.first()?;
        let all = self.bird_column_sd.iter().chain(&self.fish_column_sd);
        let ok = self.bird_column_sd.len() == self.q
            && self.fish_column_sd.len() == self.q
            && first > 0.0
            && all.into_iter().all(|&s| s == first);
        ok.then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnbiasednessOutcome {
    SkippedPrecondition(String),
    Evaluated {
        r_p: DVector<f64>,
        mean_psi2: DVector<f64>,
        se_psi2: DVector<f64>,
        /// `‖mean(ψ₂) − r_p‖∞`.
        max_abs_dev: f64,
        /// `4 × max elementwise standard error`.
        bound: f64,
        pass: bool,
    },
}

/// Monte Carlo mean of the two-step estimate under mean-zero features.
pub fn check_unbiasedness(cfg: &UnbiasednessConfig, threads: usize) -> Result<UnbiasednessOutcome> {
    let Some(sigma) = cfg.common_scale() else {
        return Ok(UnbiasednessOutcome::SkippedPrecondition(
            "feature columns are not isotropic with a common scale".into(),
        ));
    };
    let mix = MixtureSpec::new(cfg.alpha)?;
    if cfg.iterations < 2 {
        return Err(Error::Domain("at least two iterations are needed for a standard error".into()));
    }
    let seed = SeedPlan::new(cfg.master_seed);
    let (b, f) = gen_population_params(cfg.q, seed)?;
    let bird = PopulationSpec::new(b.weights, 0.0, sigma, cfg.noise_sd)?;
    let fish = PopulationSpec::new(f.weights, 0.0, sigma, cfg.noise_sd)?;
    let r_p = bird.weights_vector() * mix.bird_weight() + fish.weights_vector() * mix.fish_weight();
    let psi0 = DVector::zeros(cfg.q);

    let draws: Vec<Result<DVector<f64>>> = with_threads(threads, || {
        (0..cfg.iterations as u64)
            .into_par_iter()
            .map(|it| {
                let u = gen_blocks(&bird, cfg.n, 1, seed, Stream::Bird, it)?;
                let v = gen_blocks(&fish, cfg.n, 1, seed, Stream::Fish, it)?;
                let traj = run_interleaved(&u, &v, mix, &psi0, InterleaveOrder::BirdFirst, Centering::Apply)?;
                Ok(traj[1].psi.clone())
            })
            .collect()
    })?;
    let draws: Vec<DVector<f64>> = draws.into_iter().collect::<Result<_>>()?;

    let mut mean_psi2 = DVector::zeros(cfg.q);
    let mut se_psi2 = DVector::zeros(cfg.q);
    for j in 0..cfg.q {
        let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let (m, se) = mean_and_se(&col);
        mean_psi2[j] = m;
        se_psi2[j] = se;
    }
    let max_abs_dev = (&mean_psi2 - &r_p).amax();
    let bound = UNBIASED_SE_MULTIPLE * se_psi2.max();
    Ok(UnbiasednessOutcome::Evaluated { pass: max_abs_dev <= bound, r_p, mean_psi2, se_psi2, max_abs_dev, bound })
}
