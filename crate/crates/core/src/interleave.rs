//! Interleaved training over two source populations.
//!
//! Given `k` "bird" blocks `(bᵢ, Uᵢ)` and `k` "fish" blocks `(fᵢ, Vᵢ)`, every
//! block is centered by its own column means, bird blocks are scaled by
//! `√α` and fish blocks by `√(1−α)`, and the recursion then alternates
//! bird, fish, bird, fish, … (or the reverse). The result targets the
//! mixed population whose features and weights are `α`-convex
//! combinations of the two parents.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lls::{batch_lls, run_blocks, DataBlock, FilterState};

/// Mixing coefficient `α ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MixtureSpec(f64);

impl MixtureSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha = {alpha} is outside [0, 1]")));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// Weight applied to the bird population.
    pub fn bird_weight(self) -> f64 {
        self.0
    }

    /// Weight applied to the fish population.
    pub fn fish_weight(self) -> f64 {
        1.0 - self.0
    }

    /// `α ∈ {0, 1}`: one population gets zero weight and, if it leads the
    /// schedule, the first update is singular.
    pub fn is_degenerate(self) -> bool {
        self.0 == 0.0 || self.0 == 1.0
    }
}

impl TryFrom<f64> for MixtureSpec {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<MixtureSpec> for f64 {
    fn from(m: MixtureSpec) -> f64 {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Bird,
    Fish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterleaveOrder {
    #[default]
    BirdFirst,
    FishFirst,
}

/// Whether [`run_interleaved`] should center its inputs first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    #[default]
    Apply,
    /// Inputs are already centered.
    Skip,
}

/// Subtracts each block's own column means from its targets and features.
pub fn center_blocks(blocks: &[DataBlock]) -> Result<Vec<DataBlock>> {
    blocks.iter().map(center_block).collect()
}

pub fn center_block(block: &DataBlock) -> Result<DataBlock> {
    let n = block.rows() as f64;
    let y = block.targets();
    let y_mean = y.sum() / n;
    let targets = y.map(|v| v - y_mean);
    let mut features = block.features().clone();
    for mut col in features.column_iter_mut() {
        let mean = col.sum() / n;
        col.apply(|v| *v -= mean);
    }
    DataBlock::new(targets, features)
}

/// Multiplies every entry by `√weight`, so the block's Gram matrix and
/// cross-moment are multiplied by `weight`.
pub fn scale_block(block: &DataBlock, weight: f64) -> Result<DataBlock> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::Domain(format!("block weight {weight} is outside [0, 1]")));
    }
    let s = weight.sqrt();
    DataBlock::new(block.targets() * s, block.features() * s)
}

/// The alternating schedule as `(population, 1-based block index)` pairs.
pub fn interleave_schedule(m: usize, order: InterleaveOrder) -> Result<Vec<(Population, usize)>> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::InvalidSchedule(m));
    }
    let (first, second) = match order {
        InterleaveOrder::BirdFirst => (Population::Bird, Population::Fish),
        InterleaveOrder::FishFirst => (Population::Fish, Population::Bird),
    };
    Ok((1..=m / 2).flat_map(|i| [(first, i), (second, i)]).collect())
}

fn check_pair(birds: &[DataBlock], fish: &[DataBlock]) -> Result<()> {
    if birds.is_empty() {
        return Err(Error::EmptyInput("no bird blocks"));
    }
    if birds.len() != fish.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} bird blocks but {} fish blocks",
            birds.len(),
            fish.len()
        )));
    }
    Ok(())
}

/// The centered, scaled, scheduled block sequence the interleaved run
/// feeds to the recursion.
pub fn interleaved_sequence(
    birds: &[DataBlock],
    fish: &[DataBlock],
    mix: MixtureSpec,
    order: InterleaveOrder,
    centering: Centering,
) -> Result<Vec<DataBlock>> {
    check_pair(birds, fish)?;
    let prepare = |blocks: &[DataBlock], weight: f64| -> Result<Vec<DataBlock>> {
        blocks
            .iter()
            .map(|b| match centering {
                Centering::Apply => scale_block(&center_block(b)?, weight),
                Centering::Skip => scale_block(b, weight),
            })
            .collect()
    };
    let birds = prepare(birds, mix.bird_weight())?;
    let fish = prepare(fish, mix.fish_weight())?;
    Ok(interleave_schedule(2 * birds.len(), order)?
        .into_iter()
        .map(|(pop, i)| match pop {
            Population::Bird => birds[i - 1].clone(),
            Population::Fish => fish[i - 1].clone(),
        })
        .collect())
}

/// Runs the interleaved recursion for `m = 2k` steps.
pub fn run_interleaved(
    birds: &[DataBlock],
    fish: &[DataBlock],
    mix: MixtureSpec,
    psi0: &DVector<f64>,
    order: InterleaveOrder,
    centering: Centering,
) -> Result<Vec<FilterState>> {
    let sequence = interleaved_sequence(birds, fish, mix, order, centering)?;
    run_blocks(psi0, &sequence)
}

/// Two-step estimate in closed form:
/// `(α U₁ᵗU₁ + (1−α) V₁ᵗV₁)⁻¹ (α U₁ᵗb₁ + (1−α) V₁ᵗf₁)`.
///
/// Inputs are expected to be centered already.
pub fn psi2_closed_form(
    u1: &DMatrix<f64>,
    b1: &DVector<f64>,
    v1: &DMatrix<f64>,
    f1: &DVector<f64>,
    mix: MixtureSpec,
) -> Result<DVector<f64>> {
    if u1.ncols() != v1.ncols() || u1.nrows() != b1.len() || v1.nrows() != f1.len() {
        return Err(Error::DimensionMismatch(format!(
            "U1 {:?}, b1 {}, V1 {:?}, f1 {}",
            u1.shape(),
            b1.len(),
            v1.shape(),
            f1.len()
        )));
    }
    let (a, c) = (mix.bird_weight(), mix.fish_weight());
    let normal = u1.transpose() * u1 * a + v1.transpose() * v1 * c;
    let rhs = u1.transpose() * b1 * a + v1.transpose() * f1 * c;
    let normal = (&normal + normal.transpose()) * 0.5;
    nalgebra::Cholesky::new(normal).map(|ch| ch.solve(&rhs)).ok_or(Error::SingularSystem)
}

/// Mean squared prediction error of `psi` over `blocks`, normalized by the
/// total row count.
pub fn prediction_mse(psi: &DVector<f64>, blocks: &[DataBlock]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput("no evaluation blocks"));
    }
    let mut sse = 0.0;
    let mut rows = 0usize;
    for b in blocks {
        if b.cols() != psi.len() {
            return Err(Error::DimensionMismatch(format!(
                "block width {} vs estimate length {}",
                b.cols(),
                psi.len()
            )));
        }
        sse += b.residual(psi).norm_squared();
        rows += b.rows();
    }
    Ok(sse / rows as f64)
}

/// Grid-search estimate of `α`.
///
/// Each candidate on `{0, 1/(g−1), …, 1}` trains the interleaved recursion
/// and is scored by prediction MSE on the centered validation blocks. The
/// argmin is returned; ties go to the smaller `α`. The schedule leads with
/// whichever population carries more weight, so the boundary candidates
/// stay well-posed (the final estimate does not depend on the order).
pub fn estimate_alpha(
    birds: &[DataBlock],
    fish: &[DataBlock],
    validation: &[DataBlock],
    grid_size: usize,
) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::Domain(format!("grid_size = {grid_size} must be at least 2")));
    }
    if validation.is_empty() {
        return Err(Error::EmptyInput("no validation blocks"));
    }
    check_pair(birds, fish)?;
    let validation = center_blocks(validation)?;
    let q = birds[0].cols();
    let psi0 = DVector::zeros(q);

    let scores: Vec<Option<f64>> = (0..grid_size)
        .into_par_iter()
        .map(|i| {
            let alpha = grid_point(i, grid_size);
            let order = if alpha >= 0.5 {
                InterleaveOrder::BirdFirst
            } else {
                InterleaveOrder::FishFirst
            };
            let mix = MixtureSpec::new(alpha).ok()?;
            let traj = run_interleaved(birds, fish, mix, &psi0, order, Centering::Apply).ok()?;
            let psi = &traj.last()?.psi;
            prediction_mse(psi, &validation).ok().filter(|s| s.is_finite())
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for (i, score) in scores.into_iter().enumerate() {
        let Some(score) = score else { continue };
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, grid_point(i, grid_size)));
        }
    }
    best.map(|(_, alpha)| alpha).ok_or(Error::EstimationFailed)
}

fn grid_point(i: usize, grid_size: usize) -> f64 {
    i as f64 / (grid_size - 1) as f64
}

/// Weighted batch solution the interleaved run must converge to.
pub fn interleaved_batch_oracle(
    birds: &[DataBlock],
    fish: &[DataBlock],
    mix: MixtureSpec,
) -> Result<DVector<f64>> {
    let seq = interleaved_sequence(birds, fish, mix, InterleaveOrder::BirdFirst, Centering::Apply)?;
    batch_lls(&seq)
}
