//! Kalman-filter recursion for block linear least squares.
//!
//! Minimizes `C(r) = Σᵢ ‖yᵢ − Xᵢ r‖²` one data block at a time:
//!
//! ```text
//! Hᵢ = Hᵢ₋₁ + XᵢᵗXᵢ
//! ψᵢ = ψᵢ₋₁ + Hᵢ⁻¹ Xᵢᵗ (yᵢ − Xᵢ ψᵢ₋₁)
//! ```
//!
//! starting from `H₀ = 0` and an arbitrary `ψ₀`. Because `H₀` is zero the
//! starting vector is forgotten after the first step, and the final iterate
//! equals the batch minimizer of `C`. [`batch_lls`] computes that minimizer
//! through a separate factorization so the two can be checked against each
//! other.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cross, gram, SpdFactor, PIVOT_RATIO};

/// One `(targets, features)` pair: an `n`-vector and an `n × q` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    targets: DVector<f64>,
    features: DMatrix<f64>,
}

impl DataBlock {
    pub fn new(targets: DVector<f64>, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::EmptyInput("data block needs n >= 1 rows and q >= 1 columns"));
        }
        if targets.len() != features.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {} feature rows",
                targets.len(),
                features.nrows()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("block targets"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("block features"));
        }
        Ok(Self { targets, features })
    }

    /// Builds a block from row-major feature data.
    pub fn from_rows(targets: &[f64], features: &[f64], q: usize) -> Result<Self> {
        if q == 0 || features.len() != targets.len() * q {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} rows of width {q}",
                features.len(),
                targets.len()
            )));
        }
        Self::new(
            DVector::from_column_slice(targets),
            DMatrix::from_row_slice(targets.len(), q, features),
        )
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn cols(&self) -> usize {
        self.features.ncols()
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.targets, self.features)
    }

    /// Residual vector `y − X r`.
    pub fn residual(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.targets - &self.features * r
    }
}

/// State of the recursion after `steps_taken` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub h: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub steps_taken: usize,
}

impl FilterState {
    pub fn dim(&self) -> usize {
        self.psi.len()
    }
}

/// Zero `H`, the given starting vector, no steps taken.
pub fn init_state(q: usize, psi0: &DVector<f64>) -> Result<FilterState> {
    if q == 0 {
        return Err(Error::EmptyInput("dimension q must be at least 1"));
    }
    if psi0.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "psi0 has length {} but q = {q}",
            psi0.len()
        )));
    }
    if psi0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("psi0"));
    }
    Ok(FilterState { h: DMatrix::zeros(q, q), psi: psi0.clone(), steps_taken: 0 })
}

/// Absorbs one block. The updated `H` is re-factorized each step; an
/// explicit inverse is never formed.
pub fn kf_step(state: &FilterState, block: &DataBlock) -> Result<FilterState> {
    let q = state.dim();
    if block.cols() != q {
        return Err(Error::DimensionMismatch(format!(
            "block has {} columns but state has q = {q}",
            block.cols()
        )));
    }
    let step = state.steps_taken + 1;
    let h = &state.h + gram(block.features());
    let factor = SpdFactor::new(&h).ok_or(Error::SingularUpdate { step })?;
    let gradient = cross(block.features(), &block.residual(&state.psi));
    let psi = &state.psi + factor.solve(&gradient);
    Ok(FilterState { h, psi, steps_taken: step })
}

/// Runs the recursion over `blocks` in order and returns the state after
/// every step.
pub fn run_blocks(psi0: &DVector<f64>, blocks: &[DataBlock]) -> Result<Vec<FilterState>> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput("no data blocks"));
    }
    let mut state = init_state(psi0.len(), psi0)?;
    let mut trajectory = Vec::with_capacity(blocks.len());
    for block in blocks {
        state = kf_step(&state, block)?;
        trajectory.push(state.clone());
    }
    Ok(trajectory)
}

/// Same as [`run_blocks`] with `ψ₀ = 0`.
pub fn run_blocks_from_zero(blocks: &[DataBlock]) -> Result<Vec<FilterState>> {
    let q = blocks.first().ok_or(Error::EmptyInput("no data blocks"))?.cols();
    run_blocks(&DVector::zeros(q), blocks)
}

fn common_width(blocks: &[DataBlock]) -> Result<usize> {
    let q = blocks.first().ok_or(Error::EmptyInput("no data blocks"))?.cols();
    if let Some(b) = blocks.iter().find(|b| b.cols() != q) {
        return Err(Error::DimensionMismatch(format!(
            "blocks disagree on width: {q} vs {}",
            b.cols()
        )));
    }
    Ok(q)
}

/// Solves the stacked normal equations `(Σ XᵢᵗXᵢ) r = Σ Xᵢᵗyᵢ` in one shot.
///
/// Uses nalgebra's Cholesky rather than the recursion's factorization, with
/// the same pivot-ratio rejection rule.
pub fn batch_lls(blocks: &[DataBlock]) -> Result<DVector<f64>> {
    let q = common_width(blocks)?;
    let mut normal = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for b in blocks {
        normal += b.features().transpose() * b.features();
        rhs += b.features().transpose() * b.targets();
    }
    let normal = (&normal + normal.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(normal).ok_or(Error::SingularSystem)?;
    let pivots = chol.l_dirty().diagonal().map(|d| d * d);
    if !(pivots.min() > PIVOT_RATIO * pivots.max()) {
        return Err(Error::SingularSystem);
    }
    Ok(chol.solve(&rhs))
}

/// `Σᵢ ‖yᵢ − Xᵢ r‖²`.
pub fn cost(blocks: &[DataBlock], r: &DVector<f64>) -> Result<f64> {
    let q = common_width(blocks)?;
    if r.len() != q {
        return Err(Error::DimensionMismatch(format!("r has length {} but q = {q}", r.len())));
    }
    Ok(blocks.iter().map(|b| b.residual(r).norm_squared()).sum())
}
