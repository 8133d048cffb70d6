#![allow(dead_code)]

use interleave_kf::DataBlock;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Block with Gaussian features (random per-column offset) and noisy
/// linear targets.
pub fn random_block(rng: &mut impl Rng, n: usize, q: usize) -> DataBlock {
    let offsets: Vec<f64> = (0..q).map(|_| 3.0 * gaussian(rng)).collect();
    let x = DMatrix::from_fn(n, q, |_, j| offsets[j] + gaussian(rng));
    let w = DVector::from_fn(q, |_, _| 2.0 * gaussian(rng));
    let y = &x * &w + DVector::from_fn(n, |_, _| gaussian(rng));
    DataBlock::new(y, x).unwrap()
}

/// `m` blocks, each with at least `q + 2` rows.
pub fn random_blocks(rng: &mut impl Rng, q: usize, m: usize, max_n: usize) -> Vec<DataBlock> {
    (0..m)
        .map(|_| {
            let n = rng.random_range((q + 2).min(max_n)..=max_n);
            random_block(rng, n, q)
        })
        .collect()
}

/// Least squares on the vertically stacked data via Householder QR.
/// Shares no code with the recursion or the normal-equations solve.
pub fn stacked_qr_solve(blocks: &[DataBlock]) -> DVector<f64> {
    let q = blocks[0].cols();
    let n: usize = blocks.iter().map(|b| b.rows()).sum();
    let mut x = DMatrix::zeros(n, q);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for b in blocks {
        x.rows_mut(row, b.rows()).copy_from(b.features());
        y.rows_mut(row, b.rows()).copy_from(b.targets());
        row += b.rows();
    }
    let qr = x.qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).expect("full column rank")
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}
