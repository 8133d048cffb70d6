//! Seeded bird / fish / penguin data.
//!
//! Every random draw comes from a ChaCha20 stream keyed by
//! `(master_seed, iteration)` with the stream id selecting the purpose
//! ([`Stream`]). A dataset is therefore a pure function of those inputs no
//! matter which thread generates it or in what order.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interleave::MixtureSpec;
use crate::lls::DataBlock;

/// Ground truth for one source population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub weights: Vec<f64>,
    /// Scalar mean replicated across all feature columns.
    pub feature_mean: f64,
    pub feature_sd: f64,
    pub noise_sd: f64,
}

impl PopulationSpec {
    pub fn new(weights: Vec<f64>, feature_mean: f64, feature_sd: f64, noise_sd: f64) -> Result<Self> {
        if !(feature_sd > 0.0) || !feature_sd.is_finite() {
            return Err(Error::Domain(format!("feature_sd = {feature_sd} must be positive")));
        }
        if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
            return Err(Error::Domain(format!("noise_sd = {noise_sd} must be non-negative")));
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput("population weights"));
        }
        if weights.iter().chain([&feature_mean]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("population spec"));
        }
        Ok(Self { weights, feature_mean, feature_sd, noise_sd })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    pub fn with_scales(mut self, feature_sd: f64, noise_sd: f64) -> Result<Self> {
        self.feature_sd = feature_sd;
        self.noise_sd = noise_sd;
        Self::new(self.weights, self.feature_mean, self.feature_sd, self.noise_sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenguinMode {
    /// `Zᵢ = α Uᵢ + (1−α) Vᵢ` elementwise.
    #[default]
    ConvexCombination,
    /// Each row of `Zᵢ` is the matching `Uᵢ` row with probability `α`,
    /// otherwise the matching `Vᵢ` row.
    DistributionMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenguinRule {
    pub mode: PenguinMode,
    pub mix: MixtureSpec,
}

/// Independent random streams drawn under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Params = 0,
    Bird = 1,
    Fish = 2,
    Penguin = 3,
    BirdTest = 4,
    FishTest = 5,
    PenguinTest = 6,
    /// Random instances for identity checks.
    Instances = 7,
}

/// Reproducibility contract: the generator for `(stream, iteration)` is
/// ChaCha20 with key `master_seed ‖ iteration ‖ 0…0` (little endian) and
/// stream id `stream as u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master_seed: u64,
}

impl SeedPlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn rng(&self, stream: Stream, iteration: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&iteration.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream as u64);
        rng
    }
}

/// Draws bird and fish parameters once: weights iid Uniform(−5, 5) and one
/// feature mean per population from Uniform(−10, 10). Scales default to 1.
pub fn gen_population_params(q: usize, seed: SeedPlan) -> Result<(PopulationSpec, PopulationSpec)> {
    if q == 0 {
        return Err(Error::EmptyInput("dimension q must be at least 1"));
    }
    let mut rng = seed.rng(Stream::Params, 0);
    let weight = Uniform::new(-5.0, 5.0).expect("valid range");
    let mean = Uniform::new(-10.0, 10.0).expect("valid range");
    let r_b: Vec<f64> = (0..q).map(|_| weight.sample(&mut rng)).collect();
    let r_f: Vec<f64> = (0..q).map(|_| weight.sample(&mut rng)).collect();
    let mu_1 = mean.sample(&mut rng);
    let mu_2 = mean.sample(&mut rng);
    Ok((PopulationSpec::new(r_b, mu_1, 1.0, 1.0)?, PopulationSpec::new(r_f, mu_2, 1.0, 1.0)?))
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `m_blocks` blocks of `n` rows: features `N(mean, sd²·I)` row by row,
/// targets `X w + ε` with `ε ~ N(0, noise_sd²)`.
pub fn gen_blocks(
    spec: &PopulationSpec,
    n: usize,
    m_blocks: usize,
    seed: SeedPlan,
    stream: Stream,
    iteration: u64,
) -> Result<Vec<DataBlock>> {
    if n == 0 || m_blocks == 0 {
        return Err(Error::EmptyInput("n and m_blocks must be at least 1"));
    }
    let q = spec.dim();
    let w = spec.weights_vector();
    let mut rng = seed.rng(stream, iteration);
    (0..m_blocks)
        .map(|_| {
            // row-major fill: each row is one draw of the q-variate normal
            let mut x = DMatrix::zeros(n, q);
            for i in 0..n {
                for j in 0..q {
                    x[(i, j)] = spec.feature_mean + spec.feature_sd * normal(&mut rng);
                }
            }
            let mut y = &x * &w;
            for v in y.iter_mut() {
                *v += spec.noise_sd * normal(&mut rng);
            }
            DataBlock::new(y, x)
        })
        .collect()
}

/// Mixed-population blocks and their weight vector
/// `r_p = α r_b + (1−α) r_f`. Noise is drawn fresh.
#[allow(clippy::too_many_arguments)]
pub fn gen_penguin(
    birds: &[DataBlock],
    fish: &[DataBlock],
    bird_spec: &PopulationSpec,
    fish_spec: &PopulationSpec,
    rule: PenguinRule,
    noise_sd: f64,
    seed: SeedPlan,
    stream: Stream,
    iteration: u64,
) -> Result<(Vec<DataBlock>, DVector<f64>)> {
    if birds.len() != fish.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} bird blocks but {} fish blocks",
            birds.len(),
            fish.len()
        )));
    }
    if bird_spec.dim() != fish_spec.dim() {
        return Err(Error::DimensionMismatch("bird and fish weight lengths differ".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Domain(format!("noise_sd = {noise_sd} must be non-negative")));
    }
    let alpha = rule.mix.alpha();
    let r_p = bird_spec.weights_vector() * alpha + fish_spec.weights_vector() * (1.0 - alpha);
    let mut rng = seed.rng(stream, iteration);
    let blocks = birds
        .iter()
        .zip(fish)
        .map(|(u, v)| {
            let (u, v) = (u.features(), v.features());
            if u.shape() != v.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "bird block {:?} vs fish block {:?}",
                    u.shape(),
                    v.shape()
                )));
            }
            if u.ncols() != r_p.len() {
                return Err(Error::DimensionMismatch("block width differs from weights".into()));
            }
            let z = match rule.mode {
                PenguinMode::ConvexCombination => u * alpha + v * (1.0 - alpha),
                PenguinMode::DistributionMixture => {
                    let mut z = v.clone();
                    for i in 0..u.nrows() {
                        if rng.random::<f64>() < alpha {
                            z.set_row(i, &u.row(i));
                        }
                    }
                    z
                }
            };
            let mut p = &z * &r_p;
            for val in p.iter_mut() {
                *val += noise_sd * normal(&mut rng);
            }
            DataBlock::new(p, z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((blocks, r_p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub n: usize,
    pub q: usize,
    pub m: usize,
}

/// Everything one Monte Carlo iteration trains and tests on.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub birds: Vec<DataBlock>,
    pub fish: Vec<DataBlock>,
    pub penguin_train: Vec<DataBlock>,
    pub penguin_test: Vec<DataBlock>,
    pub r_p: DVector<f64>,
}

/// Generates `m` blocks per population plus an equally sized held-out
/// penguin test set built from fresh parent blocks.
pub fn generate_dataset(
    bird: &PopulationSpec,
    fish: &PopulationSpec,
    shape: BlockShape,
    rule: PenguinRule,
    penguin_noise_sd: f64,
    seed: SeedPlan,
    iteration: u64,
) -> Result<Dataset> {
    if bird.dim() != shape.q || fish.dim() != shape.q {
        return Err(Error::DimensionMismatch(format!(
            "population weights have length {}/{} but q = {}",
            bird.dim(),
            fish.dim(),
            shape.q
        )));
    }
    let birds = gen_blocks(bird, shape.n, shape.m, seed, Stream::Bird, iteration)?;
    let fish_blocks = gen_blocks(fish, shape.n, shape.m, seed, Stream::Fish, iteration)?;
    let (penguin_train, r_p) = gen_penguin(
        &birds,
        &fish_blocks,
        bird,
        fish,
        rule,
        penguin_noise_sd,
        seed,
        Stream::Penguin,
        iteration,
    )?;
    let test_birds = gen_blocks(bird, shape.n, shape.m, seed, Stream::BirdTest, iteration)?;
    let test_fish = gen_blocks(fish, shape.n, shape.m, seed, Stream::FishTest, iteration)?;
    let (penguin_test, _) = gen_penguin(
        &test_birds,
        &test_fish,
        bird,
        fish,
        rule,
        penguin_noise_sd,
        seed,
        Stream::PenguinTest,
        iteration,
    )?;
    Ok(Dataset { birds, fish: fish_blocks, penguin_train, penguin_test, r_p })
}

/// Contents of `manifest.json` in an exported dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub q: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub mode: PenguinMode,
    pub master_seed: u64,
    pub iteration: u64,
    pub penguin_noise_sd: f64,
    pub bird: PopulationSpec,
    pub fish: PopulationSpec,
    pub r_p: Vec<f64>,
}

const GROUPS: [&str; 4] = ["bird", "fish", "penguin_train", "penguin_test"];

fn write_block_csv(path: &Path, block: &DataBlock) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let q = block.cols();
    let mut header = Vec::with_capacity(q + 1);
    header.push("target".to_string());
    header.extend((1..=q).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(q + 1);
    for i in 0..block.rows() {
        record.clear();
        record.push(block.targets()[i].to_string());
        record.extend(block.features().row(i).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn read_block_csv(path: &Path) -> Result<DataBlock> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let q = headers.len().saturating_sub(1);
    if headers.get(0) != Some("target") || q == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected header `target,x1..xq`",
            path.display()
        )));
    }
    let mut targets = Vec::new();
    let mut features = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut values = rec.iter().map(|s| {
            s.trim().parse::<f64>().map_err(|e| {
                Error::Domain(format!("{}: cannot parse `{s}`: {e}", path.display()))
            })
        });
        targets.push(values.next().transpose()?.unwrap_or(f64::NAN));
        for v in values {
            features.push(v?);
        }
    }
    DataBlock::from_rows(&targets, &features, q)
}

/// Writes `manifest.json` and `bird_1.csv … penguin_test_m.csv` into `dir`.
pub fn export_dataset(dir: &Path, manifest: &DatasetManifest, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    let groups = [&data.birds, &data.fish, &data.penguin_train, &data.penguin_test];
    for (name, blocks) in GROUPS.iter().zip(groups) {
        for (i, b) in blocks.iter().enumerate() {
            write_block_csv(&dir.join(format!("{name}_{}.csv", i + 1)), b)?;
        }
    }
    Ok(())
}

/// Reads back a directory written by [`export_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let read_group = |name: &str| -> Result<Vec<DataBlock>> {
        (1..=manifest.m).map(|i| read_block_csv(&dir.join(format!("{name}_{i}.csv")))).collect()
    };
    let data = Dataset {
        birds: read_group(GROUPS[0])?,
        fish: read_group(GROUPS[1])?,
        penguin_train: read_group(GROUPS[2])?,
        penguin_test: read_group(GROUPS[3])?,
        r_p: DVector::from_column_slice(&manifest.r_p),
    };
    Ok((manifest, data))
}
