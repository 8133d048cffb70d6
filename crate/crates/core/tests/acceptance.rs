//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{random_blocks, rel_err, rng};
use interleave_kf::twostep::{check_closed_form, check_unbiasedness, UnbiasednessConfig, UnbiasednessOutcome};
use interleave_kf::{
    batch_lls, cost, gen_blocks, run_blocks, run_interleaved, run_monte_carlo, Centering, DataBlock,
    ExperimentConfig, InterleaveOrder, MixtureSpec, PopulationSpec, Scenario, SeedPlan, Stream,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Deserialize;

const ORACLE_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-10;
const COMMON_WEIGHT_TOL: f64 = 1e-8;
const GRADIENT_REL: f64 = 1e-4;
const SE_MULTIPLE: f64 = 4.0;
const FIXTURE_SEED: u64 = 42;
const BIAS_MAX: f64 = 0.05;
const MSE_REL_TOL: f64 = 0.25;
const SINGLE_FACTOR: f64 = 5.0;

#[derive(Deserialize)]
struct CurveShapeFixture {
    master_seed: u64,
    interleaved_bias_max: f64,
    interleaved_mse_rel_tolerance: f64,
    single_population_mse_factor: f64,
}

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Random instance with `q ≤ 8`, `m ≤ 10`, `n ≤ 50`.
fn instance(seed: u64, m_even: bool) -> Vec<DataBlock> {
    let mut r = rng(seed);
    let q = r.random_range(1..=8);
    let m = if m_even { 2 * r.random_range(1..=5) } else { r.random_range(1..=10) };
    let max_n = r.random_range(q + 2..=50);
    random_blocks(&mut r, q, m, max_n)
}

fn oracle_equivalence() -> Verdict {
    let mut worst = 0.0_f64;
    for seed in 0..200 {
        let blocks = instance(seed, false);
        let q = blocks[0].cols();
        let traj = run_blocks(&DVector::from_element(q, 0.3), &blocks).unwrap();
        worst = worst.max(rel_err(&traj.last().unwrap().psi, &batch_lls(&blocks).unwrap()));
    }
    verdict(worst <= ORACLE_TOL, format!("200 instances, max rel err {worst:.2e} (tol {ORACLE_TOL:e})"))
}

/// Centers and scales by `√w` with plain loops.
fn prepare(block: &DataBlock, w: f64) -> DataBlock {
    let (n, q) = (block.rows(), block.cols());
    let s = w.sqrt();
    let x = block.features();
    let y = block.targets();
    let ym = y.iter().sum::<f64>() / n as f64;
    let xm: Vec<f64> = (0..q).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
    DataBlock::new(
        DVector::from_fn(n, |i, _| s * (y[i] - ym)),
        DMatrix::from_fn(n, q, |i, j| s * (x[(i, j)] - xm[j])),
    )
    .unwrap()
}

fn interleaved_equivalence() -> Verdict {
    let mut worst = 0.0_f64;
    for seed in 0..200u64 {
        let blocks = instance(10_000 + seed, true);
        let k = blocks.len() / 2;
        let (birds, fish) = blocks.split_at(k);
        let alpha = 0.05 + 0.9 * rng(seed).random::<f64>();
        let mix = MixtureSpec::new(alpha).unwrap();
        let order = if seed % 2 == 0 { InterleaveOrder::BirdFirst } else { InterleaveOrder::FishFirst };
        let q = birds[0].cols();
        let traj = run_interleaved(birds, fish, mix, &DVector::zeros(q), order, Centering::Apply).unwrap();
        let stacked: Vec<DataBlock> = birds
            .iter()
            .map(|b| prepare(b, alpha))
            .chain(fish.iter().map(|f| prepare(f, 1.0 - alpha)))
            .collect();
        worst = worst.max(rel_err(&traj.last().unwrap().psi, &batch_lls(&stacked).unwrap()));
    }
    verdict(worst <= ORACLE_TOL, format!("200 instances, max rel err {worst:.2e} (tol {ORACLE_TOL:e})"))
}

fn two_step_closed_form() -> Verdict {
    let out = check_closed_form(SeedPlan::new(FIXTURE_SEED), 100).unwrap();
    verdict(
        out.comparisons == 200 && out.max_discrepancy < CLOSED_FORM_TOL,
        format!("{} comparisons, max discrepancy {:.2e} (tol {CLOSED_FORM_TOL:e})", out.comparisons, out.max_discrepancy),
    )
}

fn two_step_unbiasedness() -> Verdict {
    match check_unbiasedness(&UnbiasednessConfig::default(), 0).unwrap() {
        UnbiasednessOutcome::SkippedPrecondition(why) => verdict(false, format!("unexpectedly skipped: {why}")),
        UnbiasednessOutcome::Evaluated { max_abs_dev, se_psi2, .. } => {
            let bound = SE_MULTIPLE * se_psi2.max();
            verdict(
                max_abs_dev <= bound,
                format!("5000 iterations, max |mean psi2 - r_p| {max_abs_dev:.4} vs {SE_MULTIPLE} x SE = {bound:.4}"),
            )
        }
    }
}

fn curve_shape() -> Verdict {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/curve_shape.json")).unwrap();
    let fx: CurveShapeFixture = serde_json::from_str(&text).unwrap();
    assert_eq!(fx.master_seed, FIXTURE_SEED);
    assert_eq!(fx.interleaved_bias_max, BIAS_MAX);
    assert_eq!(fx.interleaved_mse_rel_tolerance, MSE_REL_TOL);
    assert_eq!(fx.single_population_mse_factor, SINGLE_FACTOR);

    let cfg = ExperimentConfig { master_seed: FIXTURE_SEED, ..Default::default() };
    let report = run_monte_carlo(&cfg, 0).unwrap();
    let m = cfg.m;
    let mse = |s| report.get(s, m).unwrap().mean_mse;
    let penguin = mse(Scenario::PenguinOnly);
    let mut failures = Vec::new();
    let mut worst_bias = 0.0_f64;
    for s in [Scenario::InterleavedBirdFirst, Scenario::InterleavedFishFirst] {
        for step in 2..=m {
            let b = report.get(s, step).unwrap().mean_bias;
            worst_bias = worst_bias.max(b.abs());
            if b.abs() >= BIAS_MAX {
                failures.push(format!("{s} step {step} bias {b:.4}"));
            }
        }
        let rel = (mse(s) - penguin).abs() / penguin;
        if rel > MSE_REL_TOL {
            failures.push(format!("{s} mse off by {:.1}%", 100.0 * rel));
        }
    }
    for s in [Scenario::BirdsOnly, Scenario::FishOnly] {
        if mse(s) <= SINGLE_FACTOR * penguin {
            failures.push(format!("{s} mse {:.3} not > {SINGLE_FACTOR} x {penguin:.3}", mse(s)));
        }
    }
    let summary = format!(
        "seed {FIXTURE_SEED}: max interleaved |bias| {worst_bias:.4}; step-{m} mse birds {:.3} fish {:.3} penguin {penguin:.3} il-bf {:.3} il-ff {:.3}",
        mse(Scenario::BirdsOnly),
        mse(Scenario::FishOnly),
        mse(Scenario::InterleavedBirdFirst),
        mse(Scenario::InterleavedFishFirst),
    );
    if failures.is_empty() {
        verdict(true, summary)
    } else {
        verdict(false, format!("{summary}; {}", failures.join("; ")))
    }
}

fn common_weights_recovered() -> Verdict {
    let seed = SeedPlan::new(7);
    let mut worst = 0.0_f64;
    for (it, alpha) in [0.1, 0.25, 0.5, 0.75, 0.9].into_iter().enumerate() {
        let w = vec![1.5, -2.0, 0.5, 3.0, -1.0, 2.5];
        let bird = PopulationSpec::new(w.clone(), 5.0, 1.0, 0.0).unwrap();
        let fish = PopulationSpec::new(w.clone(), -3.0, 2.0, 0.0).unwrap();
        let u = gen_blocks(&bird, 100, 3, seed, Stream::Bird, it as u64).unwrap();
        let v = gen_blocks(&fish, 100, 3, seed, Stream::Fish, it as u64).unwrap();
        let mix = MixtureSpec::new(alpha).unwrap();
        let truth = DVector::from_vec(w);
        for order in [InterleaveOrder::BirdFirst, InterleaveOrder::FishFirst] {
            let traj = run_interleaved(&u, &v, mix, &DVector::zeros(6), order, Centering::Apply).unwrap();
            worst = worst.max((&traj.last().unwrap().psi - &truth).amax());
        }
    }
    verdict(worst <= COMMON_WEIGHT_TOL, format!("max |psi_m - r| {worst:.2e} (tol {COMMON_WEIGHT_TOL:e})"))
}

fn thread_determinism() -> Verdict {
    let cfg = ExperimentConfig { iterations: 500, master_seed: FIXTURE_SEED, ..Default::default() };
    let one = run_monte_carlo(&cfg, 1).unwrap().to_csv_string().unwrap();
    let four = run_monte_carlo(&cfg, 4).unwrap().to_csv_string().unwrap();
    verdict(one == four, format!("500 iterations, 1 vs 4 threads, {} bytes, identical: {}", one.len(), one == four))
}

fn gradient_vanishes() -> Verdict {
    let mut worst = 0.0_f64;
    for seed in 0..50 {
        let blocks = instance(20_000 + seed, false);
        let r = batch_lls(&blocks).unwrap();
        let c = cost(&blocks, &r).unwrap();
        let g = DVector::from_fn(r.len(), |j, _| {
            let h = 1e-6 * r[j].abs().max(1.0);
            let mut plus = r.clone();
            let mut minus = r.clone();
            plus[j] += h;
            minus[j] -= h;
            (cost(&blocks, &plus).unwrap() - cost(&blocks, &minus).unwrap()) / (2.0 * h)
        });
        worst = worst.max(g.amax() / (1.0 + c));
    }
    verdict(worst <= GRADIENT_REL, format!("50 instances, max |grad|/(1+cost) {worst:.2e} (tol {GRADIENT_REL:e})"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("recursion equals batch least squares", oracle_equivalence, Duration::from_secs(5)),
        ("interleaved run equals weighted batch", interleaved_equivalence, Duration::from_secs(5)),
        ("two-step closed form", two_step_closed_form, Duration::from_secs(5)),
        ("two-step Monte Carlo unbiasedness", two_step_unbiasedness, Duration::from_secs(60)),
        ("per-step bias and MSE curve shape", curve_shape, Duration::from_secs(180)),
        ("common weights recovered", common_weights_recovered, Duration::from_secs(5)),
        ("thread-count determinism", thread_determinism, Duration::from_secs(60)),
        ("gradient vanishes at batch solution", gradient_vanishes, Duration::from_secs(5)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let pass = v.pass && took <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "[criterion {}] {} {name}: {} [{:.2}s, limit {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
