use interleave_kf::experiment::run_monte_carlo_with;
use interleave_kf::interleave::center_blocks;
use interleave_kf::lls::run_blocks_from_zero;
use interleave_kf::{mse_metric, run_monte_carlo, run_scenario, ExperimentConfig, Scenario};

fn small(iterations: usize) -> ExperimentConfig {
    ExperimentConfig { iterations, ..Default::default() }
}

#[test]
fn penguin_only_noiseless_recovers_truth() {
    let cfg = ExperimentConfig { noise_sd: 0.0, ..small(1) };
    let (b, f) = cfg.population_params().unwrap();
    let data = cfg.dataset(&b, &f, 0).unwrap();
    let psis = run_scenario(Scenario::PenguinOnly, &data, &cfg).unwrap();
    assert_eq!(psis.len(), 6);
    assert!((&psis[5] - &data.r_p).amax() < 1e-8);
}

#[test]
fn birds_only_is_plain_recursion() {
    let cfg = small(1);
    let (b, f) = cfg.population_params().unwrap();
    let data = cfg.dataset(&b, &f, 4).unwrap();
    let psis = run_scenario(Scenario::BirdsOnly, &data, &cfg).unwrap();
    let direct = run_blocks_from_zero(&center_blocks(&data.birds).unwrap()).unwrap();
    for (p, s) in psis.iter().zip(&direct) {
        assert_eq!(p, &s.psi);
    }
}

#[test]
fn interleaved_orders_agree_at_step_two() {
    let cfg = small(1);
    let (b, f) = cfg.population_params().unwrap();
    for it in 0..20 {
        let data = cfg.dataset(&b, &f, it).unwrap();
        let bf = run_scenario(Scenario::InterleavedBirdFirst, &data, &cfg).unwrap();
        let ff = run_scenario(Scenario::InterleavedFishFirst, &data, &cfg).unwrap();
        assert!((&bf[1] - &ff[1]).amax() <= 1e-10 * bf[1].amax().max(1.0));
    }
}

#[test]
fn exact_estimate_mse_is_noise_variance() {
    // with the true weights the residual is centered noise: E = s²(n−1)/n
    let s = 0.7;
    let cfg = ExperimentConfig { noise_sd: s, ..small(1) };
    let (b, f) = cfg.population_params().unwrap();
    let vals: Vec<f64> = (0..2000)
        .map(|it| {
            let d = cfg.dataset(&b, &f, it).unwrap();
            mse_metric(&d.r_p, &center_blocks(&d.penguin_test).unwrap()).unwrap()
        })
        .collect();
    let (mean, se) = interleave_kf::experiment::mean_and_se(&vals);
    let expected = s * s * (cfg.n as f64 - 1.0) / cfg.n as f64;
    assert!((mean - expected).abs() <= 4.0 * se, "mean {mean} expected {expected} se {se}");
}

#[test]
fn single_iteration_has_zero_se() {
    let report = run_monte_carlo(&small(1), 1).unwrap();
    assert_eq!(report.metrics.len(), 30);
    assert!(report.metrics.iter().all(|m| m.se_bias == 0.0 && m.se_mse == 0.0));
    let cfg = small(1);
    let (b, f) = cfg.population_params().unwrap();
    let data = cfg.dataset(&b, &f, 0).unwrap();
    let psis = run_scenario(Scenario::FishOnly, &data, &cfg).unwrap();
    let row = report.get(Scenario::FishOnly, 6).unwrap();
    assert_eq!(row.mean_bias, (&psis[5] - &data.r_p).mean());
}

#[test]
fn row_order_and_nonnegative_mse() {
    let cfg = ExperimentConfig {
        scenarios: vec![Scenario::InterleavedFishFirst, Scenario::BirdsOnly],
        ..small(20)
    };
    let report = run_monte_carlo(&cfg, 2).unwrap();
    let keys: Vec<_> = report.metrics.iter().map(|m| (m.scenario, m.step)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 12);
    assert!(report.metrics.iter().all(|m| m.mean_mse >= 0.0 && m.se_mse >= 0.0 && m.se_bias >= 0.0));
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let a = run_monte_carlo(&small(500), 0).unwrap();
    let b = run_monte_carlo(&small(5000), 0).unwrap();
    let target = 10f64.sqrt();
    for (x, y) in a.metrics.iter().zip(&b.metrics) {
        for (sa, sb) in [(x.se_bias, y.se_bias), (x.se_mse, y.se_mse)] {
            let ratio = sa / sb;
            assert!(ratio >= target / 2.0 && ratio <= target * 2.0, "{:?} step {}: {ratio}", x.scenario, x.step);
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small(300);
    let (b, f) = cfg.population_params().unwrap();
    let one = run_monte_carlo_with(&cfg, &b, &f, 1).unwrap();
    let many = run_monte_carlo_with(&cfg, &b, &f, 5).unwrap();
    assert_eq!(one.to_csv_string().unwrap(), many.to_csv_string().unwrap());
}

#[test]
fn csv_header_and_shape() {
    let report = run_monte_carlo(&small(10), 0).unwrap();
    let csv = report.to_csv_string().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scenario,step,mean_bias,se_bias,mean_mse,se_mse,n_failed"));
    assert_eq!(lines.clone().count(), 30);
    assert!(lines.next().unwrap().starts_with("birds_only,1,"));
}
