use nalgebra::DMatrix;
use zifqr_core::basis::{BasisKind, BasisSystem};
use zifqr_core::config::RunConfig;
use zifqr_core::dataset::ReplicatedFunctionalDataset;
use zifqr_core::grid::{Segmentation, TimeGrid};
use zifqr_core::rng::substream;
use zifqr_core::simlab::*;
use zifqr_core::zicorrect::{be_me, be_zime, correct, Method, ZeroInflationProfile};

#[test]
fn zero_probability_matches_the_mixture() {
    let grid = TimeGrid::equispaced(20).unwrap();
    let n = 200;
    let x = DMatrix::from_element(n, grid.len(), 1.5);
    let pi = 0.3;
    let profile = ZeroInflationProfile::shared(n, Segmentation::equal(1).unwrap(), &[pi]).unwrap();
    let (data, clipped) = gen_surrogates(&x, 50, &profile, &grid, &mut substream(3, &[0])).unwrap();
    assert_eq!(clipped, 0);
    // nJ = 10⁴ draws at the grid point l = 7
    let zeros = (0..n).flat_map(|i| (0..50).map(move |j| (i, j))).filter(|&(i, j)| data.value(i, j, 7) == 0.0).count();
    let p = pi + (1.0 - pi) * (-1.5f64).exp();
    let draws = (n * 50) as f64;
    let se = (p * (1.0 - p) / draws).sqrt();
    assert!((zeros as f64 / draws - p).abs() < 3.0 * se, "{} vs {p}", zeros as f64 / draws);
}

#[test]
fn no_inflation_zero_fraction_is_poisson() {
    let grid = TimeGrid::equispaced(30).unwrap();
    let n = 100;
    let x = gen_latent_x(n, &grid, 50, &mut substream(4, &[0])).map(|v| v - 3.0);
    let profile = ZeroInflationProfile::zeros(n, Segmentation::equal(1).unwrap());
    let (data, _) = gen_surrogates(&x, 5, &profile, &grid, &mut substream(4, &[1])).unwrap();
    let cells = (n * 5 * grid.len()) as f64;
    let zeros = data.values().iter().filter(|&&w| w == 0.0).count() as f64;
    let p: f64 = x.iter().map(|&v| (-v.max(0.05)).exp()).sum::<f64>() / (n * grid.len()) as f64;
    let se = (p * (1.0 - p) / cells).sqrt();
    assert!((zeros / cells - p).abs() < 3.0 * se);
}

#[test]
fn adjusted_replicate_mean_is_unbiased() {
    let grid = TimeGrid::equispaced(10).unwrap();
    let n = 4;
    let x = gen_latent_x(n, &grid, 50, &mut substream(5, &[0]));
    let pi = [0.2, 0.5, 0.0, 0.35];
    let profile = ZeroInflationProfile::new(Segmentation::equal(1).unwrap(), DMatrix::from_column_slice(n, 1, &pi)).unwrap();
    let j = 2000;
    let (data, _) = gen_surrogates(&x, j, &profile, &grid, &mut substream(5, &[1])).unwrap();
    for i in 0..n {
        for l in 0..grid.len() {
            let adj: Vec<f64> = data.slice(i, l).map(|w| w / (1.0 - pi[i])).collect();
            let mean = adj.iter().sum::<f64>() / j as f64;
            let sd = (x[(i, l)] * (1.0 + pi[i] * x[(i, l)]) / (1.0 - pi[i])).sqrt();
            assert!((mean - x[(i, l)]).abs() < 3.5 * sd / (j as f64).sqrt(), "subject {i} point {l}");
        }
    }
}

#[test]
fn bezime_reduces_to_beme_without_zeros() {
    // Gaussian-like positive data with no zeros: π̂ collapses to 0.
    let grid = TimeGrid::equispaced(40).unwrap();
    let (n, j) = (25, 4);
    let x = gen_latent_x(n, &grid, 50, &mut substream(6, &[0]));
    let mut rng = substream(6, &[1]);
    let mut values = Vec::new();
    for i in 0..n {
        for _ in 0..j {
            for l in 0..grid.len() {
                let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                values.push(x[(i, l)] + 10.0 + 0.5 * e);
            }
        }
    }
    let data = ReplicatedFunctionalDataset::fully_observed(n, j, grid.clone(), values).unwrap();
    let basis = BasisSystem::new(BasisKind::BsplineCubic, 6, &grid).unwrap();
    let cfg = RunConfig::default();
    let me = be_me(&data, &basis, &cfg).unwrap();
    let (zime, pi) = be_zime(&data, &basis, &Segmentation::equal(2).unwrap(), &cfg).unwrap();
    assert!(pi.pi().iter().all(|&p| p == 0.0));
    assert!(zime.converged);
    assert!((&me.coeffs - &zime.coeffs).amax() < 1e-10);
}

#[test]
fn correction_recovers_latent_curves_better_than_naive() {
    let cfg = ScenarioConfig { n: 60, len: 60, ..Default::default() };
    let grid = TimeGrid::equispaced(cfg.len).unwrap();
    let sim = simulate_replicate(&cfg, &grid, 11, 0).unwrap();
    let basis = BasisSystem::new(BasisKind::BsplineCubic, 6, &grid).unwrap();
    let run = RunConfig::default();
    let mise = |m: Method| {
        let (cov, _) = correct(m, &sim.data, &basis, &run, Some(&sim.x)).unwrap();
        compute_x_mise(&cov.curves, &sim.x).unwrap()
    };
    let (naive, beme, bezime) = (mise(Method::Naive), mise(Method::BeMe), mise(Method::BeZime(1)));
    assert!(bezime < beme && beme < naive, "{bezime} {beme} {naive}");
    let (_, profile) = correct(Method::BeZime(1), &sim.data, &basis, &run, None).unwrap();
    let profile = profile.unwrap();
    let (mse, _) = compute_pi_metrics(&profile, &sim.pi).unwrap();
    assert!(mse < 5e-3, "{mse}");
}

#[test]
fn replications_are_deterministic() {
    let cfg = ScenarioConfig {
        n: 30,
        len: 40,
        replications: 4,
        k_candidates: vec![4, 5],
        methods: vec!["naive".into(), "p-lmm".into(), "be-zime".into(), "oracle".into()],
        segments: vec![1, 2],
        ..Default::default()
    };
    let methods = cfg.resolve_methods().unwrap();
    let a = run_replications(&cfg, &methods, 5).unwrap();
    let b = run_replications(&cfg, &methods, 5).unwrap();
    assert_eq!(a.rows, b.rows);
    for m in &methods {
        assert_eq!(a.get(*m, None, "failures"), Some(0.0));
    }
    for row in &a.rows {
        if row.metric == "mise" {
            let abias = a.rows.iter().find(|r| r.method == row.method && r.tau == row.tau && r.metric == "abias2").unwrap();
            let avar = a.rows.iter().find(|r| r.method == row.method && r.tau == row.tau && r.metric == "avar").unwrap();
            assert_eq!(row.value, abias.value + avar.value);
        }
    }
    let c = run_replications(&cfg, &methods, 6).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn oracle_quantile_follows_the_error_quantile() {
    // η = 0: the τ-quantile of Y − ∫β₀X − Zθ is 0.1 Φ⁻¹(τ).
    let cfg = ScenarioConfig { n: 100_000, ..Default::default() };
    let grid = TimeGrid::equispaced(20).unwrap();
    let x = DMatrix::from_element(cfg.n, grid.len(), 2.0);
    let mut rng = substream(8, &[0]);
    let z = gen_covariates(cfg.n, &cfg, &mut rng).unwrap();
    let y = gen_outcome(&x, &z, &cfg, &grid, &mut rng);
    let beta: Vec<f64> = grid.points().iter().map(|&t| cfg.beta_shape.eval(t) * 2.0).collect();
    let signal = grid.integrate(&beta);
    let zm = z.matrix();
    let mut e: Vec<f64> = (0..cfg.n).map(|i| y[i] - signal - 0.5 * zm[(i, 1)] - 0.6 * zm[(i, 2)]).collect();
    e.sort_by(f64::total_cmp);
    for (tau, q) in [(0.25f64, -0.674_489_750_196_081_7f64), (0.5, 0.0), (0.75, 0.674_489_750_196_081_7)] {
        let emp = e[(tau * cfg.n as f64) as usize];
        // SE of a sample quantile: sqrt(τ(1−τ)/n) / f(q)
        let dens = (-0.5 * q * q).exp() / (2.0 * std::f64::consts::PI).sqrt() / 0.1;
        let se = (tau * (1.0 - tau) / cfg.n as f64).sqrt() / dens;
        assert!((emp - 0.1 * q).abs() < 3.0 * se, "τ={tau}: {emp}");
    }
}
