//! Data-generating process of the simulation study.

use super::scenario::{heterogeneity, PiMode, ScenarioConfig};
use crate::dataset::{ReplicatedFunctionalDataset, ScalarCovariates};
use crate::error::{invalid, Result};
use crate::grid::{Closure, Segmentation, TimeGrid};
use crate::zicorrect::ZeroInflationProfile;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, Uniform};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use std::f64::consts::{PI, SQRT_2};

/// Latent curves smaller than this are clipped before drawing counts.
pub const X_CLIP: f64 = 0.05;

/// `X_i(t) = 5 + Σ_{k≤K} ξ_ik ζ_k φ_k(t)` with `ξ ~ U(−√3, √3)`,
/// `ζ_k = (−1)^{k+1}/k` and the cosine basis.
pub fn gen_latent_x<R: Rng>(n: usize, grid: &TimeGrid, k_true: usize, rng: &mut R) -> DMatrix<f64> {
    let t = grid.points();
    let table: Vec<Vec<f64>> = (0..k_true)
        .map(|k| {
            let zeta = if k % 2 == 0 { 1.0 } else { -1.0 } / (k as f64 + 1.0);
            t.iter()
                .map(|&s| zeta * if k == 0 { 1.0 } else { SQRT_2 * (k as f64 * PI * s).cos() })
                .collect()
        })
        .collect();
    let xi = Uniform::new(-3f64.sqrt(), 3f64.sqrt()).expect("valid range");
    let mut x = DMatrix::from_element(n, t.len(), 5.0);
    for i in 0..n {
        for row in &table {
            let e = xi.sample(rng);
            for (l, v) in row.iter().enumerate() {
                x[(i, l)] += e * v;
            }
        }
    }
    x
}

/// Boundaries and values of a piecewise layout.
pub fn piecewise_layout(case: u8, pi0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = (pi0, 1.0 - pi0);
    Ok(match case {
        1 => (vec![0.0, 0.5, 1.0], vec![a, b]),
        2 => (vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0], vec![a, b, a, b, a]),
        3 => (vec![0.0, 0.1, 0.6, 1.0], vec![a, b, a]),
        other => return Err(invalid(format!("unknown piecewise case {other}"))),
    })
}

/// True zero-inflation profile; truth segments are closed on the left.
pub fn gen_pi_profile<R: Rng>(cfg: &ScenarioConfig, n: usize, rng: &mut R) -> Result<ZeroInflationProfile> {
    match cfg.pi_mode {
        PiMode::Constant => {
            let seg = Segmentation::with_closure(vec![0.0, 1.0], Closure::LeftClosed)?;
            let pi = if cfg.pi_delta == 0.0 {
                DMatrix::from_element(n, 1, cfg.pi0)
            } else {
                let u = Uniform::new(cfg.pi0 - cfg.pi_delta, cfg.pi0 + cfg.pi_delta).map_err(|e| invalid(e.to_string()))?;
                DMatrix::from_fn(n, 1, |_, _| u.sample(rng))
            };
            ZeroInflationProfile::new(seg, pi)
        }
        PiMode::Piecewise => {
            let (bounds, values) = piecewise_layout(cfg.case, cfg.pi0)?;
            let seg = Segmentation::with_closure(bounds, Closure::LeftClosed)?;
            ZeroInflationProfile::shared(n, seg, &values)
        }
    }
}

/// `W_ij(t) = V_ij(t)·P_ij(t)` with `V ~ Bernoulli(1 − π_i(t))` and
/// `P ~ Poisson(X_i(t))`. Returns the dataset and the number of clipped
/// latent values.
pub fn gen_surrogates<R: Rng>(
    x: &DMatrix<f64>,
    replicates: usize,
    profile: &ZeroInflationProfile,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<(ReplicatedFunctionalDataset, usize)> {
    let n = x.nrows();
    let len = grid.len();
    if x.ncols() != len || profile.n() != n {
        return Err(invalid("latent curves, profile and grid disagree in size"));
    }
    let pi = profile.on_grid(grid);
    let mut clipped = 0;
    let means: DMatrix<f64> = x.map(|v| {
        if v < X_CLIP {
            clipped += 1;
            X_CLIP
        } else {
            v
        }
    });
    let mut values = Vec::with_capacity(n * replicates * len);
    for i in 0..n {
        for _ in 0..replicates {
            for l in 0..len {
                let structural = rng.random::<f64>() < pi[(i, l)];
                let count = Poisson::new(means[(i, l)]).expect("positive mean").sample(rng);
                values.push(if structural { 0.0 } else { count });
            }
        }
    }
    let data = ReplicatedFunctionalDataset::fully_observed(n, replicates, grid.clone(), values)?;
    Ok((data, clipped))
}

/// Intercept, `Z₁ ~ N(1, σ_z²)` and `Z₂ ~ Bernoulli(p_z)`.
pub fn gen_covariates<R: Rng>(n: usize, cfg: &ScenarioConfig, rng: &mut R) -> Result<ScalarCovariates> {
    let z1 = Normal::new(1.0, cfg.sigma_z).map_err(|e| invalid(e.to_string()))?;
    let z2 = Bernoulli::new(cfg.p_z).map_err(|e| invalid(e.to_string()))?;
    let mut m = DMatrix::zeros(n, 2);
    for i in 0..n {
        m[(i, 0)] = z1.sample(rng);
        m[(i, 1)] = if z2.sample(rng) { 1.0 } else { 0.0 };
    }
    ScalarCovariates::with_intercept(&m, &["z1", "z2"])
}

/// `Y_i = ∫ β_i X_i + θ₁Z₁ + θ₂Z₂ + ε_i` with a latent rank `U_i` driving
/// both `β_i = β(·, U_i)` and `ε_i = σ{1 + η_ε h(U_i)}Φ⁻¹(U_i)`.
pub fn gen_outcome<R: Rng>(
    x: &DMatrix<f64>,
    z: &ScalarCovariates,
    cfg: &ScenarioConfig,
    grid: &TimeGrid,
    rng: &mut R,
) -> Vec<f64> {
    let std = StdNormal::standard();
    let beta0: Vec<f64> = grid.points().iter().map(|&t| cfg.beta_shape.eval(t)).collect();
    let w = grid.trapezoid_weights();
    let zm = z.matrix();
    (0..x.nrows())
        .map(|i| {
            let u: f64 = loop {
                let u = rng.random::<f64>();
                if u > 0.0 {
                    break u;
                }
            };
            let scale = 1.0 + cfg.eta_beta * heterogeneity(u);
            let integral: f64 = (0..grid.len()).map(|l| w[l] * beta0[l] * x[(i, l)]).sum::<f64>() * scale;
            let eps = cfg.sigma * (1.0 + cfg.eta_eps * heterogeneity(u)) * std.inverse_cdf(u);
            integral + cfg.theta[0] * zm[(i, 1)] + cfg.theta[1] * zm[(i, 2)] + eps
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn latent_mean_is_five() {
        let g = TimeGrid::equispaced(11).unwrap();
        let x = gen_latent_x(10_000, &g, 50, &mut rng(1));
        for l in 0..11 {
            let col = x.column(l);
            let m = col.mean();
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 9999.0).sqrt();
            assert!((m - 5.0).abs() < 3.0 * sd / 100.0, "t{l}: {m}");
        }
    }

    #[test]
    fn layouts_match_cases() {
        let (b, v) = piecewise_layout(1, 0.6).unwrap();
        assert_eq!(b, vec![0.0, 0.5, 1.0]);
        assert_eq!(v, vec![0.6, 0.4]);
        assert_eq!(piecewise_layout(3, 0.8).unwrap().0, vec![0.0, 0.1, 0.6, 1.0]);
        assert!(piecewise_layout(0, 0.5).is_err());
        let cfg = ScenarioConfig { pi_mode: PiMode::Piecewise, pi0: 0.6, ..Default::default() };
        let p = gen_pi_profile(&cfg, 3, &mut rng(0)).unwrap();
        assert_eq!(p.as_function(2, 0.4999), 0.6);
        assert_eq!(p.as_function(2, 0.5), 0.4);
        assert_eq!(p.as_function(2, 1.0), 0.4);
    }

    #[test]
    fn no_jitter_means_identical_subjects() {
        let cfg = ScenarioConfig { pi0: 0.3, pi_delta: 0.0, ..Default::default() };
        let p = gen_pi_profile(&cfg, 5, &mut rng(0)).unwrap();
        assert!(p.pi().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn deterministic_outcome_without_noise() {
        let g = TimeGrid::equispaced(21).unwrap();
        let cfg = ScenarioConfig { sigma: 0.0, ..Default::default() };
        let x = DMatrix::zeros(1, 21);
        let z = ScalarCovariates::with_intercept(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), &["z1", "z2"]).unwrap();
        let y = gen_outcome(&x, &z, &cfg, &g, &mut rng(4));
        assert!((y[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn near_one_inflation_gives_zeros() {
        let g = TimeGrid::equispaced(10).unwrap();
        let x = DMatrix::from_element(20, 10, 5.0);
        let seg = Segmentation::equal(1).unwrap();
        let p = ZeroInflationProfile::shared(20, seg, &[0.999]).unwrap();
        let (d, _) = gen_surrogates(&x, 5, &p, &g, &mut rng(2)).unwrap();
        let zeros = d.values().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros as f64 / d.values().len() as f64 > 0.99);
    }
}
