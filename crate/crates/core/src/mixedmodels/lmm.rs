//! One-way random-intercept model `y_ij = α_0 + α_i + ε_ij`.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInterceptFit {
    pub alpha0: f64,
    pub sigma_a2: f64,
    pub sigma_e2: f64,
    /// Predicted random intercepts `α̂_i`.
    pub blups: Vec<f64>,
    /// `σ_a² / (σ_a² + σ_e²/J_i)`, zero for subjects without observations.
    pub shrinkage: Vec<f64>,
    /// Subject means `ȳ_i` (NaN when a subject has no observations).
    pub means: Vec<f64>,
    /// Every observation was identical; no variance could be estimated.
    pub degenerate: bool,
}

impl RandomInterceptFit {
    /// Subject-level predictions `α̂_0 + α̂_i`.
    pub fn fitted(&self) -> Vec<f64> {
        self.blups.iter().map(|b| self.alpha0 + b).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct GroupStats {
    size: f64,
    mean: f64,
    ssw: f64,
}

fn group_stats<G: AsRef<[f64]>>(groups: &[G]) -> Vec<GroupStats> {
    groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            let size = g.len() as f64;
            if g.is_empty() {
                return GroupStats { size: 0.0, mean: f64::NAN, ssw: 0.0 };
            }
            let mean = g.iter().sum::<f64>() / size;
            let ssw = g.iter().map(|y| (y - mean).powi(2)).sum();
            GroupStats { size, mean, ssw }
        })
        .collect()
}

/// Fits the random-intercept model to per-subject replicate values.
///
/// Balanced data use the closed-form ANOVA estimators with the between
/// component truncated at zero; unbalanced data maximize the REML profile
/// likelihood over the variance ratio. The two agree for balanced data
/// whenever the truncation is inactive.
pub fn fit_random_intercept<G: AsRef<[f64]>>(groups: &[G]) -> Result<RandomInterceptFit> {
    let n = groups.len();
    if n < 2 {
        return Err(invalid(format!("random-intercept fit needs at least 2 subjects, got {n}")));
    }
    let stats = group_stats(groups);
    if groups.iter().flat_map(|g| g.as_ref()).any(|v| !v.is_finite()) {
        return Err(invalid("observations must be finite"));
    }
    let nonempty = stats.iter().filter(|s| s.size > 0.0).count();
    if nonempty < 2 {
        return Err(invalid("need observations from at least 2 subjects"));
    }
    if !stats.iter().any(|s| s.size >= 2.0) {
        return Err(invalid("need a subject with at least 2 replicates"));
    }

    let (lo, hi) = groups
        .iter()
        .flat_map(|g| g.as_ref())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Ok(RandomInterceptFit {
            alpha0: lo,
            sigma_a2: 0.0,
            sigma_e2: 0.0,
            blups: vec![0.0; n],
            shrinkage: vec![1.0; n],
            means: stats.iter().map(|s| s.mean).collect(),
            degenerate: true,
        });
    }

    let (sigma_a2, sigma_e2) = match balanced_size(&stats) {
        Some(j) => anova_components(&stats, j),
        None => reml_components(&stats),
    };
    Ok(predict(&stats, sigma_a2, sigma_e2))
}

fn balanced_size(stats: &[GroupStats]) -> Option<f64> {
    let j = stats[0].size;
    (j >= 2.0 && stats.iter().all(|s| s.size == j)).then_some(j)
}

/// ANOVA (method-of-moments) components for balanced data.
fn anova_components(stats: &[GroupStats], j: f64) -> (f64, f64) {
    let n = stats.len() as f64;
    let grand = stats.iter().map(|s| s.mean).sum::<f64>() / n;
    let ssw: f64 = stats.iter().map(|s| s.ssw).sum();
    let ssb: f64 = j * stats.iter().map(|s| (s.mean - grand).powi(2)).sum::<f64>();
    let msw = ssw / (n * (j - 1.0));
    let msb = ssb / (n - 1.0);
    (((msb - msw) / j).max(0.0), msw)
}

/// REML criterion `-2ℓ_R` profiled over σ_e² at variance ratio λ = σ_a²/σ_e².
/// Returns the criterion and the implied σ_e².
pub(crate) fn reml_profile(stats_sizes: &[(f64, f64, f64)], lambda: f64) -> (f64, f64) {
    let mut sw = 0.0;
    let mut swy = 0.0;
    let mut logdet = 0.0;
    let mut ssw = 0.0;
    let mut total = 0.0;
    for &(size, mean, within) in stats_sizes {
        if size == 0.0 {
            continue;
        }
        let d = 1.0 + lambda * size;
        sw += size / d;
        swy += size * mean / d;
        logdet += d.ln();
        ssw += within;
        total += size;
    }
    let alpha = swy / sw;
    let q = ssw
        + stats_sizes
            .iter()
            .filter(|s| s.0 > 0.0)
            .map(|&(size, mean, _)| size * (mean - alpha).powi(2) / (1.0 + lambda * size))
            .sum::<f64>();
    let dof = total - 1.0;
    (dof * q.ln() + logdet + sw.ln(), q / dof)
}

fn reml_components(stats: &[GroupStats]) -> (f64, f64) {
    let tuples: Vec<(f64, f64, f64)> = stats.iter().map(|s| (s.size, s.mean, s.ssw)).collect();
    let ssw: f64 = stats.iter().map(|s| s.ssw).sum();
    if ssw == 0.0 {
        // no within-subject spread: all variation is between subjects
        let means: Vec<f64> = stats.iter().filter(|s| s.size > 0.0).map(|s| s.mean).collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0);
        return (var, 0.0);
    }
    // λ = u / (1 - u) with u in [0, 1)
    let crit = |u: f64| reml_profile(&tuples, u / (1.0 - u)).0;
    let u_max = 1.0 - 1e-10;
    let steps = 64;
    let mut best = (0.0, crit(0.0));
    for s in 1..=steps {
        let u = (s as f64 / steps as f64).min(u_max);
        let c = crit(u);
        if c < best.1 {
            best = (u, c);
        }
    }
    let h = 1.0 / steps as f64;
    let (a, b) = ((best.0 - h).max(0.0), (best.0 + h).min(u_max));
    let u = golden_min(crit, a, b, 1e-12);
    let u = if crit(u) <= best.1 { u } else { best.0 };
    let lambda = u / (1.0 - u);
    let sigma_e2 = reml_profile(&tuples, lambda).1;
    (lambda * sigma_e2, sigma_e2)
}

fn predict(stats: &[GroupStats], sigma_a2: f64, sigma_e2: f64) -> RandomInterceptFit {
    let shrinkage: Vec<f64> = stats
        .iter()
        .map(|s| {
            if s.size == 0.0 || sigma_a2 == 0.0 {
                0.0
            } else {
                sigma_a2 / (sigma_a2 + sigma_e2 / s.size)
            }
        })
        .collect();
    // GLS weights 1 / Var(ȳ_i)
    let weights: Vec<f64> = stats
        .iter()
        .map(|s| {
            if s.size == 0.0 {
                0.0
            } else if sigma_a2 == 0.0 {
                s.size
            } else {
                1.0 / (sigma_a2 + sigma_e2 / s.size)
            }
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let alpha0 = stats
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(s, w)| w * s.mean)
        .sum::<f64>()
        / wsum;
    let blups = stats
        .iter()
        .zip(&shrinkage)
        .map(|(s, k)| if s.size == 0.0 { 0.0 } else { k * (s.mean - alpha0) })
        .collect();
    RandomInterceptFit {
        alpha0,
        sigma_a2,
        sigma_e2,
        blups,
        shrinkage,
        means: stats.iter().map(|s| s.mean).collect(),
        degenerate: false,
    }
}

/// Golden-section minimization of a unimodal function on [a, b].
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups_5x4() -> Vec<Vec<f64>> {
        vec![
            vec![3.1, 2.7, 3.6, 3.0],
            vec![5.2, 4.4, 4.9, 5.8],
            vec![1.9, 2.6, 2.2, 1.5],
            vec![4.0, 3.3, 3.9, 4.6],
            vec![2.8, 3.5, 3.2, 2.4],
        ]
    }

    /// Textbook one-way random-effects estimators and BLUPs, written out
    /// independently of the fitting code.
    fn anova_oracle(y: &[Vec<f64>]) -> (f64, f64, Vec<f64>) {
        let n = y.len() as f64;
        let j = y[0].len() as f64;
        let means: Vec<f64> = y.iter().map(|g| g.iter().sum::<f64>() / j).collect();
        let grand = y.iter().flatten().sum::<f64>() / (n * j);
        let msb = j * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1.0);
        let msw = y
            .iter()
            .zip(&means)
            .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (n * (j - 1.0));
        let sa = ((msb - msw) / j).max(0.0);
        let k = sa / (sa + msw / j);
        let x = means.iter().map(|m| grand + k * (m - grand)).collect();
        (sa, msw, x)
    }

    #[test]
    fn balanced_matches_anova_oracle() {
        let y = groups_5x4();
        let fit = fit_random_intercept(&y).unwrap();
        let (sa, se, x) = anova_oracle(&y);
        assert!((fit.sigma_a2 - sa).abs() < 1e-10);
        assert!((fit.sigma_e2 - se).abs() < 1e-10);
        for (a, b) in fit.fitted().iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(fit.blups.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn reml_profile_agrees_with_anova_when_interior() {
        let y = groups_5x4();
        let stats = group_stats(&y);
        let (sa, se) = reml_components(&stats);
        let (sa0, se0, _) = anova_oracle(&y);
        assert!(sa0 > 0.0);
        assert!((sa - sa0).abs() < 1e-7, "{sa} vs {sa0}");
        assert!((se - se0).abs() < 1e-7);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let y = vec![vec![2.5; 3]; 4];
        let fit = fit_random_intercept(&y).unwrap();
        assert!(fit.degenerate);
        assert!(fit.fitted().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn no_between_variance_shrinks_fully() {
        let y = vec![vec![1.0, 3.0], vec![3.0, 1.0], vec![2.0, 2.0]];
        let fit = fit_random_intercept(&y).unwrap();
        assert_eq!(fit.sigma_a2, 0.0);
        assert!(fit.fitted().iter().all(|&v| (v - 2.0).abs() < 1e-14));
    }

    #[test]
    fn identical_replicates_keep_subject_means() {
        let y = vec![vec![1.0, 1.0], vec![4.0, 4.0], vec![2.0, 2.0]];
        let fit = fit_random_intercept(&y).unwrap();
        assert_eq!(fit.sigma_e2, 0.0);
        assert_eq!(fit.fitted(), vec![1.0, 4.0, 2.0]);
    }

    #[test]
    fn unbalanced_and_empty_groups() {
        let y = vec![vec![3.0, 3.4, 2.9], vec![5.0], vec![], vec![1.0, 1.8]];
        let fit = fit_random_intercept(&y).unwrap();
        assert_eq!(fit.shrinkage[2], 0.0);
        let x = fit.fitted();
        assert!((x[2] - fit.alpha0).abs() < 1e-15);
        for i in [0, 1, 3] {
            let m = fit.means[i];
            assert!((x[i] - m) * (x[i] - fit.alpha0) <= 1e-12, "BLUP lies between mean and α0");
        }
    }

    #[test]
    fn argument_errors() {
        assert!(fit_random_intercept(&[vec![1.0, 2.0]]).is_err());
        assert!(fit_random_intercept(&[vec![1.0], vec![2.0]]).is_err());
    }
}
