//! Random-intercept models used for measurement-error correction.

pub mod gauss_hermite;
mod glmm;
mod lmm;

pub use glmm::{fit_poisson_glmm, fit_zip_glmm, GlmmFit};
pub use lmm::{fit_random_intercept, RandomInterceptFit};

use crate::dataset::ReplicatedFunctionalDataset;
use crate::error::Result;
use crate::par;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Poisson,
    Zip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointFlag {
    /// Fewer than two subjects (or no replicated subject) observed; fitted by
    /// subject means.
    TooFewSubjects,
    /// Every observation zero.
    AllZero,
    /// Iterative fit hit its iteration limit.
    NotConverged,
    /// No variation at all in the slice.
    Degenerate,
    /// No observations at this time point; values interpolated along t.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointParams {
    pub intercept: f64,
    pub re_variance: f64,
    pub residual_variance: Option<f64>,
    pub zero_prob: Option<f64>,
    pub flag: Option<PointFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseMixedFit {
    pub family: Family,
    pub points: Vec<PointParams>,
    /// n × L subject-level fitted trajectories.
    pub fitted_mean: DMatrix<f64>,
}

impl PointwiseMixedFit {
    pub fn flagged(&self) -> usize {
        self.points.iter().filter(|p| p.flag.is_some()).count()
    }
}

pub const MEAN_FLOOR: f64 = 1e-8;

fn slices(data: &ReplicatedFunctionalDataset, l: usize) -> Vec<Vec<f64>> {
    (0..data.n()).map(|i| data.slice(i, l).collect()).collect()
}

fn subject_means(groups: &[Vec<f64>]) -> Vec<f64> {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    groups
        .iter()
        .map(|g| if g.is_empty() { grand } else { g.iter().sum::<f64>() / g.len() as f64 })
        .collect()
}

/// Assembles per-point results into a fit, interpolating fully unobserved
/// time points linearly along the grid.
fn assemble(
    data: &ReplicatedFunctionalDataset,
    family: Family,
    results: Vec<(PointParams, Option<Vec<f64>>)>,
) -> PointwiseMixedFit {
    let n = data.n();
    let len = data.len_grid();
    let t = data.grid().points();
    let mut fitted = DMatrix::from_element(n, len, f64::NAN);
    let mut points = Vec::with_capacity(len);
    for (l, (p, col)) in results.into_iter().enumerate() {
        if let Some(col) = col {
            for i in 0..n {
                fitted[(i, l)] = col[i];
            }
        }
        points.push(p);
    }
    let known: Vec<usize> = (0..len).filter(|&l| fitted[(0, l)].is_finite()).collect();
    if !known.is_empty() {
        for l in 0..len {
            if fitted[(0, l)].is_finite() {
                continue;
            }
            let right = known.partition_point(|&k| k < l);
            for i in 0..n {
                fitted[(i, l)] = match (right.checked_sub(1).map(|r| known[r]), known.get(right)) {
                    (Some(a), Some(&b)) => {
                        let w = (t[l] - t[a]) / (t[b] - t[a]);
                        (1.0 - w) * fitted[(i, a)] + w * fitted[(i, b)]
                    }
                    (Some(a), None) => fitted[(i, a)],
                    (None, Some(&b)) => fitted[(i, b)],
                    (None, None) => unreachable!(),
                };
            }
        }
    }
    PointwiseMixedFit { family, points, fitted_mean: fitted }
}

fn empty_point() -> (PointParams, Option<Vec<f64>>) {
    (
        PointParams {
            intercept: f64::NAN,
            re_variance: f64::NAN,
            residual_variance: None,
            zero_prob: None,
            flag: Some(PointFlag::Empty),
        },
        None,
    )
}

/// Gaussian random-intercept fit at every time point.
pub fn fit_pointwise_lmm(data: &ReplicatedFunctionalDataset) -> Result<PointwiseMixedFit> {
    let results = par::map_indexed(data.len_grid(), |l| {
        let groups = slices(data, l);
        if groups.iter().all(|g| g.is_empty()) {
            return empty_point();
        }
        match fit_random_intercept(&groups) {
            Ok(fit) => {
                let mut x = fit.fitted();
                if fit.degenerate {
                    x = vec![fit.alpha0; groups.len()];
                }
                (
                    PointParams {
                        intercept: fit.alpha0,
                        re_variance: fit.sigma_a2,
                        residual_variance: Some(fit.sigma_e2),
                        zero_prob: None,
                        flag: fit.degenerate.then_some(PointFlag::Degenerate),
                    },
                    Some(x),
                )
            }
            Err(_) => {
                let means = subject_means(&groups);
                let grand = means.iter().sum::<f64>() / means.len() as f64;
                (
                    PointParams {
                        intercept: grand,
                        re_variance: f64::NAN,
                        residual_variance: None,
                        zero_prob: None,
                        flag: Some(PointFlag::TooFewSubjects),
                    },
                    Some(means),
                )
            }
        }
    });
    Ok(assemble(data, Family::Gaussian, results))
}

fn glmm_point(
    groups: &[Vec<f64>],
    fit: Result<Option<GlmmFit>>,
    zip: bool,
    pi_cap: f64,
) -> Result<(PointParams, Option<Vec<f64>>)> {
    Ok(match fit? {
        None => (
            PointParams {
                intercept: MEAN_FLOOR.ln(),
                re_variance: 0.0,
                residual_variance: None,
                zero_prob: zip.then_some(pi_cap),
                flag: Some(PointFlag::AllZero),
            },
            Some(vec![MEAN_FLOOR; groups.len()]),
        ),
        Some(f) => {
            let mean = f.fitted_mean().into_iter().map(|m| m.max(MEAN_FLOOR)).collect();
            (
                PointParams {
                    intercept: f.beta0,
                    re_variance: f.sigma * f.sigma,
                    residual_variance: None,
                    zero_prob: zip.then_some(f.zero_prob),
                    flag: (!f.converged).then_some(PointFlag::NotConverged),
                },
                Some(mean),
            )
        }
    })
}

/// Poisson random-intercept GLMM at every time point; fitted means use the
/// posterior-mode random effect.
pub fn fit_pointwise_pmm(data: &ReplicatedFunctionalDataset) -> Result<PointwiseMixedFit> {
    let results = par::map_indexed(data.len_grid(), |l| {
        let groups = slices(data, l);
        if groups.iter().all(|g| g.is_empty()) {
            return Ok(empty_point());
        }
        glmm_point(&groups, fit_poisson_glmm(&groups, 200), false, 0.0)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(data, Family::Poisson, results))
}

/// Zero-inflated Poisson random-intercept GLMM at every time point with a
/// slice-level structural-zero probability, fitted by EM.
pub fn fit_pointwise_zipmm(data: &ReplicatedFunctionalDataset, pi_cap: f64, max_iter: usize) -> Result<PointwiseMixedFit> {
    let results = par::map_indexed(data.len_grid(), |l| {
        let groups = slices(data, l);
        if groups.iter().all(|g| g.is_empty()) {
            return Ok(empty_point());
        }
        glmm_point(&groups, fit_zip_glmm(&groups, pi_cap, max_iter), true, pi_cap)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(data, Family::Zip, results))
}
