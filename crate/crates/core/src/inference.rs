//! Bootstrap inference for the functional coefficient.

use crate::basis::BasisSystem;
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::quantreg::{check_rank, fit_joint};
use crate::rng::substream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Distribution of the wild-bootstrap multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    /// Bernoulli(0.5) on {0, 1}.
    #[default]
    Bernoulli,
    /// Equiprobable ±1.
    Rademacher,
}

impl Multiplier {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        let heads = rng.random::<bool>();
        match (self, heads) {
            (Self::Bernoulli, true) => 1.0,
            (Self::Bernoulli, false) => 0.0,
            (Self::Rademacher, true) => 1.0,
            (Self::Rademacher, false) => -1.0,
        }
    }
}

impl std::str::FromStr for Multiplier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Self::Bernoulli),
            "rademacher" => Ok(Self::Rademacher),
            _ => Err(invalid(format!("unknown multiplier '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTestResult {
    /// `∫β̂(t)² dt` of the least-squares fit.
    pub stat: f64,
    pub boot_stats: Vec<f64>,
    pub p_value: f64,
    pub b: usize,
}

fn hstack(xhat: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k, p) = (xhat.nrows(), xhat.ncols(), z.ncols());
    DMatrix::from_fn(n, k + p, |i, c| if c < k { xhat[(i, c)] } else { z[(i, c - k)] })
}

/// Least-squares hat map `(DᵀD)⁻¹Dᵀ` of a full-rank design.
fn ls_operator(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rank(d)?;
    let svd = d.clone().svd(true, true);
    svd.pseudo_inverse(0.0).map_err(|e| Error::NumericalFailure(e.to_string()))
}

/// Wild-bootstrap test of `H₀: β ≡ 0` at the mean level.
///
/// The full model regresses `y` on `[xhat | z]` by least squares, the
/// reduced model on `z` alone. Pseudo-responses `ŷ + ξ ε̂` are built from the
/// reduced fit and refitted with the full model.
pub fn wild_bootstrap_global_test(
    y: &[f64],
    xhat: &DMatrix<f64>,
    z: &DMatrix<f64>,
    basis: &BasisSystem,
    b: usize,
    seed: u64,
    multiplier: Multiplier,
) -> Result<GlobalTestResult> {
    let n = y.len();
    let k = xhat.ncols();
    if xhat.nrows() != n || z.nrows() != n {
        return Err(invalid("y, xhat and z must have the same number of rows"));
    }
    if k != basis.k() {
        return Err(invalid(format!("xhat has {k} columns but the basis has {}", basis.k())));
    }
    if b == 0 {
        return Err(invalid("need at least one bootstrap draw"));
    }
    let full = ls_operator(&hstack(xhat, z))?.rows(0, k).into_owned();
    let reduced = ls_operator(z)?;
    let yv = DVector::from_column_slice(y);
    let yhat = z * (&reduced * &yv);
    let resid = &yv - &yhat;
    let gram = basis.gram();
    let norm = |g: DVector<f64>| g.dot(&(gram * &g)).max(0.0);
    let stat = norm(&full * &yv);

    let boot_stats = par::map_indexed(b, |r| {
        let mut rng = substream(seed, &[r as u64]);
        let yb = DVector::from_fn(n, |i, _| yhat[i] + multiplier.draw(&mut rng) * resid[i]);
        norm(&full * yb)
    });
    let exceed = boot_stats.iter().filter(|&&s| s > stat).count();
    Ok(GlobalTestResult { stat, p_value: exceed as f64 / b as f64, boot_stats, b })
}

/// Pointwise percentile intervals for `β(t, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseBands {
    pub taus: Vec<f64>,
    pub level: f64,
    /// H × L curves of the fit to the original sample.
    pub estimate: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// Median of the bootstrap curves.
    pub median: DMatrix<f64>,
    /// Draws kept.
    pub b: usize,
    /// Draws dropped after ten rank-deficient resamples.
    pub flagged: usize,
}

const MAX_REDRAWS: u64 = 10;

/// Lower and upper order statistics of a sorted sample for a two-sided
/// percentile interval.
fn percentile_bounds(sorted: &[f64], level: f64) -> (f64, f64) {
    let b = sorted.len();
    let alpha = 1.0 - level;
    let lo = ((b as f64 * alpha / 2.0 + 1e-9).floor() as usize).min(b - 1);
    let hi = ((b as f64 * (1.0 - alpha / 2.0) - 1e-9).ceil() as usize).clamp(1, b) - 1;
    (sorted[lo], sorted[hi])
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let b = sorted.len();
    if b % 2 == 1 {
        sorted[b / 2]
    } else {
        0.5 * (sorted[b / 2 - 1] + sorted[b / 2])
    }
}

/// Case-resampling bootstrap of the joint quantile fit.
#[allow(clippy::too_many_arguments)]
pub fn pointwise_bootstrap_ci(
    y: &[f64],
    xhat: &DMatrix<f64>,
    z: &DMatrix<f64>,
    basis: &BasisSystem,
    taus: &[f64],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<PointwiseBands> {
    let n = y.len();
    if xhat.nrows() != n || z.nrows() != n {
        return Err(invalid("y, xhat and z must have the same number of rows"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level must lie in (0, 1)"));
    }
    if b < 2 {
        return Err(invalid("need at least two bootstrap draws"));
    }
    let estimate = fit_joint(y, xhat, z, taus)?.with_curves(basis).beta_curves;

    let draws: Vec<Result<Option<DMatrix<f64>>>> = par::map_indexed(b, |r| {
        for attempt in 0..MAX_REDRAWS {
            let mut rng = substream(seed, &[r as u64, attempt]);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let xb = xhat.select_rows(&rows);
            let zb = z.select_rows(&rows);
            match fit_joint(&yb, &xb, &zb, taus) {
                Ok(fit) => return Ok(Some(fit.with_curves(basis).beta_curves)),
                Err(Error::RankDeficient { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    });
    let mut kept = Vec::with_capacity(b);
    for d in draws {
        if let Some(m) = d? {
            kept.push(m);
        }
    }
    let flagged = b - kept.len();
    if kept.is_empty() {
        return Err(Error::DegenerateInput("every bootstrap resample was rank deficient".into()));
    }
    let (h, len) = estimate.shape();
    let mut lower = DMatrix::zeros(h, len);
    let mut upper = DMatrix::zeros(h, len);
    let mut median = DMatrix::zeros(h, len);
    let mut col = vec![0.0; kept.len()];
    for r in 0..h {
        for l in 0..len {
            for (c, m) in col.iter_mut().zip(&kept) {
                *c = m[(r, l)];
            }
            col.sort_by(f64::total_cmp);
            let (lo, hi) = percentile_bounds(&col, level);
            lower[(r, l)] = lo;
            upper[(r, l)] = hi;
            median[(r, l)] = median_sorted(&col);
        }
    }
    Ok(PointwiseBands { taus: taus.to_vec(), level, estimate, lower, upper, median, b: kept.len(), flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;
    use crate::grid::TimeGrid;
    use rand_distr::{Distribution, StandardNormal};

    fn design(n: usize, seed: u64, signal: f64) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>, BasisSystem) {
        let grid = TimeGrid::equispaced(50).unwrap();
        let basis = BasisSystem::new(BasisKind::Cosine, 3, &grid).unwrap();
        let mut rng = substream(seed, &[99]);
        let xhat = DMatrix::from_fn(n, 3, |_, _| StandardNormal.sample(&mut rng));
        let z = DMatrix::from_fn(n, 2, |_, c| if c == 0 { 1.0 } else { StandardNormal.sample(&mut rng) });
        let y = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                signal * xhat[(i, 1)] + 0.3 * z[(i, 1)] + 0.5 * e
            })
            .collect();
        (y, xhat, z, basis)
    }

    #[test]
    fn percentile_bounds_of_two_draws_are_the_extremes() {
        assert_eq!(percentile_bounds(&[1.0, 4.0], 0.95), (1.0, 4.0));
        let v: Vec<f64> = (0..200).map(f64::from).collect();
        assert_eq!(percentile_bounds(&v, 0.9), (10.0, 189.0));
    }

    #[test]
    fn zero_estimate_gives_unit_p_value() {
        // xhat orthogonal to the intercept and to y gives β̂ = 0.
        let n = 30;
        let mut rng = substream(5, &[0]);
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = DMatrix::from_element(n, 1, 1.0);
        let ones = DVector::from_element(n, 1.0).normalize();
        let yc = DVector::from_column_slice(&y);
        let yc = (&yc - &ones * ones.dot(&yc)).normalize();
        let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        for q in [&ones, &yc] {
            v -= q * q.dot(&v);
        }
        let xhat = DMatrix::from_column_slice(n, 1, v.as_slice());
        let grid = TimeGrid::equispaced(20).unwrap();
        let basis = BasisSystem::new(BasisKind::Cosine, 1, &grid).unwrap();
        let res = wild_bootstrap_global_test(&y, &xhat, &z, &basis, 100, 1, Multiplier::Bernoulli).unwrap();
        assert!(res.stat < 1e-20);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn strong_signal_rejects_and_is_reproducible() {
        let (y, xhat, z, basis) = design(120, 3, 1.0);
        let a = wild_bootstrap_global_test(&y, &xhat, &z, &basis, 200, 11, Multiplier::Bernoulli).unwrap();
        let b = wild_bootstrap_global_test(&y, &xhat, &z, &basis, 200, 11, Multiplier::Bernoulli).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.p_value, 0.0);
        assert_eq!(a.boot_stats.len(), 200);
        let r = wild_bootstrap_global_test(&y, &xhat, &z, &basis, 200, 11, Multiplier::Rademacher).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn rank_deficient_reduced_model_is_an_error() {
        let (y, xhat, _, basis) = design(30, 4, 0.0);
        let z = DMatrix::from_fn(30, 2, |_, _| 1.0);
        let err = wild_bootstrap_global_test(&y, &xhat, &z, &basis, 100, 1, Multiplier::Bernoulli).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn bands_contain_the_bootstrap_median() {
        let (y, xhat, z, basis) = design(60, 5, 0.8);
        let bands = pointwise_bootstrap_ci(&y, &xhat, &z, &basis, &[0.25, 0.5, 0.75], 40, 0.95, 9).unwrap();
        assert_eq!(bands.b + bands.flagged, 40);
        for (i, m) in bands.median.iter().enumerate() {
            assert!(bands.lower[i] <= *m && *m <= bands.upper[i]);
        }
        let again = pointwise_bootstrap_ci(&y, &xhat, &z, &basis, &[0.25, 0.5, 0.75], 40, 0.95, 9).unwrap();
        assert_eq!(bands, again);
    }

    #[test]
    fn two_draw_bands_are_the_draw_extremes() {
        let (y, xhat, z, basis) = design(40, 6, 0.8);
        let bands = pointwise_bootstrap_ci(&y, &xhat, &z, &basis, &[0.5], 2, 0.95, 2).unwrap();
        for i in 0..bands.lower.len() {
            assert!(bands.lower[i] <= bands.upper[i]);
            assert!((bands.median[i] - 0.5 * (bands.lower[i] + bands.upper[i])).abs() < 1e-12);
        }
    }
}
