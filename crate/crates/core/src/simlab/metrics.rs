//! Accuracy metrics for coefficient curves, latent curves and
//! zero-inflation profiles.

use crate::error::{invalid, Result};
use crate::zicorrect::ZeroInflationProfile;
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaMetrics {
    pub abias2: f64,
    pub avar: f64,
    pub mise: f64,
    /// Only one replicate: `avar` is reported as 0.
    pub single_replicate: bool,
}

/// `ABias² = L⁻¹ Σ_l (β̄(t_l) − β(t_l))²`, `AVar = (RL)⁻¹ Σ_r Σ_l (β̂_r − β̄)²`
/// and `MISE = ABias² + AVar` over the rows of `estimates` (R × L).
pub fn compute_beta_metrics(estimates: &DMatrix<f64>, truth: &[f64]) -> Result<BetaMetrics> {
    let r = estimates.nrows();
    let len = estimates.ncols();
    if r == 0 || len != truth.len() {
        return Err(invalid("estimates must be R × L with R ≥ 1 and L matching the truth"));
    }
    let mut abias2 = 0.0;
    let mut avar = 0.0;
    for l in 0..len {
        let col = estimates.column(l);
        let mean = col.iter().sum::<f64>() / r as f64;
        abias2 += (mean - truth[l]).powi(2);
        avar += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    abias2 /= len as f64;
    avar /= (r * len) as f64;
    Ok(BetaMetrics { abias2, avar, mise: abias2 + avar, single_replicate: r == 1 })
}

/// `(nL)⁻¹ Σ_i Σ_l (X̂_i(t_l) − X_i(t_l))²`.
pub fn compute_x_mise(x_hat: &DMatrix<f64>, x_true: &DMatrix<f64>) -> Result<f64> {
    if x_hat.shape() != x_true.shape() || x_hat.is_empty() {
        return Err(invalid("curve matrices must share a non-empty shape"));
    }
    Ok((x_hat - x_true).map(|d| d * d).sum() / x_hat.len() as f64)
}

/// Subject-averaged `∫ (π̂_i − π_i)²` and `∫ (π̂_i − π̃_i)²`, where `π̃_i` is
/// the truth averaged over each working segment of `pi_hat`. Both integrals
/// are exact for piecewise-constant profiles.
pub fn compute_pi_metrics(pi_hat: &ZeroInflationProfile, pi_true: &ZeroInflationProfile) -> Result<(f64, f64)> {
    let n = pi_hat.n();
    if pi_true.n() != n {
        return Err(invalid("profiles must cover the same subjects"));
    }
    let work = pi_hat.segmentation();
    let truth = pi_true.segmentation();
    let mut cuts: Vec<f64> = work.boundaries().iter().chain(truth.boundaries()).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    // each piece lies inside one working and one true segment
    let pieces: Vec<(f64, usize, usize)> = cuts
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[1] - w[0], work.segment_of(mid), truth.segment_of(mid))
        })
        .collect();
    let lengths = work.lengths();
    let (mut mse, mut dagger) = (0.0, 0.0);
    for i in 0..n {
        let mut avg = vec![0.0; work.num_segments()];
        for &(w, m, s) in &pieces {
            avg[m] += w * pi_true.pi()[(i, s)] / lengths[m];
        }
        for &(w, m, s) in &pieces {
            let est = pi_hat.pi()[(i, m)];
            mse += w * (est - pi_true.pi()[(i, s)]).powi(2);
            dagger += w * (est - avg[m]).powi(2);
        }
    }
    Ok((mse / n as f64, dagger / n as f64))
}

/// `(MISE_separate − MISE_joint) / MISE_separate`.
pub fn improvement_ratio(mise_separate: f64, mise_joint: f64) -> f64 {
    (mise_separate - mise_joint) / mise_separate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Closure, Segmentation};

    #[test]
    fn exact_estimates_have_zero_error() {
        let truth = [0.1, 0.4, 0.2];
        let est = DMatrix::from_row_slice(2, 3, &[0.1, 0.4, 0.2, 0.1, 0.4, 0.2]);
        let m = compute_beta_metrics(&est, &truth).unwrap();
        assert_eq!((m.abias2, m.avar, m.mise), (0.0, 0.0, 0.0));
    }

    #[test]
    fn replicate_offsets_are_pure_variance() {
        let truth = [1.0, 2.0];
        let est = DMatrix::from_row_slice(3, 2, &[1.5, 2.5, 0.5, 1.5, 1.0, 2.0]);
        let m = compute_beta_metrics(&est, &truth).unwrap();
        assert!(m.abias2.abs() < 1e-15);
        assert!((m.avar - (0.25 + 0.25 + 0.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_replicate_hand_instance() {
        // β̄ = (1.5, 0.0); bias² = ((1.5-1)² + (0-0.5)²)/2 = 0.25
        // var = ((0.25+0.25) + (1+1)) / 4 = 0.625
        let est = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, 1.0]);
        let m = compute_beta_metrics(&est, &[1.0, 0.5]).unwrap();
        assert!((m.abias2 - 0.25).abs() < 1e-15);
        assert!((m.avar - 0.625).abs() < 1e-15);
        assert_eq!(m.mise, m.abias2 + m.avar);
    }

    #[test]
    fn x_mise_values() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(compute_x_mise(&a, &a).unwrap(), 0.0);
        assert!((compute_x_mise(&a.add_scalar(0.5), &a).unwrap() - 0.25).abs() < 1e-15);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 5.0, 3.0]);
        assert!((compute_x_mise(&b, &a).unwrap() - (1.0 + 0.0 + 4.0 + 1.0) / 4.0).abs() < 1e-15);
    }

    fn case1(n: usize) -> ZeroInflationProfile {
        let seg = Segmentation::with_closure(vec![0.0, 0.5, 1.0], Closure::LeftClosed).unwrap();
        ZeroInflationProfile::shared(n, seg, &[0.6, 0.4]).unwrap()
    }

    #[test]
    fn single_working_segment_against_case_one() {
        let truth = case1(3);
        let perfect_mean = ZeroInflationProfile::shared(3, Segmentation::equal(1).unwrap(), &[0.5]).unwrap();
        let (mse, dagger) = compute_pi_metrics(&perfect_mean, &truth).unwrap();
        assert!((mse - 0.01).abs() < 1e-15);
        assert!(dagger.abs() < 1e-15);
    }

    #[test]
    fn aligned_segments_are_exact() {
        let truth = case1(2);
        let est = ZeroInflationProfile::shared(2, Segmentation::equal(2).unwrap(), &[0.6, 0.4]).unwrap();
        let (mse, dagger) = compute_pi_metrics(&est, &truth).unwrap();
        assert!(mse.abs() < 1e-15 && dagger.abs() < 1e-15);
    }
}
