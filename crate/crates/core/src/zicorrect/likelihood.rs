//! Zero-inflated Poisson likelihood and the segment-wise π update.

use crate::error::{invalid, Result};
use statrs::function::gamma::ln_gamma;

/// Log-probability of count `w` under a ZIP law with Poisson mean `x` and
/// structural-zero probability `pi`.
pub fn zip_loglik_point(w: f64, x: f64, pi: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("Poisson mean must be positive, got {x}")));
    }
    if !(w >= 0.0) || w.fract() != 0.0 {
        return Err(invalid(format!("count must be a non-negative integer, got {w}")));
    }
    if !(0.0..1.0).contains(&pi) {
        return Err(invalid(format!("zero probability must lie in [0, 1), got {pi}")));
    }
    Ok(if w == 0.0 {
        (pi + (1.0 - pi) * (-x).exp()).ln()
    } else {
        (1.0 - pi).ln() + w * x.ln() - x - ln_gamma(w + 1.0)
    })
}

/// Log-likelihood of a segment's observations as a function of π.
pub fn segment_loglik(counts: &[f64], xhat: &[f64], pi: f64) -> f64 {
    counts
        .iter()
        .zip(xhat)
        .map(|(&w, &x)| {
            if w == 0.0 {
                (pi + (1.0 - pi) * (-x).exp()).ln()
            } else {
                (1.0 - pi).ln() + w * x.ln() - x - ln_gamma(w + 1.0)
            }
        })
        .sum()
}

/// Maximizer over `[0, pi_cap]` of the segment log-likelihood, with `xhat`
/// already floored. `None` when the segment has no observations.
///
/// The log-likelihood is strictly concave in π, so the maximizer is the
/// boundary or the unique root of the score, located by bisection.
pub fn estimate_pi_segment(counts: &[f64], xhat: &[f64], pi_cap: f64) -> Option<f64> {
    debug_assert_eq!(counts.len(), xhat.len());
    if counts.is_empty() {
        return None;
    }
    let positives = counts.iter().filter(|&&w| w != 0.0).count() as f64;
    let p0: Vec<f64> = counts
        .iter()
        .zip(xhat)
        .filter(|(&w, _)| w == 0.0)
        .map(|(_, &x)| (-x).exp())
        .collect();
    if p0.is_empty() {
        return Some(0.0);
    }
    let score = |pi: f64| -> f64 {
        p0.iter().map(|&p| (1.0 - p) / (pi + (1.0 - pi) * p)).sum::<f64>() - positives / (1.0 - pi)
    };
    if score(0.0) <= 0.0 {
        return Some(0.0);
    }
    if score(pi_cap) >= 0.0 {
        return Some(pi_cap);
    }
    let (mut lo, mut hi) = (0.0, pi_cap);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_formula() {
        assert!((zip_loglik_point(0.0, 5.0, 0.0).unwrap() + 5.0).abs() < 1e-14);
        assert!((zip_loglik_point(0.0, 800.0, 0.3).unwrap() - 0.3f64.ln()).abs() < 1e-14);
        let direct = 0.5f64.ln() + 3.0 * 2f64.ln() - 2.0 - 6f64.ln();
        assert!((zip_loglik_point(3.0, 2.0, 0.5).unwrap() - direct).abs() < 1e-13);
        assert!(zip_loglik_point(1.0, 0.0, 0.1).is_err());
        assert!(zip_loglik_point(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn no_zeros_gives_zero() {
        assert_eq!(estimate_pi_segment(&[3.0, 1.0, 4.0], &[2.0; 3], 0.99), Some(0.0));
    }

    #[test]
    fn all_zeros_hits_cap() {
        assert_eq!(estimate_pi_segment(&[0.0; 6], &[8.0; 6], 0.99), Some(0.99));
    }

    #[test]
    fn empty_segment() {
        assert_eq!(estimate_pi_segment(&[], &[], 0.99), None);
    }

    #[test]
    fn matches_grid_search() {
        let w = [0.0, 0.0, 0.0, 0.0, 0.0, 7.0, 4.0, 6.0, 5.0, 3.0];
        let x = [5.0; 10];
        let est = estimate_pi_segment(&w, &x, 0.99).unwrap();
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for g in 0..=9900 {
            let pi = g as f64 * 1e-4;
            let v = segment_loglik(&w, &x, pi);
            if v > best {
                best = v;
                arg = pi;
            }
        }
        assert!((est - arg).abs() < 1e-3, "{est} vs {arg}");
    }
}
