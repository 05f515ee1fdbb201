//! The alternating BE-ZIME procedure and its π ≡ 0 special case BE-ME.

use super::likelihood::estimate_pi_segment;
use super::{CorrectedCovariate, ZeroInflationProfile};
use crate::basis::BasisSystem;
use crate::config::RunConfig;
use crate::dataset::ReplicatedFunctionalDataset;
use crate::error::{invalid, Error, Result};
use crate::grid::Segmentation;
use crate::mixedmodels::fit_random_intercept;
use nalgebra::{DMatrix, DVector};

/// Empirical zero fraction per subject and segment. Segments without
/// observations get 0 and are counted in `skipped`.
pub fn initial_pi(data: &ReplicatedFunctionalDataset, segmentation: &Segmentation) -> Result<ZeroInflationProfile> {
    let seg = segmentation.check_covers(data.grid())?;
    let m = segmentation.num_segments();
    let mut zeros = DMatrix::<f64>::zeros(data.n(), m);
    let mut seen = DMatrix::<f64>::zeros(data.n(), m);
    for i in 0..data.n() {
        for j in 0..data.replicates() {
            for (l, &s) in seg.iter().enumerate() {
                if data.is_observed(i, j, l) {
                    seen[(i, s)] += 1.0;
                    if data.value(i, j, l) == 0.0 {
                        zeros[(i, s)] += 1.0;
                    }
                }
            }
        }
    }
    let mut skipped = 0;
    let pi = DMatrix::from_fn(data.n(), m, |i, s| {
        if seen[(i, s)] == 0.0 {
            skipped += 1;
            0.0
        } else {
            zeros[(i, s)] / seen[(i, s)]
        }
    });
    let mut profile = ZeroInflationProfile::new(segmentation.clone(), pi.map(|p| p.min(0.999_999)))?;
    profile.skipped = skipped;
    Ok(profile)
}

/// Steps 1–2: adjust by `1/(1-π)`, project every replicate and shrink each
/// coefficient with its own random-intercept model. Returns the n × K
/// coefficient matrix and the number of fits that fell back to means.
fn shrunken_coefficients(
    data: &ReplicatedFunctionalDataset,
    basis: &BasisSystem,
    pi_grid: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, usize)> {
    let n = data.n();
    let k = basis.k();
    let len = data.len_grid();
    let full = data.is_fully_observed();
    let mut per_subject: Vec<Vec<DVector<f64>>> = vec![Vec::new(); n];
    let mut adjusted = vec![0.0; len];
    for i in 0..n {
        for j in 0..data.replicates() {
            let w = data.curve(i, j);
            for l in 0..len {
                adjusted[l] = match pi_grid {
                    Some(p) => w[l] / (1.0 - p[(i, l)]),
                    None => w[l],
                };
            }
            let proj = if full {
                Ok(basis.project_full(&adjusted))
            } else {
                basis.project(&adjusted, data.mask(i, j))
            };
            match proj {
                Ok(v) => per_subject[i].push(v),
                Err(Error::DegenerateInput(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if per_subject.iter().all(|v| v.is_empty()) {
        return Err(Error::DegenerateInput("no subject has a projectable replicate".into()));
    }
    let mut coeffs = DMatrix::zeros(n, k);
    let mut fallbacks = 0;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n];
    for c in 0..k {
        for i in 0..n {
            groups[i].clear();
            groups[i].extend(per_subject[i].iter().map(|v| v[c]));
        }
        match fit_random_intercept(&groups) {
            Ok(fit) => {
                let x = if fit.degenerate { vec![fit.alpha0; n] } else { fit.fitted() };
                for i in 0..n {
                    coeffs[(i, c)] = x[i];
                }
            }
            Err(Error::InvalidArgument(_)) => {
                fallbacks += 1;
                let all: Vec<f64> = groups.iter().flatten().copied().collect();
                let grand = all.iter().sum::<f64>() / all.len() as f64;
                for i in 0..n {
                    let g = &groups[i];
                    coeffs[(i, c)] = if g.is_empty() { grand } else { g.iter().sum::<f64>() / g.len() as f64 };
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((coeffs, fallbacks))
}

/// Measurement-error correction that ignores zero inflation: a single pass
/// of projection and per-coefficient shrinkage on the raw counts.
pub fn be_me(data: &ReplicatedFunctionalDataset, basis: &BasisSystem, config: &RunConfig) -> Result<CorrectedCovariate> {
    config.validate()?;
    check_grid(data, basis)?;
    let (coeffs, fallbacks) = shrunken_coefficients(data, basis, None)?;
    let curves = basis.reconstruct_rows(&coeffs);
    Ok(CorrectedCovariate {
        coeffs,
        curves,
        method: "be-me".into(),
        iterations: 1,
        converged: true,
        trace: Vec::new(),
        fallbacks,
    })
}

fn check_grid(data: &ReplicatedFunctionalDataset, basis: &BasisSystem) -> Result<()> {
    if data.grid() != basis.grid() {
        return Err(invalid("dataset and basis must share the time grid"));
    }
    Ok(())
}

/// Alternates zero-inflation adjustment, basis projection with
/// per-coefficient random-intercept shrinkage, reconstruction and the
/// segment-wise π update until the mean absolute π change falls below the
/// tolerance. Without convergence the iterate with the smallest change is
/// returned with `converged = false`.
pub fn be_zime(
    data: &ReplicatedFunctionalDataset,
    basis: &BasisSystem,
    segmentation: &Segmentation,
    config: &RunConfig,
) -> Result<(CorrectedCovariate, ZeroInflationProfile)> {
    config.validate()?;
    check_grid(data, basis)?;
    let seg = segmentation.check_covers(data.grid())?;
    let n = data.n();
    let m = segmentation.num_segments();

    // observed (count, grid index) pairs per subject-segment
    let mut cells: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n * m];
    for i in 0..n {
        for j in 0..data.replicates() {
            for (l, &s) in seg.iter().enumerate() {
                if data.is_observed(i, j, l) {
                    cells[i * m + s].push((data.value(i, j, l), l));
                }
            }
        }
    }

    let mut pi = initial_pi(data, segmentation)?.pi().map(|p| p.min(config.pi_cap));
    let mut trace = Vec::new();
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, usize)> = None;
    let mut fallbacks = 0;
    let mut skipped = 0;
    let mut counts = Vec::new();
    let mut xs = Vec::new();

    for iter in 1..=config.max_iter {
        let pi_grid = DMatrix::from_fn(n, data.len_grid(), |i, l| pi[(i, seg[l])]);
        let (coeffs, fb) = shrunken_coefficients(data, basis, Some(&pi_grid))?;
        fallbacks = fb;
        let curves = basis.reconstruct_rows(&coeffs);

        let mut next = pi.clone();
        skipped = 0;
        for i in 0..n {
            for s in 0..m {
                counts.clear();
                xs.clear();
                for &(w, l) in &cells[i * m + s] {
                    counts.push(w);
                    xs.push(curves[(i, l)].max(config.x_floor));
                }
                match estimate_pi_segment(&counts, &xs, config.pi_cap) {
                    Some(p) => next[(i, s)] = p,
                    None => skipped += 1,
                }
            }
        }
        let change = (&next - &pi).abs().sum() / (n * m) as f64;
        if !change.is_finite() {
            return Err(Error::NumericalFailure("zero-inflation update produced a non-finite value".into()));
        }
        trace.push(change);
        pi = next;
        if best.as_ref().is_none_or(|b| change < b.0) {
            best = Some((change, coeffs, curves, pi.clone(), iter));
        }
        if change < config.convergence_tol {
            break;
        }
    }

    let (change, coeffs, curves, pi, iterations) = best.expect("at least one iteration runs");
    let converged = change < config.convergence_tol;
    let mut profile = ZeroInflationProfile::new(segmentation.clone(), pi)?;
    profile.skipped = skipped;
    Ok((
        CorrectedCovariate {
            coeffs,
            curves,
            method: format!("be-zime-m{m}"),
            iterations,
            converged,
            trace,
            fallbacks,
        },
        profile,
    ))
}
