//! Reference estimators: replicate-based curves, pointwise mixed models and
//! the oracle.

use super::CorrectedCovariate;
use crate::basis::BasisSystem;
use crate::config::RunConfig;
use crate::dataset::ReplicatedFunctionalDataset;
use crate::error::{invalid, Result};
use crate::mixedmodels::{fit_pointwise_lmm, fit_pointwise_pmm, fit_pointwise_zipmm, Family};
use nalgebra::DMatrix;

/// Linear interpolation over unobserved points, constant beyond the ends.
/// `None` when nothing is observed.
pub(crate) fn fill_gaps(values: &[f64], observed: &[bool], t: &[f64]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&l| observed[l]).collect();
    if known.is_empty() {
        return None;
    }
    Some(
        (0..values.len())
            .map(|l| {
                if observed[l] {
                    return values[l];
                }
                let r = known.partition_point(|&k| k < l);
                match (r.checked_sub(1).map(|a| known[a]), known.get(r)) {
                    (Some(a), Some(&b)) => {
                        let w = (t[l] - t[a]) / (t[b] - t[a]);
                        (1.0 - w) * values[a] + w * values[b]
                    }
                    (Some(a), None) => values[a],
                    (None, Some(&b)) => values[b],
                    (None, None) => unreachable!(),
                }
            })
            .collect(),
    )
}

fn finish(curves: DMatrix<f64>, basis: &BasisSystem, method: &str) -> CorrectedCovariate {
    CorrectedCovariate {
        coeffs: basis.project_rows(&curves),
        curves,
        method: method.into(),
        iterations: 1,
        converged: true,
        trace: Vec::new(),
        fallbacks: 0,
    }
}

fn check_grid(data: &ReplicatedFunctionalDataset, basis: &BasisSystem) -> Result<()> {
    if data.grid() != basis.grid() {
        return Err(invalid("dataset and basis must share the time grid"));
    }
    Ok(())
}

/// The first replicate of every subject taken at face value (the first
/// replicate with any observation when replicate one is empty).
pub fn naive_estimator(data: &ReplicatedFunctionalDataset, basis: &BasisSystem) -> Result<CorrectedCovariate> {
    check_grid(data, basis)?;
    let t = data.grid().points();
    let mut curves = DMatrix::zeros(data.n(), data.len_grid());
    for i in 0..data.n() {
        let row = (0..data.replicates())
            .find_map(|j| fill_gaps(data.curve(i, j), data.mask(i, j), t))
            .ok_or_else(|| crate::Error::Data(format!("subject {i} has no observations")))?;
        curves.row_mut(i).copy_from_slice(&row);
    }
    Ok(finish(curves, basis, "naive"))
}

/// Pointwise mean over observed replicates.
pub fn average_estimator(data: &ReplicatedFunctionalDataset, basis: &BasisSystem) -> Result<CorrectedCovariate> {
    check_grid(data, basis)?;
    let t = data.grid().points();
    let len = data.len_grid();
    let mut curves = DMatrix::zeros(data.n(), len);
    for i in 0..data.n() {
        let mut mean = vec![0.0; len];
        let mut seen = vec![false; len];
        for l in 0..len {
            let (s, c) = data.slice(i, l).fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            if c > 0 {
                mean[l] = s / c as f64;
                seen[l] = true;
            }
        }
        let row = fill_gaps(&mean, &seen, t).ok_or_else(|| crate::Error::Data(format!("subject {i} has no observations")))?;
        curves.row_mut(i).copy_from_slice(&row);
    }
    Ok(finish(curves, basis, "average"))
}

/// The true curves with their projections.
pub fn oracle_estimator(truth: &DMatrix<f64>, basis: &BasisSystem) -> Result<CorrectedCovariate> {
    if truth.ncols() != basis.grid().len() {
        return Err(invalid("true curves must be sampled on the basis grid"));
    }
    Ok(finish(truth.clone(), basis, "oracle"))
}

/// Subject trajectories fitted by a mixed model at every time point.
pub fn pointwise_estimator(
    data: &ReplicatedFunctionalDataset,
    basis: &BasisSystem,
    family: Family,
    config: &RunConfig,
) -> Result<CorrectedCovariate> {
    check_grid(data, basis)?;
    let (fit, name) = match family {
        Family::Gaussian => (fit_pointwise_lmm(data)?, "p-lmm"),
        Family::Poisson => (fit_pointwise_pmm(data)?, "p-pmm"),
        Family::Zip => (fit_pointwise_zipmm(data, config.pi_cap, 1000)?, "p-zipmm"),
    };
    if fit.fitted_mean.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::DegenerateInput("no time point could be fitted".into()));
    }
    let mut out = finish(fit.fitted_mean.clone(), basis, name);
    out.fallbacks = fit.flagged();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;
    use crate::grid::TimeGrid;

    fn basis(len: usize) -> BasisSystem {
        BasisSystem::new(BasisKind::Cosine, len.min(3), &TimeGrid::equispaced(len).unwrap()).unwrap()
    }

    #[test]
    fn naive_takes_first_replicate() {
        let g = TimeGrid::equispaced(3).unwrap();
        let d = ReplicatedFunctionalDataset::fully_observed(1, 2, g, vec![0.0, 2.0, 4.0, 9.0, 9.0, 9.0]).unwrap();
        let c = naive_estimator(&d, &basis(3)).unwrap();
        assert_eq!(c.curves.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn single_replicate_naive_equals_average() {
        let g = TimeGrid::equispaced(4).unwrap();
        let d = ReplicatedFunctionalDataset::fully_observed(2, 1, g, vec![1.0, 0.0, 3.0, 2.0, 5.0, 5.0, 0.0, 1.0]).unwrap();
        let b = basis(4);
        assert_eq!(naive_estimator(&d, &b).unwrap().curves, average_estimator(&d, &b).unwrap().curves);
    }

    #[test]
    fn average_is_mask_aware() {
        let g = TimeGrid::equispaced(2).unwrap();
        // replicates {0, 2}, then {2, missing, 4}
        let d = ReplicatedFunctionalDataset::new(
            1,
            3,
            g,
            vec![0.0, 2.0, 2.0, 7.0, 2.0, 4.0],
            vec![true, true, true, false, true, true],
        )
        .unwrap();
        let c = average_estimator(&d, &basis(2)).unwrap();
        assert!((c.curves[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((c.curves[(0, 1)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gaps_are_interpolated() {
        let t = [0.0, 0.25, 0.5, 1.0];
        let v = fill_gaps(&[1.0, 0.0, 3.0, 0.0], &[true, false, true, false], &t).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 3.0]);
        assert!(fill_gaps(&[0.0], &[false], &[0.0]).is_none());
    }

    #[test]
    fn oracle_reproduces_truth() {
        let b = basis(50);
        let zero = DMatrix::zeros(2, 50);
        assert!(oracle_estimator(&zero, &b).unwrap().coeffs.iter().all(|&v| v == 0.0));
        let ones = DMatrix::from_element(1, 50, 1.0);
        let c = oracle_estimator(&ones, &b).unwrap();
        assert!((c.coeffs[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(c.curves, ones);
        let span = DMatrix::from_fn(1, 50, |_, l| 2.0 * b.eval()[(2, l)]);
        let c = oracle_estimator(&span, &b).unwrap();
        let back = b.reconstruct_rows(&c.coeffs);
        assert!((back - span).abs().max() < 1e-10);
    }
}
