use crate::error::{CliError, CliResult};
use nalgebra::DMatrix;

/// Cross-subject mean trajectory.
pub fn mean_curve(curves: &DMatrix<f64>) -> Vec<f64> {
    let n = curves.nrows() as f64;
    curves.column_iter().map(|c| c.sum() / n).collect()
}

/// `(X̂ − x_L) / (x_U − x_L)` with `x_L`, `x_U` the extremes of the
/// reference mean trajectory.
pub fn scale_curves(curves: &DMatrix<f64>, reference_mean: &[f64]) -> CliResult<DMatrix<f64>> {
    let lo = reference_mean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = reference_mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(CliError::Data("reference mean trajectory is flat; cannot scale".into()));
    }
    Ok(curves.map(|v| (v - lo) / (hi - lo)))
}

/// `L⁻¹ Σ_t |β_a(t, τ) − β_b(t, τ)|` for each row.
pub fn mean_abs_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> CliResult<Vec<f64>> {
    if a.shape() != b.shape() || a.ncols() == 0 {
        return Err(CliError::Data(format!("coefficient grids differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok((0..a.nrows())
        .map(|h| a.row(h).iter().zip(b.row(h).iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.ncols() as f64)
        .collect())
}
