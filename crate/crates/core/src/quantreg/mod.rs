//! Scalar-on-function quantile regression on basis coefficients.
//!
//! With `β(t, τ) = Σ_k γ_k(τ) φ_k(t)` the functional term `∫ β X` becomes
//! `x̂ᵀγ` for the projections `x̂_k = ∫ X φ_k`, so each fit is a linear
//! quantile regression of `Y` on `[x̂ | Z]`. Fits are exact: the dual of the
//! check-loss LP is solved by a bounded simplex and the coefficients are
//! read off its multipliers. The joint fit stacks all levels into one LP
//! with non-crossing constraints at every design row.

mod simplex;

pub use simplex::{solve as solve_lp, LpProblem, LpSolution};

use crate::basis::BasisSystem;
use crate::config::validate_taus;
use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// One quantile level fitted on its own.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparateFit {
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub objective: f64,
}

/// Coefficients over a grid of quantile levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFitResult {
    pub taus: Vec<f64>,
    /// H × K functional coefficients.
    pub gamma: DMatrix<f64>,
    /// H × p scalar coefficients.
    pub theta: DMatrix<f64>,
    /// H × L coefficient curves; empty until [`Self::with_curves`].
    pub beta_curves: DMatrix<f64>,
    pub objective: Vec<f64>,
    pub joint: bool,
}

impl QuantileFitResult {
    pub fn with_curves(mut self, basis: &BasisSystem) -> Self {
        let h = self.taus.len();
        let len = basis.grid().len();
        let mut curves = DMatrix::zeros(h, len);
        for r in 0..h {
            let g: Vec<f64> = self.gamma.row(r).iter().copied().collect();
            curves.row_mut(r).copy_from_slice(&basis.beta_curve(&g));
        }
        self.beta_curves = curves;
        self
    }

    /// n × H fitted quantiles.
    pub fn fitted(&self, xhat: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
        xhat * self.gamma.transpose() + z * self.theta.transpose()
    }
}

pub fn beta_curve(gamma: &[f64], basis: &BasisSystem) -> Vec<f64> {
    basis.beta_curve(gamma)
}

fn design(y: &[f64], xhat: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = y.len();
    if xhat.nrows() != n || z.nrows() != n {
        return Err(invalid("outcome, coefficients and covariates must have the same rows"));
    }
    let p = xhat.ncols() + z.ncols();
    if p == 0 {
        return Err(invalid("design has no columns"));
    }
    if n <= p {
        return Err(invalid(format!("need more observations ({n}) than coefficients ({p})")));
    }
    if y.iter().chain(xhat.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite value in the regression data"));
    }
    let mut d = DMatrix::zeros(n, p);
    d.columns_mut(0, xhat.ncols()).copy_from(xhat);
    d.columns_mut(xhat.ncols(), z.ncols()).copy_from(z);
    check_rank(&d)?;
    Ok(d)
}

/// Errors with the null direction when the design is numerically singular.
pub(crate) fn check_rank(d: &DMatrix<f64>) -> Result<()> {
    let svd = d.clone().svd(false, true);
    let s = &svd.singular_values;
    let (imax, smax) = s.argmax();
    let (imin, smin) = s.argmin();
    let _ = imax;
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        let vt = svd.v_t.expect("requested");
        let direction = vt.row(imin).iter().copied().collect();
        return Err(Error::RankDeficient { direction });
    }
    Ok(())
}

/// Start the dual at a_ih = 1 for rows whose least-squares residual lies
/// above its τ_h quantile.
fn warm_start(y: &[f64], d: &DMatrix<f64>, taus: &[f64]) -> Vec<bool> {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let resid = match d.clone().svd(true, true).solve(&yv, 1e-12) {
        Ok(b) => yv - d * b,
        Err(_) => yv,
    };
    let mut sorted: Vec<f64> = resid.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut start = vec![false; n * (2 * taus.len() - 1)];
    for (h, &tau) in taus.iter().enumerate() {
        let q = sorted[((tau * n as f64).floor() as usize).min(n - 1)];
        for i in 0..n {
            start[h * n + i] = resid[i] > q;
        }
    }
    start
}

fn solve_stacked(y: &[f64], d: &DMatrix<f64>, taus: &[f64]) -> Result<Vec<DVector<f64>>> {
    let n = y.len();
    let p = d.ncols();
    let h = taus.len();
    let cols = n * h + n * (h - 1);
    let mut a = DMatrix::zeros(h * p, cols);
    let mut b = DVector::zeros(h * p);
    let col_sums: Vec<f64> = (0..p).map(|k| d.column(k).sum()).collect();
    for (hh, &tau) in taus.iter().enumerate() {
        for k in 0..p {
            b[hh * p + k] = (1.0 - tau) * col_sums[k];
        }
        for i in 0..n {
            for k in 0..p {
                a[(hh * p + k, hh * n + i)] = d[(i, k)];
            }
        }
    }
    for hh in 0..h - 1 {
        for i in 0..n {
            let c = n * h + hh * n + i;
            for k in 0..p {
                a[(hh * p + k, c)] = -d[(i, k)];
                a[((hh + 1) * p + k, c)] = d[(i, k)];
            }
        }
    }
    let mut c = DVector::zeros(cols);
    for hh in 0..h {
        for i in 0..n {
            c[hh * n + i] = -y[i];
        }
    }
    let mut upper = vec![1.0; n * h];
    upper.extend(std::iter::repeat_n(f64::INFINITY, n * (h - 1)));
    let problem = LpProblem { a, b, c, lower: vec![0.0; cols], upper };
    let start = warm_start(y, d, taus);
    let sol = simplex::solve(&problem, Some(&start))?;
    Ok((0..h).map(|hh| -sol.duals.rows(hh * p, p).into_owned()).collect())
}

fn objective(y: &[f64], d: &DMatrix<f64>, beta: &DVector<f64>, tau: f64) -> f64 {
    let fit = d * beta;
    y.iter().zip(fit.iter()).map(|(yi, fi)| check_loss(yi - fi, tau)).sum()
}

/// Minimizes `Σ_i ρ_τ(Y_i − x̂_iᵀγ − Z_iᵀθ)` exactly.
pub fn fit_separate(y: &[f64], xhat: &DMatrix<f64>, z: &DMatrix<f64>, tau: f64) -> Result<SeparateFit> {
    validate_taus(&[tau])?;
    let d = design(y, xhat, z)?;
    let beta = solve_stacked(y, &d, &[tau])?.remove(0);
    let k = xhat.ncols();
    Ok(SeparateFit {
        objective: objective(y, &d, &beta, tau),
        gamma: beta.rows(0, k).iter().copied().collect(),
        theta: beta.rows(k, z.ncols()).iter().copied().collect(),
    })
}

fn assemble(y: &[f64], d: &DMatrix<f64>, k: usize, taus: &[f64], betas: Vec<DVector<f64>>, joint: bool) -> QuantileFitResult {
    let h = taus.len();
    let p = d.ncols();
    QuantileFitResult {
        taus: taus.to_vec(),
        gamma: DMatrix::from_fn(h, k, |r, c| betas[r][c]),
        theta: DMatrix::from_fn(h, p - k, |r, c| betas[r][k + c]),
        beta_curves: DMatrix::zeros(h, 0),
        objective: taus.iter().zip(&betas).map(|(&t, b)| objective(y, d, b, t)).collect(),
        joint,
    }
}

/// Fits every level in one LP under non-crossing constraints at the design
/// rows.
pub fn fit_joint(y: &[f64], xhat: &DMatrix<f64>, z: &DMatrix<f64>, taus: &[f64]) -> Result<QuantileFitResult> {
    validate_taus(taus)?;
    let d = design(y, xhat, z)?;
    let betas = solve_stacked(y, &d, taus)?;
    Ok(assemble(y, &d, xhat.ncols(), taus, betas, true))
}

/// Fits every level independently.
pub fn fit_separate_all(y: &[f64], xhat: &DMatrix<f64>, z: &DMatrix<f64>, taus: &[f64]) -> Result<QuantileFitResult> {
    validate_taus(taus)?;
    let d = design(y, xhat, z)?;
    let betas = taus
        .iter()
        .map(|&t| solve_stacked(y, &d, &[t]).map(|mut v| v.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(y, &d, xhat.ncols(), taus, betas, false))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicSelection {
    pub k: usize,
    /// `(K, BIC)` per candidate; `None` where the fit failed.
    pub scores: Vec<(usize, Option<f64>)>,
}

/// `Σ_h n·log(n⁻¹ Σ_i ρ_τh(r_ih)) + (K + p)·H·log n` on the joint fit.
pub fn bic(fit: &QuantileFitResult, n: usize) -> f64 {
    let nf = n as f64;
    let df = (fit.gamma.ncols() + fit.theta.ncols()) * fit.taus.len();
    fit.objective.iter().map(|o| nf * (o / nf).max(1e-300).ln()).sum::<f64>() + df as f64 * nf.ln()
}

/// Picks the basis dimension minimizing BIC; ties go to the smaller K.
pub fn select_k_bic(
    y: &[f64],
    candidates: &[(usize, DMatrix<f64>)],
    z: &DMatrix<f64>,
    taus: &[f64],
) -> Result<BicSelection> {
    if candidates.is_empty() {
        return Err(invalid("no candidate basis dimensions"));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&c| candidates[c].0);
    for c in order {
        let (k, xhat) = &candidates[c];
        let score = fit_joint(y, xhat, z, taus).ok().map(|f| bic(&f, y.len()));
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((*k, s));
            }
        }
        scores.push((*k, score));
    }
    let (k, _) = best.ok_or_else(|| Error::NumericalFailure("every candidate fit failed".into()))?;
    Ok(BicSelection { k, scores })
}
