//! Basis systems on a time grid, projection of curves onto a basis and the
//! Gram-corrected least-squares reconstruction.
//!
//! All integrals use the trapezoid rule on the observation grid, both for
//! the projections `∫ f φ_k` and for the Gram matrix `∫ Φ Φᵀ`, so that
//! projecting and reconstructing an in-span curve is the identity.

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// Clamped cubic B-splines with equally spaced interior knots.
    #[serde(alias = "bspline")]
    BsplineCubic,
    /// `1, √2 cos(πt), √2 cos(2πt), ...`
    Cosine,
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bspline" | "bspline-cubic" | "bspline_cubic" => Ok(Self::BsplineCubic),
            "cosine" | "fourier" => Ok(Self::Cosine),
            other => Err(invalid(format!("unknown basis kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BsplineCubic => "bspline",
            Self::Cosine => "cosine",
        })
    }
}

/// A basis evaluated on a grid together with its Gram matrix.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    kind: BasisKind,
    grid: TimeGrid,
    /// K × L matrix of basis values.
    eval: DMatrix<f64>,
    weights: Vec<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    orthonormal: bool,
}

/// Values of the cosine family `φ_1 = 1, φ_k = √2 cos((k-1)πt)` at `t`.
pub fn cosine_values(k: usize, t: f64) -> Vec<f64> {
    (0..k)
        .map(|idx| if idx == 0 { 1.0 } else { SQRT_2 * (idx as f64 * PI * t).cos() })
        .collect()
}

/// Values of the `k` clamped cubic B-splines on [0, 1] at `t`.
pub fn bspline_values(k: usize, t: f64) -> Vec<f64> {
    const P: usize = 3;
    let interior = k - (P + 1);
    let mut knots = vec![0.0; P + 1];
    knots.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
    knots.extend(std::iter::repeat_n(1.0, P + 1));

    let x = t.clamp(0.0, 1.0);
    // knot span s with knots[s] <= x < knots[s + 1], last span for x = 1
    let span = if x >= 1.0 {
        k - 1
    } else {
        knots.partition_point(|&u| u <= x) - 1
    };

    let mut n = [0.0; P + 1];
    let mut left = [0.0; P + 1];
    let mut right = [0.0; P + 1];
    n[0] = 1.0;
    for d in 1..=P {
        left[d] = x - knots[span + 1 - d];
        right[d] = knots[span + d] - x;
        let mut saved = 0.0;
        for r in 0..d {
            let denom = right[r + 1] + left[d - r];
            let tmp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * tmp;
            saved = left[d - r] * tmp;
        }
        n[d] = saved;
    }

    let mut out = vec![0.0; k];
    for (r, v) in n.iter().enumerate() {
        out[span - P + r] = *v;
    }
    out
}

impl BasisSystem {
    pub fn new(kind: BasisKind, k: usize, grid: &TimeGrid) -> Result<Self> {
        match kind {
            BasisKind::Cosine if k < 1 => return Err(invalid("cosine basis needs K >= 1")),
            BasisKind::BsplineCubic if k < 4 => {
                return Err(invalid(format!("cubic B-spline basis needs K >= 4, got {k}")))
            }
            _ => {}
        }
        let l = grid.len();
        let mut eval = DMatrix::zeros(k, l);
        for (col, &t) in grid.points().iter().enumerate() {
            let v = match kind {
                BasisKind::Cosine => cosine_values(k, t),
                BasisKind::BsplineCubic => bspline_values(k, t),
            };
            eval.column_mut(col).copy_from_slice(&v);
        }
        if eval.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditionedBasis("non-finite basis values".into()));
        }
        let weights = grid.trapezoid_weights();
        let gram = weighted_gram(&eval, &weights);
        let chol = Cholesky::new(gram.clone()).ok_or_else(|| {
            Error::IllConditionedBasis(format!("Gram matrix of {kind} basis (K={k}, L={l}) is not positive definite"))
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
        if !(lo > 1e-7 * hi) {
            return Err(Error::IllConditionedBasis(format!(
                "Gram matrix of {kind} basis (K={k}, L={l}) is numerically singular"
            )));
        }
        let orthonormal = (&gram - DMatrix::identity(k, k)).amax() < 1e-8;
        Ok(Self { kind, grid: grid.clone(), eval, weights, gram, chol, orthonormal })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.eval.nrows()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// K × L basis values.
    pub fn eval(&self) -> &DMatrix<f64> {
        &self.eval
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// True when the discrete Gram matrix is the identity to within 1e-8.
    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// `∫ f φ_k` for a fully observed curve.
    pub fn project_full(&self, curve: &[f64]) -> DVector<f64> {
        debug_assert_eq!(curve.len(), self.grid.len());
        let wf = DVector::from_iterator(curve.len(), curve.iter().zip(&self.weights).map(|(f, w)| f * w));
        &self.eval * wf
    }

    /// `∫ f φ_k` using only trapezoid panels with both endpoints observed.
    pub fn project(&self, curve: &[f64], observed: &[bool]) -> Result<DVector<f64>> {
        if curve.len() != self.grid.len() || observed.len() != self.grid.len() {
            return Err(invalid("curve length does not match the grid"));
        }
        if observed.iter().all(|&o| o) {
            if curve.iter().any(|v| !v.is_finite()) {
                return Err(invalid("curve must be finite at observed points"));
            }
            return Ok(self.project_full(curve));
        }
        let n_obs = observed.iter().filter(|&&o| o).count();
        if n_obs < 2 {
            return Err(Error::DegenerateInput(format!("only {n_obs} observed point(s)")));
        }
        let w = self.grid.masked_trapezoid_weights(observed);
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateInput("no two adjacent observed points".into()));
        }
        let mut wf = DVector::zeros(curve.len());
        for l in 0..curve.len() {
            if w[l] != 0.0 {
                if !curve[l].is_finite() {
                    return Err(invalid("curve must be finite at observed points"));
                }
                wf[l] = curve[l] * w[l];
            }
        }
        Ok(&self.eval * wf)
    }

    /// Projects every row of an n × L matrix of fully observed curves.
    pub fn project_rows(&self, curves: &DMatrix<f64>) -> DMatrix<f64> {
        let w = DVector::from_column_slice(&self.weights);
        let mut weighted = curves.clone();
        for mut row in weighted.row_iter_mut() {
            row.component_mul_assign(&w.transpose());
        }
        weighted * self.eval.transpose()
    }

    /// `G⁻¹ x` via the Cholesky factor.
    pub fn solve_gram(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        if self.orthonormal {
            coeffs.clone()
        } else {
            self.chol.solve(coeffs)
        }
    }

    /// `Φ(t)ᵀ G⁻¹ x` on the grid.
    pub fn reconstruct(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.k(), "coefficient length must equal K");
        let c = self.solve_gram(coeffs);
        (self.eval.transpose() * c).iter().copied().collect()
    }

    /// Reconstructs every row of an n × K coefficient matrix into n × L curves.
    pub fn reconstruct_rows(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(coeffs.ncols(), self.k(), "coefficient width must equal K");
        let solved = if self.orthonormal {
            coeffs.clone()
        } else {
            self.chol.solve(&coeffs.transpose()).transpose()
        };
        solved * &self.eval
    }

    /// `Σ_k γ_k φ_k(t)` on the grid.
    pub fn beta_curve(&self, gamma: &[f64]) -> Vec<f64> {
        assert_eq!(gamma.len(), self.k(), "coefficient length must equal K");
        let g = DVector::from_column_slice(gamma);
        (self.eval.transpose() * g).iter().copied().collect()
    }

    /// `∫ φ_k` for every k.
    pub fn integrals(&self) -> DVector<f64> {
        self.project_full(&vec![1.0; self.grid.len()])
    }

    /// `∫ f²` with the module quadrature.
    pub fn norm_sq(&self, curve: &[f64]) -> f64 {
        curve.iter().zip(&self.weights).map(|(f, w)| f * f * w).sum()
    }
}

/// Convenience wrapper mirroring [`BasisSystem::new`].
pub fn make_basis(kind: BasisKind, k: usize, grid: &TimeGrid) -> Result<BasisSystem> {
    BasisSystem::new(kind, k, grid)
}

fn weighted_gram(eval: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = eval.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
        col *= w;
    }
    let g = &scaled * eval.transpose();
    (&g + g.transpose()) * 0.5
}
