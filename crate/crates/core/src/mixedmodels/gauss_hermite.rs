//! Fixed-node Gauss–Hermite rule computed by Golub–Welsch.

use nalgebra::{DMatrix, SymmetricEigen};
use std::sync::OnceLock;

pub const NODES: usize = 20;

/// Nodes `z_q` and weights `w_q` such that `E[f(b)] ≈ Σ_q w_q f(σ z_q)` for
/// `b ~ N(0, σ²)`; the weights sum to one.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

/// Physicists' Hermite rule: `∫ e^{-x²} f(x) dx ≈ Σ w_q f(x_q)`.
pub fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|q| {
            let v0 = eig.eigenvectors[(0, q)];
            (eig.eigenvalues[q], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize to remove eigen-solver noise
    for q in 0..n / 2 {
        let r = n - 1 - q;
        let x = 0.5 * (pairs[r].0 - pairs[q].0);
        let w = 0.5 * (pairs[r].1 + pairs[q].1);
        pairs[q] = (-x, w);
        pairs[r] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

pub fn normal_rule() -> &'static NormalRule {
    static RULE: OnceLock<NormalRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = hermite_rule(NODES);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        let log_weights = weights.iter().map(|v| v.ln()).collect();
        NormalRule { nodes, weights, log_weights }
    })
}
