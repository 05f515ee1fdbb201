//! Dense bounded-variable revised simplex for
//! `min cᵀx  s.t.  Ax = b,  l ≤ x ≤ u` with finite lower bounds.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Simplex multipliers `c_Bᵀ B⁻¹` at the optimum.
    pub duals: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const MAX_ITER: usize = 200_000;
const DEGENERATE_RUN: usize = 40;

struct Tableau<'p> {
    p: &'p LpProblem,
    m: usize,
    n: usize,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    binv: DMatrix<f64>,
    since_refactor: usize,
}

impl<'p> Tableau<'p> {
    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.n {
            self.p.a.column(j).into_owned()
        } else {
            let mut e = DVector::zeros(self.m);
            e[j - self.n] = self.art_sign[j - self.n];
            e
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let mut bmat = DMatrix::zeros(self.m, self.m);
        for (r, &j) in self.basis.iter().enumerate() {
            bmat.set_column(r, &self.column(j));
        }
        self.binv = bmat
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("simplex basis became singular".into()))?;
        let mut rhs = self.p.b.clone();
        for j in 0..self.n + self.m {
            if self.position[j].is_none() && self.x[j] != 0.0 {
                rhs -= self.column(j) * self.x[j];
            }
        }
        let xb = &self.binv * rhs;
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[r];
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn run(&mut self, cost: &[f64], iterations: &mut usize) -> Result<DVector<f64>> {
        let total = self.n + self.m;
        let mut degenerate = 0usize;
        loop {
            *iterations += 1;
            if *iterations > MAX_ITER {
                return Err(Error::NumericalFailure("simplex iteration limit reached".into()));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| cost[j]));
            let duals = self.binv.tr_mul(&cb);
            let bland = degenerate > DEGENERATE_RUN;

            // pricing
            let atd = self.p.a.tr_mul(&duals);
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                if self.position[j].is_some() || self.upper[j] <= self.lower[j] {
                    continue;
                }
                let dj = if j < self.n { cost[j] - atd[j] } else { cost[j] - self.art_sign[j - self.n] * duals[j - self.n] };
                let at_upper = self.x[j] >= self.upper[j];
                let gain = if at_upper { dj } else { -dj };
                if gain > PRICE_TOL {
                    match entering {
                        None => entering = Some((j, gain)),
                        Some((_, g)) if !bland && gain > g => entering = Some((j, gain)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((j, _)) = entering else {
                return Ok(duals);
            };
            let dir = if self.x[j] >= self.upper[j] { -1.0 } else { 1.0 };
            let w = &self.binv * self.column(j);

            // ratio test
            let mut theta = self.upper[j] - self.lower[j];
            let mut leave: Option<(usize, bool)> = None;
            let mut best_piv = 0.0;
            for r in 0..self.m {
                let delta = -dir * w[r];
                let bj = self.basis[r];
                let (limit, to_upper) = if delta < -PIVOT_TOL {
                    (((self.x[bj] - self.lower[bj]) / -delta).max(0.0), false)
                } else if delta > PIVOT_TOL && self.upper[bj].is_finite() {
                    (((self.upper[bj] - self.x[bj]) / delta).max(0.0), true)
                } else {
                    continue;
                };
                let piv = w[r].abs();
                let take = match leave {
                    None => limit < theta,
                    Some((lr, _)) => {
                        limit < theta - 1e-12
                            || (limit <= theta + 1e-12
                                && if bland { self.basis[r] < self.basis[lr] } else { piv > best_piv })
                    }
                };
                if take {
                    theta = theta.min(limit);
                    leave = Some((r, to_upper));
                    best_piv = piv;
                }
            }
            if !theta.is_finite() {
                return Err(Error::NumericalFailure("linear program is unbounded".into()));
            }
            degenerate = if theta < 1e-12 { degenerate + 1 } else { 0 };

            for r in 0..self.m {
                let bj = self.basis[r];
                self.x[bj] -= dir * theta * w[r];
            }
            match leave {
                None => {
                    // bound flip
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                }
                Some((r, to_upper)) => {
                    self.x[j] += dir * theta;
                    let out = self.basis[r];
                    self.x[out] = if to_upper { self.upper[out] } else { self.lower[out] };
                    self.position[out] = None;
                    self.position[j] = Some(r);
                    self.basis[r] = j;
                    let pivot = w[r];
                    let row = self.binv.row(r).into_owned() / pivot;
                    for i in 0..self.m {
                        if i != r && w[i] != 0.0 {
                            let f = w[i];
                            for c in 0..self.m {
                                self.binv[(i, c)] -= f * row[c];
                            }
                        }
                    }
                    self.binv.set_row(r, &row);
                    self.since_refactor += 1;
                }
            }
        }
    }
}

/// Solves the LP from a start where every structural variable sits at the
/// bound selected by `start_upper` (lower when absent).
pub fn solve(p: &LpProblem, start_upper: Option<&[bool]>) -> Result<LpSolution> {
    let m = p.a.nrows();
    let n = p.a.ncols();
    debug_assert!(p.b.len() == m && p.c.len() == n && p.lower.len() == n && p.upper.len() == n);
    if p.lower.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument("lower bounds must be finite".into()));
    }
    let mut x: Vec<f64> = (0..n)
        .map(|j| match start_upper {
            Some(s) if s[j] && p.upper[j].is_finite() => p.upper[j],
            _ => p.lower[j],
        })
        .collect();
    let xs = DVector::from_column_slice(&x);
    let resid = &p.b - &p.a * xs;
    let art_sign: Vec<f64> = resid.iter().map(|r| if *r >= 0.0 { 1.0 } else { -1.0 }).collect();
    x.extend(resid.iter().map(|r| r.abs()));

    let mut lower = p.lower.clone();
    lower.extend(std::iter::repeat_n(0.0, m));
    let mut upper = p.upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut position = vec![None; n + m];
    for r in 0..m {
        position[n + r] = Some(r);
    }
    let mut t = Tableau {
        p,
        m,
        n,
        x,
        lower,
        upper,
        binv: DMatrix::from_diagonal(&DVector::from_column_slice(&art_sign)),
        art_sign,
        basis: (n..n + m).collect(),
        position,
        since_refactor: 0,
    };

    let mut iterations = 0;
    let mut phase1 = vec![0.0; n + m];
    for c in phase1.iter_mut().skip(n) {
        *c = 1.0;
    }
    t.run(&phase1, &mut iterations)?;
    t.refactor()?;
    let infeasibility: f64 = t.x[n..].iter().sum();
    let scale = 1.0 + p.b.amax();
    if infeasibility > 1e-7 * scale {
        return Err(Error::NumericalFailure(format!("linear program is infeasible (residual {infeasibility:.3e})")));
    }
    for r in 0..m {
        t.upper[n + r] = 0.0;
        if t.position[n + r].is_none() {
            t.x[n + r] = 0.0;
        }
    }

    let mut phase2: Vec<f64> = p.c.iter().copied().collect();
    phase2.extend(std::iter::repeat_n(0.0, m));
    t.run(&phase2, &mut iterations)?;
    t.refactor()?;
    let cb = DVector::from_iterator(m, t.basis.iter().map(|&j| phase2[j]));
    let duals = t.binv.tr_mul(&cb);
    let x: Vec<f64> = t.x[..n].to_vec();
    let objective = x.iter().zip(p.c.iter()).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, duals, objective, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bounded_lp() {
        // min -x1 - 2x2  s.t. x1 + x2 + s = 3, 0 ≤ x1 ≤ 2, 0 ≤ x2 ≤ 2, s ≥ 0
        let p = LpProblem {
            a: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            b: DVector::from_vec(vec![3.0]),
            c: DVector::from_vec(vec![-1.0, -2.0, 0.0]),
            lower: vec![0.0; 3],
            upper: vec![2.0, 2.0, f64::INFINITY],
        };
        let s = solve(&p, None).unwrap();
        assert!((s.objective + 5.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // x1 + x2 = 5 with both in [0, 1]
        let p = LpProblem {
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![5.0]),
            c: DVector::from_vec(vec![1.0, 1.0]),
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
        };
        assert!(matches!(solve(&p, None), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn detects_unboundedness() {
        // min -x1 s.t. x1 - x2 = 0, x ≥ 0
        let p = LpProblem {
            a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            b: DVector::from_vec(vec![0.0]),
            c: DVector::from_vec(vec![-1.0, 0.0]),
            lower: vec![0.0; 2],
            upper: vec![f64::INFINITY; 2],
        };
        assert!(matches!(solve(&p, None), Err(Error::NumericalFailure(_))));
    }
}
