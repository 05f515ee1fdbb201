//! Replicated functional observations and scalar covariates.

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// `W_ij(t_l)` for `n` subjects, `J` replicates and a shared grid, with a
/// per-point observation mask. Values are stored subject-major, then
/// replicate, then time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedFunctionalDataset {
    n: usize,
    replicates: usize,
    grid: TimeGrid,
    values: Vec<f64>,
    observed: Vec<bool>,
}

/// A broken dataset invariant, reported as data rather than an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    DimensionMismatch { expected: usize, values: usize, mask: usize },
    NegativeValue { i: usize, j: usize, l: usize },
    NonFiniteValue { i: usize, j: usize, l: usize },
    EmptySubject { i: usize },
}

impl ReplicatedFunctionalDataset {
    /// Builds a dataset without checking invariants; see [`Self::validate`].
    pub fn from_parts(
        n: usize,
        replicates: usize,
        grid: TimeGrid,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Self {
        Self { n, replicates, grid, values, observed }
    }

    /// Builds a dataset and rejects it if any invariant fails.
    pub fn new(
        n: usize,
        replicates: usize,
        grid: TimeGrid,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let d = Self::from_parts(n, replicates, grid, values, observed);
        let violations = d.validate();
        if let Some(v) = violations.first() {
            return Err(crate::Error::Data(format!(
                "{} violation(s), first: {v:?}",
                violations.len()
            )));
        }
        Ok(d)
    }

    /// Fully observed dataset.
    pub fn fully_observed(
        n: usize,
        replicates: usize,
        grid: TimeGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(n, replicates, grid, values, mask)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len_grid(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.replicates + j) * self.grid.len()
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, l: usize) -> f64 {
        self.values[self.offset(i, j) + l]
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, l: usize) -> bool {
        self.observed[self.offset(i, j) + l]
    }

    pub fn curve(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.values[o..o + self.grid.len()]
    }

    pub fn mask(&self, i: usize, j: usize) -> &[bool] {
        let o = self.offset(i, j);
        &self.observed[o..o + self.grid.len()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Observed values of every replicate of subject `i` at grid index `l`.
    pub fn slice(&self, i: usize, l: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.replicates)
            .filter(move |&j| self.is_observed(i, j, l))
            .map(move |j| self.value(i, j, l))
    }

    /// Keeps only the first `replicates` replicates of every subject.
    pub fn truncate_replicates(&self, replicates: usize) -> Self {
        let r = replicates.min(self.replicates);
        let len = self.grid.len();
        let mut values = Vec::with_capacity(self.n * r * len);
        let mut observed = Vec::with_capacity(self.n * r * len);
        for i in 0..self.n {
            for j in 0..r {
                values.extend_from_slice(self.curve(i, j));
                observed.extend_from_slice(self.mask(i, j));
            }
        }
        Self::from_parts(self.n, r, self.grid.clone(), values, observed)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let expected = self.n * self.replicates * self.grid.len();
        if self.values.len() != expected || self.observed.len() != expected {
            return vec![Violation::DimensionMismatch {
                expected,
                values: self.values.len(),
                mask: self.observed.len(),
            }];
        }
        let mut out = Vec::new();
        for i in 0..self.n {
            let mut any = false;
            for j in 0..self.replicates {
                for l in 0..self.grid.len() {
                    if !self.is_observed(i, j, l) {
                        continue;
                    }
                    any = true;
                    let v = self.value(i, j, l);
                    if !v.is_finite() {
                        out.push(Violation::NonFiniteValue { i, j, l });
                    } else if v < 0.0 {
                        out.push(Violation::NegativeValue { i, j, l });
                    }
                }
            }
            if !any {
                out.push(Violation::EmptySubject { i });
            }
        }
        out
    }
}

/// Error-free scalar covariates `Z` (n × p) whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCovariates {
    z: DMatrix<f64>,
    names: Vec<String>,
}

impl ScalarCovariates {
    pub fn new(z: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if z.ncols() == 0 || names.len() != z.ncols() {
            return Err(invalid("need one name per covariate column and at least an intercept"));
        }
        if z.column(0).iter().any(|&v| v != 1.0) {
            return Err(invalid("first covariate column must be the intercept (all ones)"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariates must be finite"));
        }
        Ok(Self { z, names })
    }

    /// Prepends an intercept column to `columns` (n × (p-1)).
    pub fn with_intercept(columns: &DMatrix<f64>, names: &[&str]) -> Result<Self> {
        let n = columns.nrows();
        let mut z = DMatrix::from_element(n, columns.ncols() + 1, 1.0);
        z.columns_mut(1, columns.ncols()).copy_from(columns);
        let mut all = vec!["intercept".to_string()];
        all.extend(names.iter().map(|s| s.to_string()));
        Self::new(z, all)
    }

    pub fn intercept_only(n: usize) -> Self {
        Self { z: DMatrix::from_element(n, 1, 1.0), names: vec!["intercept".into()] }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { z: self.z.select_rows(rows.iter()), names: self.names.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(values: Vec<f64>, observed: Vec<bool>) -> ReplicatedFunctionalDataset {
        ReplicatedFunctionalDataset::from_parts(2, 2, TimeGrid::equispaced(3).unwrap(), values, observed)
    }

    #[test]
    fn valid_toy_has_no_violations() {
        let d = toy(vec![1.0; 12], vec![true; 12]);
        assert!(d.validate().is_empty());
    }

    #[test]
    fn negative_value_is_located() {
        let mut v = vec![1.0; 12];
        v[(1 * 2 + 0) * 3 + 2] = -1.0;
        let d = toy(v, vec![true; 12]);
        assert_eq!(d.validate(), vec![Violation::NegativeValue { i: 1, j: 0, l: 2 }]);
    }

    #[test]
    fn unobserved_negative_is_ignored_and_empty_subject_flagged() {
        let mut v = vec![1.0; 12];
        v[0] = -3.0;
        let mut mask = vec![true; 12];
        for m in mask.iter_mut().take(6) {
            *m = false;
        }
        let d = toy(v, mask);
        assert_eq!(d.validate(), vec![Violation::EmptySubject { i: 0 }]);
    }

    #[test]
    fn dimension_mismatch() {
        let d = toy(vec![1.0; 11], vec![true; 12]);
        assert!(matches!(d.validate()[0], Violation::DimensionMismatch { .. }));
    }

    #[test]
    fn covariates_require_intercept() {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 2.0, 0.1]);
        assert!(ScalarCovariates::new(z, vec!["a".into(), "b".into()]).is_err());
        let cols = DMatrix::from_row_slice(2, 1, &[0.3, f64::NAN]);
        assert!(ScalarCovariates::with_intercept(&cols, &["x"]).is_err());
    }
}
