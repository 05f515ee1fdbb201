use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Settings shared by the estimation routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Threshold on the mean absolute change of the zero-inflation profile.
    pub convergence_tol: f64,
    pub max_iter: usize,
    /// Upper bound imposed on every zero-inflation probability.
    pub pi_cap: f64,
    /// Floor applied to the latent mean inside the ZIP likelihood.
    pub x_floor: f64,
    pub k_candidates: Vec<usize>,
    pub tau_levels: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            convergence_tol: 1e-3,
            max_iter: 50,
            pi_cap: 0.99,
            x_floor: 1e-6,
            k_candidates: (4..=12).collect(),
            tau_levels: vec![0.25, 0.5, 0.75],
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(invalid("convergence_tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        if !(self.pi_cap > 0.0 && self.pi_cap < 1.0) {
            return Err(invalid("pi_cap must lie in (0, 1)"));
        }
        if !(self.x_floor > 0.0) {
            return Err(invalid("x_floor must be positive"));
        }
        validate_taus(&self.tau_levels)
    }
}

/// Quantile levels must be strictly increasing inside [0.01, 0.99].
pub fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(invalid("need at least one quantile level"));
    }
    if taus.iter().any(|&t| !(0.01..=0.99).contains(&t)) {
        return Err(invalid("quantile levels must lie in [0.01, 0.99]"));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("quantile levels must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.convergence_tol, 1e-3);
        assert_eq!(c.pi_cap, 0.99);
    }

    #[test]
    fn rejects_unsorted_taus() {
        let c = RunConfig { tau_levels: vec![0.5, 0.25], ..Default::default() };
        assert!(c.validate().is_err());
        assert!(validate_taus(&[0.001]).is_err());
    }
}
