use crate::basis::BasisKind;
use crate::config::validate_taus;
use crate::error::{invalid, Result};
use crate::zicorrect::Method;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaShape {
    /// `0.5 sin(πt)`
    HalfSine,
    /// `sin(2πt)`
    FullSine,
    /// `β ≡ 0`, for size checks.
    Zero,
}

impl BetaShape {
    pub fn eval(&self, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Self::HalfSine => 0.5 * (PI * t).sin(),
            Self::FullSine => (2.0 * PI * t).sin(),
            Self::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiMode {
    /// Per-subject constant `π_i ~ U(π₀ − π_δ, π₀ + π_δ)`.
    Constant,
    /// Shared piecewise-constant layout alternating `π₀` and `1 − π₀`.
    Piecewise,
}

/// Simulation scenario, readable from a flat TOML file whose keys are the
/// field names below (`L`, `J`, `R` and `K` in upper case).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub n: usize,
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "J")]
    pub replicates: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    pub beta_shape: BetaShape,
    pub eta_beta: f64,
    pub eta_eps: f64,
    pub sigma: f64,
    pub pi_mode: PiMode,
    pub pi0: f64,
    pub pi_delta: f64,
    /// Piecewise layout 1, 2 or 3.
    pub case: u8,
    pub theta: [f64; 2],
    pub sigma_z: f64,
    pub p_z: f64,
    pub taus: Vec<f64>,
    pub k_true: usize,
    pub basis: BasisKind,
    /// Working basis dimension, used when `k_candidates` is empty.
    #[serde(rename = "K")]
    pub k: usize,
    /// Dimensions compared by BIC on every replicate and method.
    #[serde(rename = "K_candidates")]
    pub k_candidates: Vec<usize>,
    /// Working segment counts; `be-zime` expands to one run per entry.
    pub segments: Vec<usize>,
    pub methods: Vec<String>,
    /// Also fit each level separately to report the joint-fit improvement.
    pub separate: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario_id: "scenario".into(),
            n: 100,
            len: 100,
            replicates: 5,
            replications: 100,
            beta_shape: BetaShape::HalfSine,
            eta_beta: 0.0,
            eta_eps: 0.0,
            sigma: 0.1,
            pi_mode: PiMode::Constant,
            pi0: 0.3,
            pi_delta: 0.0,
            case: 1,
            theta: [0.5, 0.6],
            sigma_z: 0.5,
            p_z: 0.6,
            taus: vec![0.25, 0.5, 0.75],
            k_true: 50,
            basis: BasisKind::BsplineCubic,
            k: 4,
            k_candidates: (4..=8).collect(),
            segments: vec![1],
            methods: vec!["naive".into(), "average".into(), "be-me".into(), "be-zime".into(), "oracle".into()],
            separate: true,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.len < 2 || self.replicates < 1 || self.replications < 1 {
            return Err(invalid("need n ≥ 2, L ≥ 2, J ≥ 1 and R ≥ 1"));
        }
        if self.k_true < 1 {
            return Err(invalid("k_true must be positive"));
        }
        if !(self.sigma >= 0.0) || !(self.sigma_z >= 0.0) || !(0.0..=1.0).contains(&self.p_z) {
            return Err(invalid("sigma and sigma_z must be non-negative and p_z a probability"));
        }
        if ![0.0, 1.0].contains(&self.eta_beta) || ![0.0, 1.0].contains(&self.eta_eps) {
            return Err(invalid("eta_beta and eta_eps must be 0 or 1"));
        }
        match self.pi_mode {
            PiMode::Constant => {
                if !(self.pi_delta >= 0.0 && self.pi0 - self.pi_delta >= 0.0 && self.pi0 + self.pi_delta < 1.0) {
                    return Err(invalid("need 0 ≤ pi0 − pi_delta and pi0 + pi_delta < 1"));
                }
            }
            PiMode::Piecewise => {
                if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
                    return Err(invalid("piecewise mode needs 0 < pi0 < 1"));
                }
                if !(1..=3).contains(&self.case) {
                    return Err(invalid(format!("unknown piecewise case {}", self.case)));
                }
            }
        }
        if self.k == 0 || self.k_candidates.contains(&0) {
            return Err(invalid("basis dimensions must be positive"));
        }
        if self.segments.is_empty() || self.segments.contains(&0) {
            return Err(invalid("segment counts must be positive"));
        }
        validate_taus(&self.taus)?;
        self.resolve_methods().map(|_| ())
    }

    /// Methods to run, with `be-zime` expanded over the working segment counts.
    pub fn resolve_methods(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in &self.methods {
            if name == "be-zime" {
                out.extend(self.segments.iter().map(|&m| Method::BeZime(m)));
            } else {
                out.push(name.parse()?);
            }
        }
        if out.is_empty() {
            return Err(invalid("no methods selected"));
        }
        Ok(out)
    }

    /// `β(t, τ) = {1 + η_β·0.2(τ − 0.5)} β₀(t)`.
    pub fn true_beta(&self, tau: f64, t: &[f64]) -> Vec<f64> {
        let scale = 1.0 + self.eta_beta * heterogeneity(tau);
        t.iter().map(|&s| scale * self.beta_shape.eval(s)).collect()
    }
}

pub(crate) fn heterogeneity(u: f64) -> f64 {
    0.2 * (u - 0.5)
}
