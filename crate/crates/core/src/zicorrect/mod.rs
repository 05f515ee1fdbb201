//! Stage one: recovering latent subject curves from zero-inflated,
//! error-prone replicated count trajectories.

mod bezime;
mod competitors;
mod likelihood;

pub use bezime::{be_me, be_zime, initial_pi};
pub use competitors::{average_estimator, naive_estimator, oracle_estimator, pointwise_estimator};
pub use likelihood::{estimate_pi_segment, segment_loglik, zip_loglik_point};

use crate::basis::BasisSystem;
use crate::config::RunConfig;
use crate::dataset::ReplicatedFunctionalDataset;
use crate::error::{invalid, Error, Result};
use crate::grid::{Segmentation, TimeGrid};
use crate::mixedmodels::Family;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Piecewise-constant zero-inflation probabilities, one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroInflationProfile {
    segmentation: Segmentation,
    pi: DMatrix<f64>,
    /// Subject-segments that had no observations at the last update.
    pub skipped: usize,
}

impl ZeroInflationProfile {
    pub fn new(segmentation: Segmentation, pi: DMatrix<f64>) -> Result<Self> {
        if pi.ncols() != segmentation.num_segments() {
            return Err(invalid("one column per segment required"));
        }
        if pi.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(invalid("zero-inflation probabilities must lie in [0, 1)"));
        }
        Ok(Self { segmentation, pi, skipped: 0 })
    }

    pub fn zeros(n: usize, segmentation: Segmentation) -> Self {
        let m = segmentation.num_segments();
        Self { segmentation, pi: DMatrix::zeros(n, m), skipped: 0 }
    }

    /// Every subject shares the same per-segment values.
    pub fn shared(n: usize, segmentation: Segmentation, values: &[f64]) -> Result<Self> {
        let pi = DMatrix::from_fn(n, values.len(), |_, m| values[m]);
        Self::new(segmentation, pi)
    }

    pub fn segmentation(&self) -> &Segmentation {
        &self.segmentation
    }

    /// n × M matrix of probabilities.
    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn n(&self) -> usize {
        self.pi.nrows()
    }

    pub fn as_function(&self, i: usize, t: f64) -> f64 {
        self.pi[(i, self.segmentation.segment_of(t))]
    }

    /// n × L matrix of `π_i(t_l)`.
    pub fn on_grid(&self, grid: &TimeGrid) -> DMatrix<f64> {
        let seg = self.segmentation.assign(grid);
        DMatrix::from_fn(self.n(), grid.len(), |i, l| self.pi[(i, seg[l])])
    }
}

/// Recovered latent covariate: basis coefficients and curves on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedCovariate {
    /// n × K projections `x̂_i`.
    pub coeffs: DMatrix<f64>,
    /// n × L reconstructed curves `X̂_i(t_l)`.
    pub curves: DMatrix<f64>,
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    /// Mean absolute π change after each iteration (BE-ZIME only).
    pub trace: Vec<f64>,
    /// Random-intercept fits that fell back to subject means.
    pub fallbacks: usize,
}

/// Stage-one estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Naive,
    Average,
    PLmm,
    PPmm,
    PZipmm,
    BeMe,
    /// BE-ZIME with this many equal-length working segments.
    BeZime(usize),
    Oracle,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Self::Naive => "naive".into(),
            Self::Average => "average".into(),
            Self::PLmm => "p-lmm".into(),
            Self::PPmm => "p-pmm".into(),
            Self::PZipmm => "p-zipmm".into(),
            Self::BeMe => "be-me".into(),
            Self::BeZime(m) => format!("be-zime-m{m}"),
            Self::Oracle => "oracle".into(),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => Self::Naive,
            "average" => Self::Average,
            "p-lmm" => Self::PLmm,
            "p-pmm" => Self::PPmm,
            "p-zipmm" => Self::PZipmm,
            "be-me" => Self::BeMe,
            "be-zime" => Self::BeZime(1),
            "oracle" => Self::Oracle,
            other => match other.strip_prefix("be-zime-m").map(str::parse) {
                Some(Ok(m)) if m >= 1 => Self::BeZime(m),
                _ => return Err(invalid(format!("unknown method `{other}`"))),
            },
        })
    }
}

/// Runs one stage-one estimator. `truth` is required for the oracle.
pub fn correct(
    method: Method,
    data: &ReplicatedFunctionalDataset,
    basis: &BasisSystem,
    config: &RunConfig,
    truth: Option<&DMatrix<f64>>,
) -> Result<(CorrectedCovariate, Option<ZeroInflationProfile>)> {
    Ok(match method {
        Method::Naive => (naive_estimator(data, basis)?, None),
        Method::Average => (average_estimator(data, basis)?, None),
        Method::PLmm => (pointwise_estimator(data, basis, Family::Gaussian, config)?, None),
        Method::PPmm => (pointwise_estimator(data, basis, Family::Poisson, config)?, None),
        Method::PZipmm => (pointwise_estimator(data, basis, Family::Zip, config)?, None),
        Method::BeMe => (be_me(data, basis, config)?, None),
        Method::BeZime(m) => {
            let (c, p) = be_zime(data, basis, &Segmentation::equal(m)?, config)?;
            (c, Some(p))
        }
        Method::Oracle => {
            let x = truth.ok_or_else(|| invalid("the oracle needs the true curves"))?;
            (oracle_estimator(x, basis)?, None)
        }
    })
}
