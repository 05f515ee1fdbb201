//! Replication harness.

use super::dgp::{gen_covariates, gen_latent_x, gen_outcome, gen_pi_profile, gen_surrogates};
use super::metrics::{compute_beta_metrics, compute_pi_metrics, compute_x_mise, improvement_ratio};
use super::scenario::ScenarioConfig;
use crate::basis::BasisSystem;
use crate::config::RunConfig;
use crate::dataset::{ReplicatedFunctionalDataset, ScalarCovariates};
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::par;
use crate::quantreg::{fit_joint, fit_separate_all, select_k_bic};
use crate::rng::substream;
use crate::zicorrect::{correct, Method, ZeroInflationProfile};
use nalgebra::DMatrix;

/// Everything generated for one replicate.
#[derive(Debug, Clone)]
pub struct SimulatedReplicate {
    pub x: DMatrix<f64>,
    pub pi: ZeroInflationProfile,
    pub data: ReplicatedFunctionalDataset,
    pub z: ScalarCovariates,
    pub y: Vec<f64>,
    pub clipped: usize,
}

const STAGE_X: u64 = 0;
const STAGE_PI: u64 = 1;
const STAGE_W: u64 = 2;
const STAGE_Y: u64 = 3;

/// Draws replicate `r`; each stage has its own stream keyed by `(seed, r)`.
pub fn simulate_replicate(cfg: &ScenarioConfig, grid: &TimeGrid, seed: u64, r: u64) -> Result<SimulatedReplicate> {
    let x = gen_latent_x(cfg.n, grid, cfg.k_true, &mut substream(seed, &[r, STAGE_X]));
    let pi = gen_pi_profile(cfg, cfg.n, &mut substream(seed, &[r, STAGE_PI]))?;
    let (data, clipped) = gen_surrogates(&x, cfg.replicates, &pi, grid, &mut substream(seed, &[r, STAGE_W]))?;
    let mut rng = substream(seed, &[r, STAGE_Y]);
    let z = gen_covariates(cfg.n, cfg, &mut rng)?;
    let y = gen_outcome(&x, &z, cfg, grid, &mut rng);
    Ok(SimulatedReplicate { x, pi, data, z, y, clipped })
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub r: usize,
    pub method: Method,
    /// Failure message; the record is excluded from aggregates when set.
    pub error: Option<String>,
    pub mise_x: f64,
    pub mse_pi: Option<f64>,
    pub mse_pi_dagger: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Working basis dimension used for this record.
    pub k: usize,
    /// H × L coefficient curves from the joint fit.
    pub beta_joint: DMatrix<f64>,
    /// H × L coefficient curves from separate fits, when requested.
    pub beta_separate: Option<DMatrix<f64>>,
}

impl ReplicateRecord {
    fn failed(r: usize, method: Method, msg: String) -> Self {
        Self {
            r,
            method,
            error: Some(msg),
            mise_x: f64::NAN,
            mse_pi: None,
            mse_pi_dagger: None,
            iterations: 0,
            converged: false,
            k: 0,
            beta_joint: DMatrix::zeros(0, 0),
            beta_separate: None,
        }
    }
}

/// Aggregate value; `tau` is `None` for metrics not tied to a level.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub tau: Option<f64>,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub scenario_id: String,
    pub seed: u64,
    pub replications: usize,
    pub rows: Vec<MetricRow>,
    pub records: Vec<ReplicateRecord>,
}

impl MetricsReport {
    pub fn get(&self, method: Method, tau: Option<f64>, metric: &str) -> Option<f64> {
        let name = method.name();
        self.rows
            .iter()
            .find(|r| r.method == name && r.tau == tau && r.metric == metric)
            .map(|r| r.value)
    }

    /// Successful records of one method in replicate order.
    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(move |r| r.method == method && r.error.is_none())
    }
}

fn run_method(
    cfg: &ScenarioConfig,
    sim: &SimulatedReplicate,
    bases: &[BasisSystem],
    run: &RunConfig,
    method: Method,
    r: usize,
) -> ReplicateRecord {
    let attempt = || -> Result<ReplicateRecord> {
        let z = sim.z.matrix();
        let mut fits = Vec::with_capacity(bases.len());
        for basis in bases {
            fits.push(correct(method, &sim.data, basis, run, Some(&sim.x))?);
        }
        let pick = if fits.len() > 1 {
            let cands: Vec<(usize, DMatrix<f64>)> =
                bases.iter().zip(&fits).map(|(b, (c, _))| (b.k(), c.coeffs.clone())).collect();
            let k = select_k_bic(&sim.y, &cands, z, &cfg.taus)?.k;
            bases.iter().position(|b| b.k() == k).unwrap_or(0)
        } else {
            0
        };
        let basis = &bases[pick];
        let (cov, profile) = fits.swap_remove(pick);
        let (mse_pi, mse_pi_dagger) = match &profile {
            Some(p) => {
                let (a, b) = compute_pi_metrics(p, &sim.pi)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let joint = fit_joint(&sim.y, &cov.coeffs, z, &cfg.taus)?.with_curves(basis);
        let beta_separate = if cfg.separate && cfg.taus.len() > 1 {
            Some(fit_separate_all(&sim.y, &cov.coeffs, z, &cfg.taus)?.with_curves(basis).beta_curves)
        } else if cfg.separate {
            Some(joint.beta_curves.clone())
        } else {
            None
        };
        Ok(ReplicateRecord {
            r,
            method,
            error: None,
            mise_x: compute_x_mise(&cov.curves, &sim.x)?,
            mse_pi,
            mse_pi_dagger,
            iterations: cov.iterations,
            converged: cov.converged,
            k: basis.k(),
            beta_joint: joint.beta_curves,
            beta_separate,
        })
    };
    attempt().unwrap_or_else(|e| ReplicateRecord::failed(r, method, e.to_string()))
}

/// Runs every method on `R` independent replicates and aggregates the
/// metrics. Replicates run concurrently; aggregation order is fixed.
pub fn run_replications(cfg: &ScenarioConfig, methods: &[Method], seed: u64) -> Result<MetricsReport> {
    cfg.validate()?;
    let grid = TimeGrid::equispaced(cfg.len)?;
    let dims = if cfg.k_candidates.is_empty() { vec![cfg.k] } else { cfg.k_candidates.clone() };
    let bases = dims.iter().map(|&k| BasisSystem::new(cfg.basis, k, &grid)).collect::<Result<Vec<_>>>()?;
    let run = RunConfig { seed, tau_levels: cfg.taus.clone(), ..RunConfig::default() };

    let per_rep: Vec<Vec<ReplicateRecord>> = par::map_indexed(cfg.replications, |r| {
        match simulate_replicate(cfg, &grid, seed, r as u64) {
            Ok(sim) => methods.iter().map(|&m| run_method(cfg, &sim, &bases, &run, m, r)).collect(),
            Err(e) => methods.iter().map(|&m| ReplicateRecord::failed(r, m, e.to_string())).collect(),
        }
    });
    let records: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();
    let rows = aggregate(cfg, methods, &grid, &records)?;
    Ok(MetricsReport { scenario_id: cfg.scenario_id.clone(), seed, replications: cfg.replications, rows, records })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn stack(curves: &[&DMatrix<f64>], h: usize) -> DMatrix<f64> {
    let len = curves.first().map_or(0, |c| c.ncols());
    DMatrix::from_fn(curves.len(), len, |r, l| curves[r][(h, l)])
}

fn aggregate(cfg: &ScenarioConfig, methods: &[Method], grid: &TimeGrid, records: &[ReplicateRecord]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for &m in methods {
        let name = m.name();
        let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == m && r.error.is_none()).collect();
        let failures = records.iter().filter(|r| r.method == m && r.error.is_some()).count();
        let mut push = |tau: Option<f64>, metric: &'static str, value: f64| {
            rows.push(MetricRow { method: name.clone(), tau, metric, value });
        };
        push(None, "failures", failures as f64);
        if ok.is_empty() {
            continue;
        }
        push(None, "mise_x", mean(ok.iter().map(|r| r.mise_x)));
        push(None, "mean_k", mean(ok.iter().map(|r| r.k as f64)));
        if ok[0].mse_pi.is_some() {
            push(None, "mse_pi", mean(ok.iter().filter_map(|r| r.mse_pi)));
            push(None, "mse_pi_dagger", mean(ok.iter().filter_map(|r| r.mse_pi_dagger)));
            push(None, "converged_frac", mean(ok.iter().map(|r| if r.converged { 1.0 } else { 0.0 })));
            push(None, "mean_iterations", mean(ok.iter().map(|r| r.iterations as f64)));
        }
        for (h, &tau) in cfg.taus.iter().enumerate() {
            let truth = cfg.true_beta(tau, grid.points());
            let joint: Vec<&DMatrix<f64>> = ok.iter().map(|r| &r.beta_joint).collect();
            let jm = compute_beta_metrics(&stack(&joint, h), &truth)?;
            push(Some(tau), "abias2", jm.abias2);
            push(Some(tau), "avar", jm.avar);
            push(Some(tau), "mise", jm.mise);
            let sep: Vec<&DMatrix<f64>> = ok.iter().filter_map(|r| r.beta_separate.as_ref()).collect();
            if sep.len() == ok.len() {
                let sm = compute_beta_metrics(&stack(&sep, h), &truth)?;
                push(Some(tau), "abias2_sep", sm.abias2);
                push(Some(tau), "avar_sep", sm.avar);
                push(Some(tau), "mise_sep", sm.mise);
                push(Some(tau), "improvement_ratio", improvement_ratio(sm.mise, jm.mise));
            }
        }
    }
    Ok(rows)
}
