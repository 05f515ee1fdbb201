//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export draws a fresh synthetic sample from `seed`, so the page
//! holds no state between calls. Results come back as JSON strings.

use nalgebra::DMatrix;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;
use zifqr_core::inference::{wild_bootstrap_global_test, Multiplier};
use zifqr_core::quantreg::{fit_joint, fit_separate_all};
use zifqr_core::simlab::{compute_x_mise, simulate_replicate, BetaShape, PiMode, ScenarioConfig, SimulatedReplicate};
use zifqr_core::zicorrect::{correct, Method};
use zifqr_core::{BasisKind, BasisSystem, Result, RunConfig, TimeGrid};

const LEN: usize = 60;
const K: usize = 4;
const TAUS: [f64; 3] = [0.25, 0.5, 0.75];

fn sample(cfg: &ScenarioConfig, seed: u64) -> Result<(TimeGrid, BasisSystem, SimulatedReplicate)> {
    cfg.validate()?;
    let grid = TimeGrid::equispaced(cfg.len)?;
    let basis = BasisSystem::new(BasisKind::BsplineCubic, K, &grid)?;
    let sim = simulate_replicate(cfg, &grid, seed, 0)?;
    Ok((grid, basis, sim))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

pub fn correct_curves_json(n: usize, pi0: f64, segments: usize, piecewise: bool, seed: u64) -> Result<Value> {
    let cfg = ScenarioConfig {
        n,
        len: LEN,
        pi0,
        pi_mode: if piecewise { PiMode::Piecewise } else { PiMode::Constant },
        ..Default::default()
    };
    let (grid, basis, sim) = sample(&cfg, seed)?;
    let run = RunConfig::default();
    let (naive, _) = correct(Method::Naive, &sim.data, &basis, &run, None)?;
    let (fixed, profile) = correct(Method::BeZime(segments), &sim.data, &basis, &run, None)?;
    let profile = profile.expect("be-zime returns a profile");
    let first: Vec<f64> = (0..grid.len()).map(|l| sim.data.value(0, 0, l)).collect();
    Ok(json!({
        "t": grid.points(),
        "truth": row(&sim.x, 0),
        "replicate": first,
        "naive": row(&naive.curves, 0),
        "corrected": row(&fixed.curves, 0),
        "pi_truth": row(&sim.pi.on_grid(&grid), 0),
        "pi_estimate": row(&profile.on_grid(&grid), 0),
        "mise_naive": compute_x_mise(&naive.curves, &sim.x)?,
        "mise_corrected": compute_x_mise(&fixed.curves, &sim.x)?,
        "iterations": fixed.iterations,
        "converged": fixed.converged,
    }))
}

pub fn quantile_fit_json(n: usize, pi0: f64, joint: bool, seed: u64) -> Result<Value> {
    let cfg = ScenarioConfig { n, len: LEN, pi0, ..Default::default() };
    let (grid, basis, sim) = sample(&cfg, seed)?;
    let (xhat, _) = correct(Method::BeZime(1), &sim.data, &basis, &RunConfig::default(), None)?;
    let z = sim.z.matrix();
    let fit = if joint { fit_joint(&sim.y, &xhat.coeffs, z, &TAUS)? } else { fit_separate_all(&sim.y, &xhat.coeffs, z, &TAUS)? };
    let fitted = fit.fitted(&xhat.coeffs, z);
    let crossings = fitted.row_iter().filter(|q| q.iter().zip(q.iter().skip(1)).any(|(a, b)| *a > *b + 1e-9)).count();
    let fit = fit.with_curves(&basis);
    let truth: Vec<Vec<f64>> = TAUS.iter().map(|&tau| cfg.true_beta(tau, grid.points())).collect();
    Ok(json!({
        "t": grid.points(),
        "taus": TAUS,
        "truth": truth,
        "estimate": rows(&fit.beta_curves),
        "crossings": crossings,
        "objective": fit.objective,
    }))
}

pub fn global_test_json(n: usize, null: bool, b: usize, rademacher: bool, seed: u64) -> Result<Value> {
    let cfg = ScenarioConfig {
        n,
        len: LEN,
        beta_shape: if null { BetaShape::Zero } else { BetaShape::HalfSine },
        ..Default::default()
    };
    let (_, basis, sim) = sample(&cfg, seed)?;
    let (xhat, _) = correct(Method::BeZime(1), &sim.data, &basis, &RunConfig::default(), None)?;
    let mult = if rademacher { Multiplier::Rademacher } else { Multiplier::Bernoulli };
    let t = wild_bootstrap_global_test(&sim.y, &xhat.coeffs, sim.z.matrix(), &basis, b, seed, mult)?;
    Ok(json!({ "stat": t.stat, "p_value": t.p_value, "b": t.b, "boot": t.boot_stats }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// True, naive and BE-ZIME curves plus the zero-inflation profile for the
/// first simulated subject.
#[wasm_bindgen]
pub fn correct_curves(n: usize, pi0: f64, segments: usize, piecewise: bool, seed: u64) -> std::result::Result<String, JsValue> {
    to_js(correct_curves_json(n, pi0, segments, piecewise, seed))
}

/// Coefficient curves at τ = 0.25, 0.5, 0.75 against the truth.
#[wasm_bindgen]
pub fn quantile_fit(n: usize, pi0: f64, joint: bool, seed: u64) -> std::result::Result<String, JsValue> {
    to_js(quantile_fit_json(n, pi0, joint, seed))
}

#[wasm_bindgen]
pub fn global_test(n: usize, null: bool, b: usize, rademacher: bool, seed: u64) -> std::result::Result<String, JsValue> {
    to_js(global_test_json(n, null, b, rademacher, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correction_beats_naive() {
        let v = correct_curves_json(60, 0.3, 1, false, 3).unwrap();
        assert!(v["mise_corrected"].as_f64().unwrap() < v["mise_naive"].as_f64().unwrap());
        assert_eq!(v["t"].as_array().unwrap().len(), LEN);
        assert_eq!(v["pi_truth"][0].as_f64(), Some(0.3));
    }

    #[test]
    fn joint_fit_never_crosses() {
        let v = quantile_fit_json(60, 0.3, true, 5).unwrap();
        assert_eq!(v["crossings"], 0);
        assert_eq!(v["estimate"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn strong_signal_is_detected() {
        let v = global_test_json(120, false, 100, true, 2).unwrap();
        assert!(v["p_value"].as_f64().unwrap() < 0.05);
        assert_eq!(v["boot"].as_array().unwrap().len(), 100);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(correct_curves_json(60, 1.5, 1, false, 1).is_err());
    }
}
