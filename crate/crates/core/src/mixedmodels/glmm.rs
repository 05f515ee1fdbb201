//! Random-intercept Poisson and zero-inflated Poisson models for a single
//! time slice, integrated over the random effect with Gauss–Hermite nodes.

use super::gauss_hermite::normal_rule;
use crate::error::{invalid, Result};
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy)]
struct Subject {
    /// observed replicate count
    size: f64,
    /// number of observed zeros
    zeros: f64,
    /// sum of counts
    total: f64,
    /// Σ log(w!)
    log_fact: f64,
}

fn summarize<G: AsRef<[f64]>>(groups: &[G]) -> Result<Vec<Subject>> {
    groups
        .iter()
        .map(|g| {
            let mut s = Subject { size: 0.0, zeros: 0.0, total: 0.0, log_fact: 0.0 };
            for &w in g.as_ref() {
                if !(w >= 0.0) || w.fract() != 0.0 {
                    return Err(invalid(format!("counts must be non-negative integers, got {w}")));
                }
                s.size += 1.0;
                s.total += w;
                if w == 0.0 {
                    s.zeros += 1.0;
                } else {
                    s.log_fact += ln_gamma(w + 1.0);
                }
            }
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmFit {
    pub beta0: f64,
    pub sigma: f64,
    /// Structural-zero probability; zero for the plain Poisson model.
    pub zero_prob: f64,
    /// Per-subject predicted random effect (posterior mode for Poisson,
    /// posterior mean for ZIP; zero for subjects without observations).
    pub effects: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Observed-data log-likelihood after each EM iteration (ZIP only).
    pub trace: Vec<f64>,
}

impl GlmmFit {
    pub fn fitted_mean(&self) -> Vec<f64> {
        self.effects.iter().map(|b| (self.beta0 + b).exp()).collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Marginal log-likelihood of the Poisson random-intercept model with its
/// gradient and Hessian in (β₀, σ).
fn poisson_marginal(subjects: &[Subject], beta0: f64, sigma: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let rule = normal_rule();
    let q = rule.nodes.len();
    let mut lf = vec![0.0; q];
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for s in subjects.iter().filter(|s| s.size > 0.0) {
        for k in 0..q {
            let eta = beta0 + sigma * rule.nodes[k];
            lf[k] = rule.log_weights[k] + s.total * eta - s.size * eta.exp();
        }
        let lse = log_sum_exp(&lf);
        ll += lse - s.log_fact;
        let (mut gb, mut gs, mut hbb, mut hbs, mut hss) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..q {
            let p = (lf[k] - lse).exp();
            let z = rule.nodes[k];
            let mu = s.size * (beta0 + sigma * z).exp();
            let d1 = s.total - mu;
            let d2 = d1 * d1 - mu;
            gb += p * d1;
            gs += p * d1 * z;
            hbb += p * d2;
            hbs += p * d2 * z;
            hss += p * d2 * z * z;
        }
        g[0] += gb;
        g[1] += gs;
        h[0][0] += hbb - gb * gb;
        h[0][1] += hbs - gb * gs;
        h[1][1] += hss - gs * gs;
    }
    h[1][0] = h[0][1];
    (ll, g, h)
}

/// Damped Newton ascent on a smooth 2-parameter log-likelihood.
fn newton_ascent(
    f: impl Fn(f64, f64) -> (f64, [f64; 2], [[f64; 2]; 2]),
    mut x: [f64; 2],
    max_iter: usize,
) -> ([f64; 2], f64, usize, bool) {
    let (mut val, mut g, mut h) = f(x[0], x[1]);
    let mut mu = 0.0;
    for it in 0..max_iter {
        let mut accepted = false;
        for _ in 0..40 {
            // solve (-H + μI) δ = g
            let a = -h[0][0] + mu;
            let b = -h[0][1];
            let d = -h[1][1] + mu;
            let det = a * d - b * b;
            if !(a > 0.0 && det > 0.0) {
                mu = if mu == 0.0 { 1e-6 * (1.0 + h[0][0].abs() + h[1][1].abs()) } else { mu * 10.0 };
                continue;
            }
            let step = [(d * g[0] - b * g[1]) / det, (a * g[1] - b * g[0]) / det];
            let scale = (step[0].abs().max(step[1].abs()) / 2.0).max(1.0);
            let cand = [x[0] + step[0] / scale, (x[1] + step[1] / scale).abs()];
            let (cv, cg, ch) = f(cand[0], cand[1]);
            if cv.is_finite() && cv >= val - 1e-12 * val.abs() {
                let small = (cand[0] - x[0]).abs() < 1e-10 && (cand[1] - x[1]).abs() < 1e-10;
                let flat = (cv - val).abs() < 1e-13 * (1.0 + val.abs());
                x = cand;
                val = cv;
                g = cg;
                h = ch;
                mu *= 0.1;
                if mu < 1e-12 {
                    mu = 0.0;
                }
                accepted = true;
                if small || flat {
                    return (x, val, it + 1, true);
                }
                break;
            }
            mu = if mu == 0.0 { 1e-6 * (1.0 + h[0][0].abs() + h[1][1].abs()) } else { mu * 10.0 };
        }
        if !accepted {
            let gnorm = g[0].abs() + g[1].abs();
            return (x, val, it + 1, gnorm < 1e-6 * (1.0 + val.abs()));
        }
    }
    (x, val, max_iter, false)
}

fn posterior_mode(s: &Subject, beta0: f64, sigma: f64) -> f64 {
    if s.size == 0.0 || sigma == 0.0 {
        return 0.0;
    }
    let prec = 1.0 / (sigma * sigma);
    let mut b = 0.0;
    for _ in 0..100 {
        let mu = s.size * (beta0 + b).exp();
        let d1 = s.total - mu - b * prec;
        let d2 = -mu - prec;
        let step = (-d1 / d2).clamp(-2.0, 2.0);
        b += step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    b
}

/// Starting log-mean and random-effect scale from subject means.
fn moment_start(subjects: &[Subject], zero_prob: f64) -> (f64, f64) {
    let obs: Vec<&Subject> = subjects.iter().filter(|s| s.size > 0.0).collect();
    let n: f64 = obs.iter().map(|s| s.size).sum();
    let tot: f64 = obs.iter().map(|s| s.total).sum();
    let mean = (tot / n / (1.0 - zero_prob)).max(1e-3);
    let logs: Vec<f64> = obs.iter().map(|s| ((s.total + 0.5) / s.size).ln()).collect();
    let m = logs.iter().sum::<f64>() / logs.len() as f64;
    let sd = (logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
    (mean.ln(), sd.clamp(0.05, 2.0))
}

/// Maximum-likelihood Poisson random-intercept fit for one slice.
/// Returns `None` when every observation is zero.
pub fn fit_poisson_glmm<G: AsRef<[f64]>>(groups: &[G], max_iter: usize) -> Result<Option<GlmmFit>> {
    let subjects = summarize(groups)?;
    let observed: Vec<&Subject> = subjects.iter().filter(|s| s.size > 0.0).collect();
    if observed.is_empty() {
        return Err(invalid("slice has no observations"));
    }
    let tot: f64 = observed.iter().map(|s| s.total).sum();
    if tot == 0.0 {
        return Ok(None);
    }
    if observed.len() < 2 {
        // between-subject variance is not identifiable
        let s = observed[0];
        let beta0 = (s.total / s.size).ln();
        let (ll, _, _) = poisson_marginal(&subjects, beta0, 0.0);
        return Ok(Some(GlmmFit {
            beta0,
            sigma: 0.0,
            zero_prob: 0.0,
            effects: vec![0.0; subjects.len()],
            loglik: ll,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        }));
    }
    let start = moment_start(&subjects, 0.0);
    let f = |b: f64, s: f64| poisson_marginal(&subjects, b, s);
    let (x, ll, iterations, converged) = newton_ascent(f, [start.0, start.1], max_iter);
    let effects = subjects.iter().map(|s| posterior_mode(s, x[0], x[1])).collect();
    Ok(Some(GlmmFit {
        beta0: x[0],
        sigma: x[1],
        zero_prob: 0.0,
        effects,
        loglik: ll,
        iterations,
        converged,
        trace: Vec::new(),
    }))
}

struct ZipEStep {
    loglik: f64,
    /// posterior node weights, subject-major
    post: Vec<f64>,
    /// posterior structural-zero probability of a zero, per subject and node
    zeta: Vec<f64>,
}

fn zip_estep(subjects: &[Subject], beta0: f64, sigma: f64, pi: f64) -> ZipEStep {
    let rule = normal_rule();
    let q = rule.nodes.len();
    let mut post = vec![0.0; subjects.len() * q];
    let mut zeta = vec![0.0; subjects.len() * q];
    let mut lf = vec![0.0; q];
    let mut loglik = 0.0;
    let log1m = (1.0 - pi).ln();
    for (i, s) in subjects.iter().enumerate() {
        if s.size == 0.0 {
            continue;
        }
        let positives = s.size - s.zeros;
        for k in 0..q {
            let eta = beta0 + sigma * rule.nodes[k];
            let mu = eta.exp();
            let p0 = (1.0 - pi) * (-mu).exp();
            let zero_term = if s.zeros > 0.0 { s.zeros * (pi + p0).ln() } else { 0.0 };
            let pos_term = if positives > 0.0 { positives * (log1m - mu) + s.total * eta } else { 0.0 };
            lf[k] = rule.log_weights[k] + zero_term + pos_term;
            zeta[i * q + k] = if pi > 0.0 { pi / (pi + p0) } else { 0.0 };
        }
        let lse = log_sum_exp(&lf);
        loglik += lse - s.log_fact;
        for k in 0..q {
            post[i * q + k] = (lf[k] - lse).exp();
        }
    }
    ZipEStep { loglik, post, zeta }
}

/// Weighted Poisson M-step for (β₀, σ) given EM weights; concave.
fn zip_mstep(subjects: &[Subject], e: &ZipEStep, start: [f64; 2]) -> [f64; 2] {
    let rule = normal_rule();
    let q = rule.nodes.len();
    let f = |beta0: f64, sigma: f64| {
        let mut val = 0.0;
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for (i, s) in subjects.iter().enumerate() {
            if s.size == 0.0 {
                continue;
            }
            for k in 0..q {
                let r = e.post[i * q + k];
                if r == 0.0 {
                    continue;
                }
                let z = rule.nodes[k];
                let eta = beta0 + sigma * z;
                let exposure = s.size - s.zeros * e.zeta[i * q + k];
                let mu = exposure * eta.exp();
                val += r * (s.total * eta - mu);
                let d1 = r * (s.total - mu);
                g[0] += d1;
                g[1] += d1 * z;
                h[0][0] -= r * mu;
                h[0][1] -= r * mu * z;
                h[1][1] -= r * mu * z * z;
            }
        }
        h[1][0] = h[0][1];
        (val, g, h)
    };
    newton_ascent(f, start, 50).0
}

/// EM fit of the zero-inflated Poisson random-intercept model with a
/// slice-level structural-zero probability capped at `pi_cap`.
/// Returns `None` when every observation is zero.
pub fn fit_zip_glmm<G: AsRef<[f64]>>(groups: &[G], pi_cap: f64, max_iter: usize) -> Result<Option<GlmmFit>> {
    let subjects = summarize(groups)?;
    let observed: Vec<&Subject> = subjects.iter().filter(|s| s.size > 0.0).collect();
    if observed.is_empty() {
        return Err(invalid("slice has no observations"));
    }
    let n_obs: f64 = observed.iter().map(|s| s.size).sum();
    let n_zero: f64 = observed.iter().map(|s| s.zeros).sum();
    let tot: f64 = observed.iter().map(|s| s.total).sum();
    if tot == 0.0 {
        return Ok(None);
    }

    let zero_frac = n_zero / n_obs;
    let pos_mean = tot / (n_obs - n_zero);
    let p0 = (-pos_mean).exp();
    let mut pi = if n_zero == 0.0 {
        0.0
    } else {
        ((zero_frac - p0) / (1.0 - p0)).clamp(0.05, pi_cap)
    };
    let single = observed.len() < 2;
    let (b0, s0) = moment_start(&subjects, pi);
    let mut theta = [b0, if single { 0.0 } else { s0 }];
    let mut e = zip_estep(&subjects, theta[0], theta[1], pi);
    let mut trace = vec![e.loglik];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let structural: f64 = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let q = normal_rule().nodes.len();
                (0..q).map(|k| e.post[i * q + k] * e.zeta[i * q + k]).sum::<f64>() * s.zeros
            })
            .sum();
        pi = (structural / n_obs).clamp(0.0, pi_cap);
        theta = if single {
            // σ = 0: every node carries the same structural-zero weight
            let i = subjects.iter().position(|x| x.size > 0.0).unwrap_or(0);
            let s = subjects[i];
            let exposure = s.size - s.zeros * e.zeta[i * normal_rule().nodes.len()];
            [(s.total / exposure).ln(), 0.0]
        } else {
            zip_mstep(&subjects, &e, theta)
        };
        let next = zip_estep(&subjects, theta[0], theta[1], pi);
        let prev = e.loglik;
        e = next;
        trace.push(e.loglik);
        if (e.loglik - prev).abs() < 1e-10 * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
    }
    let rule = normal_rule();
    let q = rule.nodes.len();
    let effects = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.size == 0.0 {
                0.0
            } else {
                (0..q).map(|k| e.post[i * q + k] * theta[1] * rule.nodes[k]).sum()
            }
        })
        .collect();
    Ok(Some(GlmmFit {
        beta0: theta[0],
        sigma: theta[1],
        zero_prob: pi,
        effects,
        loglik: e.loglik,
        iterations,
        converged,
        trace,
    }))
}
