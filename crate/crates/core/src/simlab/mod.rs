//! Simulation study: scenario description, data-generating process,
//! replication harness and accuracy metrics.

pub mod dgp;
mod harness;
pub mod metrics;
mod scenario;

pub use dgp::{gen_covariates, gen_latent_x, gen_outcome, gen_pi_profile, gen_surrogates, piecewise_layout};
pub use harness::{run_replications, simulate_replicate, MetricRow, MetricsReport, ReplicateRecord, SimulatedReplicate};
pub use metrics::{compute_beta_metrics, compute_pi_metrics, compute_x_mise, improvement_ratio, BetaMetrics};
pub use scenario::{BetaShape, PiMode, ScenarioConfig};
