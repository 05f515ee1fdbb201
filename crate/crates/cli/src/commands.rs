//! Subcommand definitions and their implementations.

use crate::error::{CliError, CliResult};
use crate::io::{self, CorrectionMeta, LabeledDataset, Outcomes, TimeNormalization};
use crate::transform::{mean_abs_deviation, mean_curve, scale_curves};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use zifqr_core::inference::{pointwise_bootstrap_ci, wild_bootstrap_global_test, Multiplier};
use zifqr_core::quantreg::{fit_joint, fit_separate_all, select_k_bic};
use zifqr_core::simlab::{run_replications, simulate_replicate, ScenarioConfig};
use zifqr_core::zicorrect::{correct, Method};
use zifqr_core::{BasisKind, BasisSystem, RunConfig, TimeGrid};

#[derive(Debug, Parser)]
#[command(name = "zifqr", version, about = "Zero-inflated functional covariates and joint quantile regression")]
pub struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation scenario and write aggregate metrics.
    Simulate(SimulateArgs),
    /// Recover latent curves from a long-format count file.
    Correct(CorrectArgs),
    /// Fit quantile regression on corrected covariates.
    FitQr(FitQrArgs),
    /// Wild-bootstrap test of a null functional effect.
    GlobalTest(GlobalTestArgs),
    /// Compare two fits (or two corrections) after common scaling.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Number of Monte Carlo replications; overrides `R` in the scenario.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the data, outcomes and truth of this replication.
    #[arg(long)]
    pub emit_replicate: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "be-zime")]
    pub method: String,
    /// Working segments for be-zime.
    #[arg(long, default_value_t = 1)]
    pub segments: usize,
    #[arg(long, default_value = "bspline")]
    pub basis: BasisKind,
    /// Basis dimension, or `auto` for BIC selection (needs --outcomes).
    #[arg(long = "K", default_value = "4")]
    pub k: String,
    #[arg(long, value_delimiter = ',')]
    pub k_candidates: Option<Vec<usize>>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub taus: Vec<f64>,
    /// `unit` or `minutes:START:END`.
    #[arg(long, default_value = "unit")]
    pub time: TimeNormalization,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitQrArgs {
    #[arg(long)]
    pub corrected: PathBuf,
    #[arg(long)]
    pub outcomes: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub joint: bool,
    /// Corrected directory whose mean trajectory sets the common scale.
    #[arg(long)]
    pub scale_by: Option<PathBuf>,
    /// Bootstrap draws for pointwise bands; 0 disables them.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GlobalTestArgs {
    #[arg(long)]
    pub corrected: PathBuf,
    #[arg(long)]
    pub outcomes: PathBuf,
    #[arg(long = "B", default_value_t = 1000)]
    pub b: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// `bernoulli` (values 0/1) or `rademacher` (values ±1).
    #[arg(long, default_value = "bernoulli")]
    pub multiplier: Multiplier,
    #[arg(long)]
    pub scale_by: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seed from `ZIFQR_SEED` when set, else the flag value.
pub fn effective_seed(flag: u64) -> CliResult<u64> {
    match std::env::var("ZIFQR_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Usage(format!("ZIFQR_SEED `{s}` is not an integer"))),
        Err(_) => Ok(flag),
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Correct(a) => correct_cmd(&a),
        Command::FitQr(a) => fit_qr(&a),
        Command::GlobalTest(a) => global_test(&a),
        Command::Compare(a) => compare(&a).map(|_| ()),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn buffered(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let mut cfg: ScenarioConfig = io::read_toml(&a.scenario)?;
    if let Some(r) = a.replicates {
        cfg.replications = r;
    }
    let seed = effective_seed(a.seed)?;
    cfg.validate()?;
    let methods = cfg.resolve_methods()?;
    create_dir(&a.out)?;
    let report = run_replications(&cfg, &methods, seed)?;
    io::write_aggregate(buffered(&a.out.join("aggregate.csv"))?, &report)?;
    io::write_records(buffered(&a.out.join("replicates.csv"))?, &report)?;
    if let Some(r) = a.emit_replicate {
        let grid = TimeGrid::equispaced(cfg.len)?;
        let sim = simulate_replicate(&cfg, &grid, seed, r)?;
        let subjects: Vec<String> = (1..=cfg.n).map(|i| format!("s{i}")).collect();
        let ds = LabeledDataset { subjects: subjects.clone(), data: sim.data };
        io::emit_dataset(buffered(&a.out.join(format!("data_r{r}.csv")))?, &ds)?;
        io::write_outcomes(&a.out.join(format!("outcomes_r{r}.csv")), &subjects, &sim.y, &sim.z)?;
        let header: Vec<String> = grid.points().iter().map(|t| t.to_string()).collect();
        io::write_matrix(&a.out.join(format!("truth_r{r}.csv")), "subject_id", &subjects, &header, &sim.x)?;
    }
    let failures: f64 = report.rows.iter().filter(|r| r.metric == "failures").map(|r| r.value).sum();
    println!(
        "{}: {} replications, {} methods, {} failed fits -> {}",
        cfg.scenario_id,
        cfg.replications,
        methods.len(),
        failures,
        a.out.join("aggregate.csv").display()
    );
    Ok(())
}

fn parse_method(name: &str, segments: usize) -> CliResult<Method> {
    let m: Method = name.parse()?;
    match m {
        Method::Oracle => Err(CliError::Usage("the oracle needs the true curves and is simulation-only".into())),
        Method::BeZime(_) if name == "be-zime" => Ok(Method::BeZime(segments)),
        m => Ok(m),
    }
}

pub fn correct_cmd(a: &CorrectArgs) -> CliResult<()> {
    if a.segments == 0 {
        return Err(CliError::Usage("--segments must be positive".into()));
    }
    let method = parse_method(&a.method, a.segments)?;
    let ds = io::ingest_csv(&a.input, a.time)?;
    let grid = ds.data.grid().clone();
    let run = RunConfig { convergence_tol: a.tol, max_iter: a.max_iter, tau_levels: a.taus.clone(), ..RunConfig::default() };
    run.validate()?;
    create_dir(&a.out)?;

    let (basis, cov, profile) = if a.k == "auto" {
        let path = a.outcomes.as_ref().ok_or_else(|| CliError::Usage("--K auto needs --outcomes".into()))?;
        let out = io::read_outcomes(path)?.aligned_to(&ds.subjects)?;
        let candidates = a.k_candidates.clone().unwrap_or_else(|| run.k_candidates.clone());
        let mut fits = Vec::new();
        for &k in &candidates {
            let basis = BasisSystem::new(a.basis, k, &grid)?;
            let (cov, profile) = correct(method, &ds.data, &basis, &run, None)?;
            fits.push((basis, cov, profile));
        }
        let cands: Vec<(usize, DMatrix<f64>)> = fits.iter().map(|(b, c, _)| (b.k(), c.coeffs.clone())).collect();
        let sel = select_k_bic(&out.y, &cands, out.z.matrix(), &a.taus)?;
        let mut w = csv::Writer::from_path(a.out.join("bic.csv"))?;
        w.write_record(["K", "bic"])?;
        for (k, s) in &sel.scores {
            w.write_record([k.to_string(), s.map(|v| v.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        let pick = fits.iter().position(|(b, _, _)| b.k() == sel.k).expect("selected K is a candidate");
        fits.swap_remove(pick)
    } else {
        let k: usize = a.k.parse().map_err(|_| CliError::Usage(format!("--K must be an integer or `auto`, got `{}`", a.k)))?;
        let basis = BasisSystem::new(a.basis, k, &grid)?;
        let (cov, profile) = correct(method, &ds.data, &basis, &run, None)?;
        (basis, cov, profile)
    };

    let kcols: Vec<String> = (1..=basis.k()).map(|k| format!("x{k}")).collect();
    io::write_matrix(&a.out.join("coefficients.csv"), "subject_id", &ds.subjects, &kcols, &cov.coeffs)?;
    let tcols: Vec<String> = grid.points().iter().map(|t| t.to_string()).collect();
    io::write_matrix(&a.out.join("curves.csv"), "subject_id", &ds.subjects, &tcols, &cov.curves)?;
    let segments = profile.as_ref().map(|p| p.segmentation().boundaries().to_vec());
    if let Some(p) = &profile {
        let b = p.segmentation().boundaries();
        let scols: Vec<String> = b.windows(2).map(|w| format!("{}-{}", w[0], w[1])).collect();
        io::write_matrix(&a.out.join("pi.csv"), "subject_id", &ds.subjects, &scols, p.pi())?;
    }
    let meta = CorrectionMeta {
        method: method.name(),
        basis: a.basis,
        k: basis.k(),
        grid: grid.points().to_vec(),
        segments,
        iterations: cov.iterations,
        converged: cov.converged,
    };
    io::write_toml(&a.out.join("meta.toml"), &meta)?;
    println!(
        "{}: n={} J={} L={} K={} iterations={} converged={} -> {}",
        meta.method,
        ds.data.n(),
        ds.data.replicates(),
        grid.len(),
        meta.k,
        meta.iterations,
        meta.converged,
        a.out.display()
    );
    Ok(())
}

/// Corrected covariates ready for stage two.
struct Stage2Input {
    basis: BasisSystem,
    coeffs: DMatrix<f64>,
    outcomes: Outcomes,
}

fn load_corrected(dir: &Path, outcomes: &Path, scale_by: Option<&Path>) -> CliResult<Stage2Input> {
    let meta: CorrectionMeta = io::read_toml(&dir.join("meta.toml"))?;
    let grid = TimeGrid::new(meta.grid.clone())?;
    let basis = BasisSystem::new(meta.basis, meta.k, &grid)?;
    let (subjects, _, coeffs) = io::read_matrix(&dir.join("coefficients.csv"))?;
    if coeffs.ncols() != meta.k {
        return Err(CliError::Data(format!("coefficients.csv has {} columns, meta says K={}", coeffs.ncols(), meta.k)));
    }
    let coeffs = match scale_by {
        Some(reference) => {
            let (_, _, curves) = io::read_matrix(&dir.join("curves.csv"))?;
            let (_, _, ref_curves) = io::read_matrix(&reference.join("curves.csv"))?;
            if curves.ncols() != grid.len() || ref_curves.ncols() != grid.len() {
                return Err(CliError::Data("curves and reference are on different grids".into()));
            }
            basis.project_rows(&scale_curves(&curves, &mean_curve(&ref_curves))?)
        }
        None => coeffs,
    };
    let outcomes = io::read_outcomes(outcomes)?.aligned_to(&subjects)?;
    Ok(Stage2Input { basis, coeffs, outcomes })
}

pub fn fit_qr(a: &FitQrArgs) -> CliResult<()> {
    let input = load_corrected(&a.corrected, &a.outcomes, a.scale_by.as_deref())?;
    let z = input.outcomes.z.matrix();
    let y = &input.outcomes.y;
    let fit = if a.joint {
        fit_joint(y, &input.coeffs, z, &a.taus)?
    } else {
        fit_separate_all(y, &input.coeffs, z, &a.taus)?
    }
    .with_curves(&input.basis);
    create_dir(&a.out)?;

    let grid = input.basis.grid().points();
    let mut w = csv::Writer::from_path(a.out.join("beta.csv"))?;
    w.write_record(["tau", "t", "beta"])?;
    for (h, tau) in a.taus.iter().enumerate() {
        for (l, t) in grid.iter().enumerate() {
            w.write_record([tau.to_string(), t.to_string(), fit.beta_curves[(h, l)].to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(a.out.join("coefficients.csv"))?;
    w.write_record(["tau", "term", "value"])?;
    for (h, tau) in a.taus.iter().enumerate() {
        for k in 0..fit.gamma.ncols() {
            w.write_record([tau.to_string(), format!("gamma{}", k + 1), fit.gamma[(h, k)].to_string()])?;
        }
        for (c, name) in input.outcomes.z.names().iter().enumerate() {
            w.write_record([tau.to_string(), name.clone(), fit.theta[(h, c)].to_string()])?;
        }
        w.write_record([tau.to_string(), "objective".into(), fit.objective[h].to_string()])?;
    }
    w.flush()?;

    if a.bootstrap > 0 {
        let seed = effective_seed(a.seed)?;
        let bands = pointwise_bootstrap_ci(y, &input.coeffs, z, &input.basis, &a.taus, a.bootstrap, a.level, seed)?;
        let mut w = csv::Writer::from_path(a.out.join("bands.csv"))?;
        w.write_record(["tau", "t", "estimate", "lower", "upper"])?;
        for (h, tau) in a.taus.iter().enumerate() {
            for (l, t) in grid.iter().enumerate() {
                w.write_record([
                    tau.to_string(),
                    t.to_string(),
                    bands.estimate[(h, l)].to_string(),
                    bands.lower[(h, l)].to_string(),
                    bands.upper[(h, l)].to_string(),
                ])?;
            }
        }
        w.flush()?;
        if bands.flagged > 0 {
            eprintln!("warning: {} bootstrap draws dropped after repeated rank deficiency", bands.flagged);
        }
    }
    println!("fitted {} quantile level(s), joint={} -> {}", a.taus.len(), a.joint, a.out.display());
    Ok(())
}

pub fn global_test(a: &GlobalTestArgs) -> CliResult<()> {
    let input = load_corrected(&a.corrected, &a.outcomes, a.scale_by.as_deref())?;
    let seed = effective_seed(a.seed)?;
    let res = wild_bootstrap_global_test(
        &input.outcomes.y,
        &input.coeffs,
        input.outcomes.z.matrix(),
        &input.basis,
        a.b,
        seed,
        a.multiplier,
    )?;
    println!("stat={} p_value={} B={}", res.stat, res.p_value, res.b);
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["stat", "p_value", "B", "seed"])?;
        w.write_record([res.stat.to_string(), res.p_value.to_string(), res.b.to_string(), seed.to_string()])?;
        w.flush()?;
    }
    Ok(())
}

fn read_beta(dir: &Path) -> CliResult<(Vec<f64>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(dir.join("beta.csv"))?;
    let mut taus: Vec<f64> = Vec::new();
    let mut vals = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| CliError::Data(format!("bad number `{}`", &rec[i])));
        let tau = num(0)?;
        if taus.last() != Some(&tau) {
            taus.push(tau);
        }
        vals.push(num(2)?);
    }
    if taus.is_empty() || vals.len() % taus.len() != 0 {
        return Err(CliError::Data(format!("{} is empty or ragged", dir.join("beta.csv").display())));
    }
    let len = vals.len() / taus.len();
    Ok((taus.clone(), DMatrix::from_row_slice(taus.len(), len, &vals)))
}

/// Compares `beta.csv` files per quantile level when both directories hold
/// fits; otherwise scales both corrections by the mean trajectory of `a`
/// and compares the scaled mean trajectories.
pub fn compare(a: &CompareArgs) -> CliResult<Vec<(Option<f64>, f64)>> {
    let rows: Vec<(Option<f64>, f64)> = if a.a.join("beta.csv").exists() && a.b.join("beta.csv").exists() {
        let (ta, ba) = read_beta(&a.a)?;
        let (tb, bb) = read_beta(&a.b)?;
        if ta != tb {
            return Err(CliError::Data("the two fits use different quantile levels".into()));
        }
        let dev = mean_abs_deviation(&ba, &bb)?;
        ta.into_iter().map(Some).zip(dev).collect()
    } else {
        let (_, _, ca) = io::read_matrix(&a.a.join("curves.csv"))?;
        let (_, _, cb) = io::read_matrix(&a.b.join("curves.csv"))?;
        let reference = mean_curve(&ca);
        let sa = mean_curve(&scale_curves(&ca, &reference)?);
        let sb = mean_curve(&scale_curves(&cb, &reference)?);
        let ma = DMatrix::from_row_slice(1, sa.len(), &sa);
        let mb = DMatrix::from_row_slice(1, sb.len(), &sb);
        vec![(None, mean_abs_deviation(&ma, &mb)?[0])]
    };
    let mut text = String::from("tau,mean_abs_deviation\n");
    for (tau, d) in &rows {
        text.push_str(&format!("{},{}\n", tau.map(|t| t.to_string()).unwrap_or_default(), d));
    }
    print!("{text}");
    if let Some(path) = &a.out {
        fs::write(path, text)?;
    }
    Ok(rows)
}
