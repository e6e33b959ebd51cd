//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::elicitation::{elicit_hyperparams, prior_edge_moments, EdgePriorTarget};
use crate::error::{Error, Result};
use crate::experiments::{multistart, run_experiment, Experiment, MAX_FPR};
use crate::grid::{log_spaced, run_grid_problem, Criterion, GridSpec, DEFAULT_EBIC_GAMMA};
use crate::io;
use crate::postprocess::{fdr_threshold, node_degrees, pauc, upper_triangle};
use crate::problem::Problem;
use crate::simgen::{generate, EffectMode, ScenarioSpec};
use crate::types::{
    center_columns, n_pairs, validate_inputs, AuxiliaryMatrix, Criteria, Engine, FitResult,
    ModelConfig, Variant,
};

#[derive(Debug, Parser)]
#[command(name = "navgraph", version, about = "Gaussian graphical models informed by node-level auxiliary variables")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for grid points.
    #[arg(long, global = true, env = "NAVGRAPH_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic replicates with their ground truth.
    Simulate(SimulateArgs),
    /// Fit a model with grid search over the spike scale.
    Fit(FitArgs),
    /// Solve for the sparsity hyperparameters from a prior edge count.
    Elicit(ElicitArgs),
    /// Score fitted PPIs against a known truth.
    Evaluate(EvaluateArgs),
    /// Re-run a simulation experiment end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// reference, null, negative, combined, similarity or table1-rowK.
    #[arg(long, default_value = "reference")]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scaling {
    /// Centre columns only.
    Center,
    /// Centre and scale columns to unit variance.
    Standardize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// N × P data matrix with a header of node names.
    #[arg(long)]
    pub data: PathBuf,
    /// P × Q auxiliary matrix; the first column names the node of each row.
    #[arg(long)]
    pub aux: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Variant::GMSS)]
    pub model: Variant,
    #[arg(long, value_enum, default_value_t = Engine::Vbecm)]
    pub engine: Engine,
    /// Comma-separated spike standard deviations; nine log-spaced values in
    /// [0.01, 1] by default.
    #[arg(long, value_delimiter = ',')]
    pub nu0_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100.0)]
    pub nu1: f64,
    #[arg(long, value_enum, default_value_t = Criterion::Aic)]
    pub criterion: Criterion,
    #[arg(long, default_value_t = DEFAULT_EBIC_GAMMA)]
    pub ebic_gamma: f64,
    /// Prior mean of the edge count; requires --sd-edges.
    #[arg(long, requires = "sd_edges")]
    pub mean_edges: Option<f64>,
    /// Prior standard deviation of the edge count; requires --mean-edges.
    #[arg(long, requires = "mean_edges")]
    pub sd_edges: Option<f64>,
    /// Target Bayesian FDR for the selected_fdr column.
    #[arg(long)]
    pub fdr: Option<f64>,
    #[arg(long, value_enum, default_value_t = Scaling::Center)]
    pub scaling: Scaling,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Skip the restarts from top-ranked edges.
    #[arg(long)]
    pub no_restarts: bool,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    #[arg(long)]
    pub nodes: usize,
    /// Defaults to 1% of all possible edges.
    #[arg(long)]
    pub mean_edges: Option<f64>,
    /// Defaults to 3% of all possible edges.
    #[arg(long)]
    pub sd_edges: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// edges.csv written by fit.
    #[arg(long)]
    pub edges: PathBuf,
    /// Square 0/1 adjacency with node labels in the first column.
    #[arg(long)]
    pub truth: PathBuf,
    /// variables.csv written by fit.
    #[arg(long, requires = "truth_effects")]
    pub variables: Option<PathBuf>,
    /// truth_effects.csv written by simulate.
    #[arg(long, requires = "variables")]
    pub truth_effects: Option<PathBuf>,
    #[arg(long, default_value_t = MAX_FPR)]
    pub max_fpr: f64,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// table1-row1 … table1-row12, null, similarity or ecm-vs-vbecm.
    pub experiment: String,
    /// Defaults to 20 for table rows and 10 otherwise.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub nu0_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Criterion::Aic)]
    pub criterion: Criterion,
    /// Jittered starts for the ecm-vs-vbecm multi-start study; 0 skips it.
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
}

/// Parses the process arguments, runs the command and maps the outcome to the
/// exit-code contract: 0 success, 1 invalid input, 2 non-convergence.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: at least one fit did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence(_) | Error::GridFailed(_) | Error::NotPositiveDefinite(_) => 2,
        _ => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

pub fn run(cli: &Cli) -> Result<Status> {
    let workers = cli.workers.unwrap_or(1);
    if workers == 0 {
        return Err(Error::Validation("--workers must be positive".into()));
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("navgraph-out"));
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli.seed, &out).map(|_| Status::Converged),
        Command::Fit(a) => cmd_fit(a, cli.seed, workers, &out),
        Command::Elicit(a) => cmd_elicit(a, cli.out.as_deref()).map(|_| Status::Converged),
        Command::Evaluate(a) => cmd_evaluate(a, cli.out.as_deref()).map(|_| Status::Converged),
        Command::Reproduce(a) => cmd_reproduce(a, cli.seed, workers, &out),
    }
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(format!("{:x}", Sha256::digest(fs::read(path)?)))
}

pub fn scenario_by_name(name: &str) -> Result<ScenarioSpec> {
    let r = ScenarioSpec::reference();
    Ok(match name {
        "reference" => r,
        "null" => ScenarioSpec::null(),
        "negative" => ScenarioSpec {
            effect_mode: EffectMode::Negative,
            ..r
        },
        "combined" => ScenarioSpec {
            effect_mode: EffectMode::Combined,
            ..r
        },
        "similarity" => ScenarioSpec::similarity(),
        _ => {
            let row = name
                .strip_prefix("table1-row")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::Validation(format!("unknown scenario '{name}'")))?;
            ScenarioSpec::table1_row(row)?
        }
    })
}

#[derive(Serialize)]
struct SimulationManifest<'a> {
    software_version: &'static str,
    scenario: &'a str,
    spec: &'a ScenarioSpec,
    zeta: f64,
    effect_reading: &'static str,
    n_edges: usize,
    created_unix: u64,
}

pub fn cmd_simulate(a: &SimulateArgs, seed: u64, out: &Path) -> Result<()> {
    let base = scenario_by_name(&a.scenario)?;
    if a.replicates == 0 {
        return Err(Error::Validation("--replicates must be positive".into()));
    }
    for r in 0..a.replicates {
        let spec = base.with_seed(seed.wrapping_add(r as u64));
        let rep = generate(&spec)?;
        let dir = out.join(format!("rep_{:03}", r + 1));
        fs::create_dir_all(&dir)?;
        let names = rep.data.node_names().to_vec();
        io::write_data(&dir.join("Y.csv"), &rep.data)?;
        io::write_auxiliary(&dir.join("V.csv"), &rep.aux, &names)?;
        io::write_adjacency(&dir.join("truth_adjacency.csv"), &rep.adjacency, &names)?;
        let effects = DMatrix::from_column_slice(rep.effects.len(), 1, &rep.effects);
        io::write_table(
            &dir.join("truth_effects.csv"),
            &["beta".to_string()],
            Some(("name", rep.aux.var_names())),
            &effects,
        )?;
        io::write_json(
            &dir.join("manifest.json"),
            &SimulationManifest {
                software_version: env!("CARGO_PKG_VERSION"),
                scenario: &a.scenario,
                spec: &spec,
                zeta: rep.zeta,
                effect_reading: "log-normal with log-scale mean 0.5 and sd 0.1",
                n_edges: upper_triangle(&rep.adjacency).iter().filter(|&&b| b).count(),
                created_unix: unix_time(),
            },
        )?;
    }
    println!("wrote {} replicate(s) to {}", a.replicates, out.display());
    Ok(())
}

#[derive(Serialize)]
struct GridPointSummary {
    nu0: f64,
    sigma0: Option<f64>,
    seed: u64,
    criteria: Option<Criteria>,
    converged: Option<bool>,
    iterations: Option<usize>,
    final_objective: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct FitSummary {
    model: Variant,
    engine: Engine,
    criterion: Criterion,
    selected_nu0: f64,
    selected_sigma0: Option<f64>,
    criteria: Criteria,
    converged: bool,
    iterations: usize,
    final_objective: f64,
    q_value: Option<f64>,
    n_selected_edges: usize,
    sparsity: f64,
    degrees: Vec<(String, usize)>,
    fdr_target: Option<f64>,
    fdr_threshold: Option<f64>,
    n_fdr_edges: Option<usize>,
    n0: f64,
    t0_sq: f64,
    runtime_seconds: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct FitManifest {
    software_version: &'static str,
    seed: u64,
    workers: usize,
    model: ModelConfig,
    grid: GridSpec,
    engine: Engine,
    scaling: String,
    inputs: Vec<(String, String)>,
    grid_points: Vec<GridPointSummary>,
    started_unix: u64,
    finished_unix: u64,
}

pub fn cmd_fit(a: &FitArgs, seed: u64, workers: usize, out: &Path) -> Result<Status> {
    let started = unix_time();
    let mut warnings = Vec::new();
    let raw = io::read_data(&a.data)?;
    let node_names = raw.node_names().to_vec();
    let mut variant = a.model;
    let aux = match &a.aux {
        Some(path) => io::read_auxiliary(path, &node_names)?,
        None => AuxiliaryMatrix::empty(raw.n_nodes()),
    };
    if variant.uses_auxiliary() && aux.n_vars() == 0 {
        let msg = format!("no auxiliary variables supplied; fitting GM* instead of {variant}");
        eprintln!("warning: {msg}");
        warnings.push(msg);
        variant = Variant::GMStar;
    }
    let p = raw.n_nodes();
    let target = match (a.mean_edges, a.sd_edges) {
        (Some(m), Some(s)) => EdgePriorTarget::new(m, s, p)?,
        _ => EdgePriorTarget::default_for(p),
    };
    let (n0, t0_sq) = elicit_hyperparams(&target)?;
    let cfg = ModelConfig {
        variant,
        n0,
        t0_sq,
        b_o: aux.n_vars().max(1) as f64,
        max_iter: a.max_iter,
        elbo_tol: a.tol,
        seed,
        edge_restarts: !a.no_restarts,
        nu1: a.nu1,
        ..ModelConfig::default()
    };
    let report = validate_inputs(&raw, &aux, &cfg);
    if !report.is_ok() {
        let msgs: Vec<String> = report.errors.iter().map(|e| e.to_string()).collect();
        return Err(Error::Validation(msgs.join("; ")));
    }
    warnings.extend(report.warnings.iter().map(|w| w.to_string()));
    if let Some(f) = a.fdr {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Validation("--fdr must lie in (0, 1)".into()));
        }
    }
    let data = match a.scaling {
        Scaling::Center => center_columns(&raw)?,
        Scaling::Standardize => center_columns(&raw.scale_columns())?,
    };
    let grid = GridSpec {
        nu0_values: a.nu0_grid.clone().unwrap_or_else(|| log_spaced(0.01, 1.0, 9)),
        nu1: a.nu1,
        criterion: a.criterion,
        ebic_gamma: a.ebic_gamma,
        workers,
    };
    let problem = Problem::new(&data, &aux, variant)?;
    let outcome = run_grid_problem(&problem, &cfg, &grid, a.engine)?;
    warnings.extend(outcome.warnings.iter().cloned());
    let grid_points = outcome
        .points
        .iter()
        .map(|pt| match &pt.outcome {
            Ok(f) => GridPointSummary {
                nu0: pt.nu0,
                sigma0: pt.sigma0,
                seed: pt.seed,
                criteria: Some(f.criteria.clone()),
                converged: Some(f.converged),
                iterations: Some(f.iterations),
                final_objective: Some(f.final_objective()),
                error: None,
            },
            Err(e) => GridPointSummary {
                nu0: pt.nu0,
                sigma0: pt.sigma0,
                seed: pt.seed,
                criteria: None,
                converged: None,
                iterations: None,
                final_objective: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    let runtime: f64 = outcome.fits().map(|f| f.runtime_seconds).sum();
    let fit = outcome.into_best();

    fs::create_dir_all(out)?;
    let ppis = upper_triangle(&fit.edge_ppi);
    let kappa = a.fdr.map(|t| fdr_threshold(&ppis, t));
    write_edges(&out.join("edges.csv"), &fit, &node_names, kappa)?;
    write_variables(&out.join("variables.csv"), &fit, aux.var_names())?;
    write_trace(&out.join("elbo_trace.csv"), &fit.elbo_trace)?;

    let mut mask = fit.edge_ppi.map(|v| v >= 0.5);
    mask.fill_diagonal(false);
    let degrees = node_degrees(&mask)?;
    let n_selected = upper_triangle(&mask).iter().filter(|&&b| b).count();
    let summary = FitSummary {
        model: variant,
        engine: a.engine,
        criterion: a.criterion,
        selected_nu0: fit.nu0_used,
        selected_sigma0: fit.sigma0_used,
        criteria: fit.criteria.clone(),
        converged: fit.converged,
        iterations: fit.iterations,
        final_objective: fit.final_objective(),
        q_value: fit.q_value,
        n_selected_edges: n_selected,
        sparsity: n_selected as f64 / n_pairs(p) as f64,
        degrees: node_names.iter().cloned().zip(degrees).collect(),
        fdr_target: a.fdr,
        fdr_threshold: kappa,
        n_fdr_edges: kappa.map(|k| ppis.iter().filter(|&&v| v > k).count()),
        n0,
        t0_sq,
        runtime_seconds: runtime,
        warnings,
    };
    io::write_json(&out.join("summary.json"), &summary)?;

    let mut inputs = vec![(a.data.display().to_string(), file_digest(&a.data)?)];
    if let Some(path) = &a.aux {
        inputs.push((path.display().to_string(), file_digest(path)?));
    }
    let manifest = FitManifest {
        software_version: env!("CARGO_PKG_VERSION"),
        seed,
        workers,
        model: cfg,
        grid,
        engine: a.engine,
        scaling: format!("{:?}", a.scaling).to_lowercase(),
        inputs,
        grid_points,
        started_unix: started,
        finished_unix: unix_time(),
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "{} {:?}: nu0={} edges={} sparsity={:.4} converged={}",
        variant, a.engine, fit.nu0_used, n_selected, summary.sparsity, fit.converged
    );
    Ok(if fit.converged {
        Status::Converged
    } else {
        Status::NotConverged
    })
}

fn write_edges(path: &Path, fit: &FitResult, names: &[String], kappa: Option<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_i", "node_j", "ppi", "omega", "selected_mpm", "selected_fdr"])?;
    let omega = fit.omega();
    let p = names.len();
    for j in 0..p {
        for i in 0..j {
            let ppi = fit.edge_ppi[(i, j)];
            let fdr = match kappa {
                Some(k) => u8::from(ppi > k).to_string(),
                None => String::new(),
            };
            w.write_record([
                names[i].clone(),
                names[j].clone(),
                io::format_float(ppi),
                io::format_float(omega[(i, j)]),
                u8::from(ppi >= 0.5).to_string(),
                fdr,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_variables(path: &Path, fit: &FitResult, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "ppi", "beta_mean", "beta_sd", "ci_low", "ci_high"])?;
    for (name, e) in names.iter().zip(&fit.effects) {
        w.write_record([
            name.clone(),
            io::format_float(e.ppi),
            io::format_float(e.mean),
            io::format_float(e.sd),
            io::format_float(e.ci_low),
            io::format_float(e.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective"])?;
    for (k, v) in trace.iter().enumerate() {
        w.write_record([(k + 1).to_string(), io::format_float(*v)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Elicited {
    n_nodes: usize,
    mean_edges: f64,
    sd_edges: f64,
    n0: f64,
    t0_sq: f64,
    achieved_mean: f64,
    achieved_sd: f64,
}

pub fn cmd_elicit(a: &ElicitArgs, out: Option<&Path>) -> Result<()> {
    let d = EdgePriorTarget::default_for(a.nodes);
    let target = EdgePriorTarget::new(
        a.mean_edges.unwrap_or(d.mean_edges),
        a.sd_edges.unwrap_or(d.sd_edges),
        a.nodes,
    )?;
    let (n0, t0_sq) = elicit_hyperparams(&target)?;
    let (achieved_mean, achieved_sd) = prior_edge_moments(n0, t0_sq, a.nodes)?;
    let res = Elicited {
        n_nodes: a.nodes,
        mean_edges: target.mean_edges,
        sd_edges: target.sd_edges,
        n0,
        t0_sq,
        achieved_mean,
        achieved_sd,
    };
    println!("{}", serde_json::to_string_pretty(&res)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        io::write_json(&dir.join("elicitation.json"), &res)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    max_fpr: f64,
    edge_pauc: f64,
    var_pauc: Option<f64>,
}

fn read_named_column(path: &Path, value: &str) -> Result<Vec<(String, f64)>> {
    let t = io::read_table(path, true)?;
    let col = t
        .columns
        .iter()
        .position(|c| c == value)
        .ok_or_else(|| Error::Validation(format!("{}: no '{value}' column", path.display())))?;
    Ok(t.rows
        .into_iter()
        .enumerate()
        .map(|(i, name)| (name, t.values[(i, col)]))
        .collect())
}

pub fn cmd_evaluate(a: &EvaluateArgs, out: Option<&Path>) -> Result<()> {
    let (names, truth) = io::read_adjacency(&a.truth)?;
    let ppi = io::read_edge_ppis(&a.edges, &names)?;
    let edge_pauc = pauc(&upper_triangle(&truth), &upper_triangle(&ppi), a.max_fpr)?;
    let var_pauc = match (&a.variables, &a.truth_effects) {
        (Some(v), Some(t)) => {
            let fitted = read_named_column(v, "ppi")?;
            let effects = read_named_column(t, "beta")?;
            let mut labels = Vec::new();
            let mut scores = Vec::new();
            for (name, beta) in effects {
                let s = fitted
                    .iter()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| Error::Validation(format!("variable '{name}' missing from fit")))?
                    .1;
                labels.push(beta != 0.0);
                scores.push(s);
            }
            Some(pauc(&labels, &scores, a.max_fpr)?)
        }
        _ => None,
    };
    let res = Evaluation {
        max_fpr: a.max_fpr,
        edge_pauc,
        var_pauc,
    };
    println!("{}", serde_json::to_string_pretty(&res)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        io::write_json(&dir.join("evaluation.json"), &res)?;
    }
    Ok(())
}

/// Spike and slab settings of the multi-start study.
const MULTISTART_NU0: f64 = 0.07;
const MULTISTART_SIGMA0: f64 = 1e-6;
const MULTISTART_JITTER: f64 = 1.0;

pub fn cmd_reproduce(a: &ReproduceArgs, seed: u64, workers: usize, out: &Path) -> Result<Status> {
    let experiment: Experiment = a.experiment.parse()?;
    let replicates = a.replicates.unwrap_or(match experiment {
        Experiment::Table1Row(_) => 20,
        _ => 10,
    });
    let grid = GridSpec {
        nu0_values: a.nu0_grid.clone().unwrap_or_else(|| log_spaced(0.01, 1.0, 9)),
        criterion: a.criterion,
        workers,
        ..GridSpec::default()
    };
    fs::create_dir_all(out)?;
    let report = run_experiment(experiment, replicates, seed, &grid, |r| {
        eprintln!(
            "replicate {} {} {:?}: edge pAUC {:.3}",
            r.replicate + 1,
            r.variant,
            r.engine,
            r.edge_pauc
        );
    })?;
    let mut w = csv::Writer::from_path(out.join("results.csv"))?;
    w.write_record([
        "replicate", "seed", "model", "engine", "nu0", "sigma0", "edge_pauc", "var_pauc",
        "max_var_ppi", "converged",
    ])?;
    let opt = |v: Option<f64>| v.map(io::format_float).unwrap_or_default();
    for r in &report.results {
        w.write_record([
            (r.replicate + 1).to_string(),
            r.seed.to_string(),
            r.variant.label().to_string(),
            format!("{:?}", r.engine).to_lowercase(),
            io::format_float(r.nu0),
            opt(r.sigma0),
            io::format_float(r.edge_pauc),
            opt(r.var_pauc),
            opt(r.max_var_ppi),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    let table = report.table();
    fs::write(out.join("table.txt"), &table)?;
    print!("{table}");
    io::write_json(&out.join("report.json"), &report)?;

    if experiment == Experiment::EcmVsVbecm && a.starts > 0 {
        let rep = generate(&ScenarioSpec::reference().with_seed(seed))?;
        let ms = multistart(&rep, a.starts, MULTISTART_NU0, MULTISTART_SIGMA0, MULTISTART_JITTER)?;
        let mut w = csv::Writer::from_path(out.join("multistart.csv"))?;
        w.write_record(["start", "ecm_q_value", "vbecm_elbo"])?;
        for (k, (q, e)) in ms.ecm_q_values.iter().zip(&ms.vbecm_elbos).enumerate() {
            w.write_record([(k + 1).to_string(), io::format_float(*q), io::format_float(*e)])?;
        }
        w.flush()?;
        println!(
            "multi-start variance: ECM Q {:.4e}, VBECM ELBO {:.4e}",
            ms.ecm_variance(),
            ms.vbecm_variance()
        );
    }
    Ok(if report.results.iter().all(|r| r.converged) {
        Status::Converged
    } else {
        Status::NotConverged
    })
}
