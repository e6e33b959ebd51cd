//! Grid search over the spike standard deviation ν₀ with information-criterion
//! model selection.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecm::{self, EcmConfig, SIGMA0_GRID};
use crate::error::{Error, Result};
use crate::problem::{log_det, Problem};
use crate::types::{AuxiliaryMatrix, Criteria, DataMatrix, Engine, FitResult, ModelConfig};
use crate::vbecm;

pub const DEFAULT_EBIC_GAMMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Ebic,
}

impl Criterion {
    pub fn pick(self, c: &Criteria) -> f64 {
        match self {
            Criterion::Aic => c.aic,
            Criterion::Bic => c.bic,
            Criterion::Ebic => c.ebic,
        }
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nu0_values: Vec<f64>,
    pub nu1: f64,
    pub criterion: Criterion,
    pub ebic_gamma: f64,
    pub workers: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nu0_values: log_spaced(0.01, 1.0, 9),
            nu1: 100.0,
            criterion: Criterion::Aic,
            ebic_gamma: DEFAULT_EBIC_GAMMA,
            workers: 1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nu0_values.is_empty() {
            return Err(Error::Validation("ν₀ grid is empty".into()));
        }
        if let Some(bad) = self
            .nu0_values
            .iter()
            .find(|&&v| !(v > 0.0 && v < self.nu1))
        {
            return Err(Error::Validation(format!(
                "grid value {bad} must lie in (0, nu1={})",
                self.nu1
            )));
        }
        if !(0.0..=1.0).contains(&self.ebic_gamma) {
            return Err(Error::Validation("ebic_gamma must lie in [0, 1]".into()));
        }
        if self.workers == 0 {
            return Err(Error::Validation("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Keeps the diagonal and every off-diagonal entry whose PPI is at least 0.5.
pub fn threshold_precision(omega: &DMatrix<f64>, ppi: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(omega.nrows(), omega.ncols(), |i, j| {
        if i == j || ppi[(i, j)] >= 0.5 {
            omega[(i, j)]
        } else {
            0.0
        }
    })
}

fn selected_edge_count(ppi: &DMatrix<f64>) -> usize {
    let p = ppi.nrows();
    (0..p)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .filter(|&(i, j)| ppi[(i, j)] >= 0.5)
        .count()
}

/// AIC, BIC and EBIC of the thresholded precision matrix. A thresholded matrix
/// that is not positive definite scores +∞ on every criterion.
pub fn compute_criteria(fit: &FitResult, problem: &Problem, ebic_gamma: f64) -> Criteria {
    criteria_for(fit.omega(), &fit.edge_ppi, problem, ebic_gamma)
}

pub fn criteria_for(
    omega: &DMatrix<f64>,
    ppi: &DMatrix<f64>,
    problem: &Problem,
    ebic_gamma: f64,
) -> Criteria {
    let thresholded = threshold_precision(omega, ppi);
    let logdet = match log_det(&thresholded) {
        Ok(v) => v,
        Err(_) => {
            return Criteria {
                aic: f64::INFINITY,
                bic: f64::INFINITY,
                ebic: f64::INFINITY,
            }
        }
    };
    let n = problem.n_samples as f64;
    let fit_term = -n * logdet + problem.gram.component_mul(&thresholded).sum();
    let edges = selected_edge_count(ppi) as f64;
    let bic = fit_term + n.ln() * edges;
    Criteria {
        aic: fit_term + 2.0 * edges,
        bic,
        ebic: bic + 4.0 * ebic_gamma * (problem.n_nodes as f64).ln() * edges,
    }
}

/// One grid point and its fit, or the reason it failed.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub nu0: f64,
    pub sigma0: Option<f64>,
    pub seed: u64,
    pub outcome: std::result::Result<FitResult, String>,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub best_index: usize,
    pub points: Vec<GridPoint>,
    pub criterion: Criterion,
    pub warnings: Vec<String>,
}

impl GridOutcome {
    pub fn best(&self) -> &FitResult {
        self.points[self.best_index]
            .outcome
            .as_ref()
            .expect("best point succeeded")
    }

    pub fn into_best(mut self) -> FitResult {
        self.points
            .swap_remove(self.best_index)
            .outcome
            .expect("best point succeeded")
    }

    pub fn fits(&self) -> impl Iterator<Item = &FitResult> {
        self.points.iter().filter_map(|p| p.outcome.as_ref().ok())
    }
}

fn fit_point(
    problem: &Problem,
    cfg: &ModelConfig,
    engine: Engine,
    nu0: f64,
    sigma0: Option<f64>,
    seed: u64,
) -> Result<FitResult> {
    let mut model = cfg.with_nu0(nu0);
    model.seed = seed;
    match engine {
        Engine::Vbecm => vbecm::run_problem(problem, &model),
        Engine::Ecm => {
            let ecm_cfg = EcmConfig::new(model, sigma0.unwrap_or(SIGMA0_GRID[0]))?;
            ecm::run_problem(problem, &ecm_cfg)
        }
    }
}

/// Fits every grid point in a pool of `grid.workers` threads and selects the
/// point with the smallest criterion. The VBECM grid is over ν₀; the ECM grid is
/// over ν₀ × σ₀ for the variants with auxiliary effects. Grid point k is
/// seeded with `cfg.seed + k`, so the result does not depend on scheduling.
pub fn run_grid_problem(
    problem: &Problem,
    cfg: &ModelConfig,
    grid: &GridSpec,
    engine: Engine,
) -> Result<GridOutcome> {
    grid.validate()?;
    let cfg = ModelConfig {
        nu1: grid.nu1,
        ..cfg.clone()
    };
    let mut specs: Vec<(f64, Option<f64>)> = Vec::new();
    for &nu0 in &grid.nu0_values {
        match engine {
            Engine::Vbecm => specs.push((nu0, None)),
            // σ₀ only scales the auxiliary-effect spike, which GM* does not have.
            Engine::Ecm if !cfg.variant.uses_auxiliary() => specs.push((nu0, Some(SIGMA0_GRID[0]))),
            Engine::Ecm => specs.extend(SIGMA0_GRID.iter().map(|&s| (nu0, Some(s)))),
        }
    }
    let run = |(k, &(nu0, sigma0)): (usize, &(f64, Option<f64>))| {
        let seed = cfg.seed.wrapping_add(k as u64);
        let outcome = fit_point(problem, &cfg, engine, nu0, sigma0, seed)
            .map(|mut fit| {
                fit.criteria = compute_criteria(&fit, problem, grid.ebic_gamma);
                fit
            })
            .map_err(|e| e.to_string());
        GridPoint {
            nu0,
            sigma0,
            seed,
            outcome,
        }
    };
    let points: Vec<GridPoint> = if grid.workers == 1 {
        specs.iter().enumerate().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(grid.workers)
            .build()
            .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
        pool.install(|| specs.par_iter().enumerate().map(run).collect())
    };

    let mut warnings = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (k, pt) in points.iter().enumerate() {
        match &pt.outcome {
            Err(e) => warnings.push(format!("grid point nu0={} failed: {e}", pt.nu0)),
            Ok(fit) => {
                let score = grid.criterion.pick(&fit.criteria);
                if score == f64::INFINITY {
                    warnings.push(format!(
                        "grid point nu0={}: thresholded precision matrix is not positive definite",
                        pt.nu0
                    ));
                }
                let better = match best {
                    None => true,
                    Some((b, bs)) => {
                        let key = (pt.nu0, pt.sigma0.unwrap_or(0.0));
                        let bkey = (points[b].nu0, points[b].sigma0.unwrap_or(0.0));
                        score < bs || (score == bs && key < bkey)
                    }
                };
                if better {
                    best = Some((k, score));
                }
            }
        }
    }
    match best {
        Some((best_index, _)) => Ok(GridOutcome {
            best_index,
            points,
            criterion: grid.criterion,
            warnings,
        }),
        None => Err(Error::GridFailed(warnings.join("; "))),
    }
}

pub fn run_grid(
    data: &DataMatrix,
    aux: &AuxiliaryMatrix,
    cfg: &ModelConfig,
    grid: &GridSpec,
    engine: Engine,
) -> Result<GridOutcome> {
    let problem = Problem::new(data, aux, cfg.variant)?;
    run_grid_problem(&problem, cfg, grid, engine)
}
