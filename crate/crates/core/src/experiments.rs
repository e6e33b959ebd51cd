//! Simulation experiments: the benchmark table rows, the null and similarity
//! scenarios and the ECM against VBECM comparisons.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::ecm::{self, EcmConfig};
use crate::error::{Error, Result};
use crate::grid::{run_grid_problem, GridSpec};
use crate::postprocess::{edge_pauc, pauc};
use crate::problem::Problem;
use crate::simgen::{generate, Replicate, ScenarioSpec};
use crate::types::{center_columns, Engine, FitResult, ModelConfig, Variant};
use crate::vbecm;

/// FPR cut-off of every reported partial AUC.
pub const MAX_FPR: f64 = 0.1;

/// Auxiliary PPIs below this are counted as discarded.
pub const DISCARD_PPI: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Table1Row(usize),
    Null,
    Similarity,
    EcmVsVbecm,
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Self::Null),
            "similarity" => Ok(Self::Similarity),
            "ecm-vs-vbecm" => Ok(Self::EcmVsVbecm),
            _ => {
                let row = s
                    .strip_prefix("table1-row")
                    .and_then(|r| r.parse::<usize>().ok())
                    .ok_or_else(|| Error::Validation(format!("unknown experiment '{s}'")))?;
                ScenarioSpec::table1_row(row)?;
                Ok(Self::Table1Row(row))
            }
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Table1Row(r) => write!(f, "table1-row{r}"),
            Self::Null => f.write_str("null"),
            Self::Similarity => f.write_str("similarity"),
            Self::EcmVsVbecm => f.write_str("ecm-vs-vbecm"),
        }
    }
}

/// One model fitted by one engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub variant: Variant,
    pub engine: Engine,
}

impl Experiment {
    pub fn scenario(&self) -> Result<ScenarioSpec> {
        match self {
            Self::Table1Row(r) => ScenarioSpec::table1_row(*r),
            // The engine comparison uses graphs that ignore the auxiliary data.
            Self::Null | Self::EcmVsVbecm => Ok(ScenarioSpec::null()),
            Self::Similarity => Ok(ScenarioSpec::similarity()),
        }
    }

    pub fn arms(&self) -> Vec<Arm> {
        let vb = |variant| Arm {
            variant,
            engine: Engine::Vbecm,
        };
        match self {
            Self::Table1Row(_) => vec![vb(Variant::GMStar), vb(Variant::GMN), vb(Variant::GMSS)],
            Self::Null => vec![vb(Variant::GMStar), vb(Variant::GMSS)],
            Self::Similarity => vec![vb(Variant::GMSS)],
            Self::EcmVsVbecm => vec![
                vb(Variant::GMStar),
                Arm {
                    variant: Variant::GMStar,
                    engine: Engine::Ecm,
                },
            ],
        }
    }
}

/// Metrics of one arm on one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub replicate: usize,
    pub seed: u64,
    pub variant: Variant,
    pub engine: Engine,
    pub nu0: f64,
    pub sigma0: Option<f64>,
    pub edge_pauc: f64,
    /// Absent when the truth has no active (or no inactive) variable.
    pub var_pauc: Option<f64>,
    pub max_var_ppi: Option<f64>,
    pub converged: bool,
    pub runtime_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub engine: Engine,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub scenario: ScenarioSpec,
    pub results: Vec<ArmResult>,
    pub summary: Vec<SummaryRow>,
}

/// Sample mean and standard error of the mean; the error is zero for a single value.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mean = xs.mean();
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (xs.variance() / xs.len() as f64).sqrt())
}

/// Configuration used for every simulated fit: elicited defaults for the
/// problem size, seeded by the replicate.
pub fn model_for(variant: Variant, rep: &Replicate) -> Result<ModelConfig> {
    let mut cfg =
        ModelConfig::for_dimensions(variant, rep.spec.n_nodes, rep.spec.n_candidate_vars)?;
    cfg.seed = rep.spec.seed;
    Ok(cfg)
}

pub fn problem_for(rep: &Replicate, variant: Variant) -> Result<Problem> {
    let data = center_columns(&rep.data)?;
    Problem::new(&data, &rep.aux, variant)
}

/// Edge pAUC and, when defined, variable pAUC of a fit against the truth.
pub fn score_fit(rep: &Replicate, fit: &FitResult) -> Result<(f64, Option<f64>)> {
    let edges = edge_pauc(&rep.adjacency, &fit.edge_ppi, MAX_FPR)?;
    let active = rep.active();
    let has_both = active.iter().any(|&a| a) && active.iter().any(|&a| !a);
    let vars = if fit.variant == Variant::GMSS && has_both {
        Some(pauc(&active, &fit.var_ppi, MAX_FPR)?)
    } else {
        None
    };
    Ok((edges, vars))
}

/// Runs the grid search for one arm and scores the selected fit.
pub fn run_arm(rep: &Replicate, index: usize, arm: Arm, grid: &GridSpec) -> Result<ArmResult> {
    let problem = problem_for(rep, arm.variant)?;
    let cfg = model_for(arm.variant, rep)?;
    let outcome = run_grid_problem(&problem, &cfg, grid, arm.engine)?;
    let fit = outcome.best();
    let (edge, var) = score_fit(rep, fit)?;
    let runtime = outcome.fits().map(|f| f.runtime_seconds).sum();
    Ok(ArmResult {
        replicate: index,
        seed: rep.spec.seed,
        variant: arm.variant,
        engine: arm.engine,
        nu0: fit.nu0_used,
        sigma0: fit.sigma0_used,
        edge_pauc: edge,
        var_pauc: var,
        max_var_ppi: (arm.variant == Variant::GMSS)
            .then(|| fit.var_ppi.iter().copied().fold(0.0, f64::max)),
        converged: fit.converged,
        runtime_seconds: runtime,
    })
}

fn summarise(arms: &[Arm], results: &[ArmResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for arm in arms {
        let mine: Vec<&ArmResult> = results
            .iter()
            .filter(|r| r.variant == arm.variant && r.engine == arm.engine)
            .collect();
        let mut push = |metric: &str, xs: Vec<f64>| {
            if xs.is_empty() {
                return;
            }
            let (mean, se) = mean_se(&xs);
            rows.push(SummaryRow {
                variant: arm.variant,
                engine: arm.engine,
                metric: metric.to_string(),
                n: xs.len(),
                mean,
                se,
            });
        };
        push("edge_pauc", mine.iter().map(|r| r.edge_pauc).collect());
        push("var_pauc", mine.iter().filter_map(|r| r.var_pauc).collect());
        push(
            "all_var_ppi_below_0.1",
            mine.iter()
                .filter_map(|r| r.max_var_ppi)
                .map(|m| if m < DISCARD_PPI { 1.0 } else { 0.0 })
                .collect(),
        );
        push("runtime_seconds", mine.iter().map(|r| r.runtime_seconds).collect());
    }
    rows
}

/// Runs `replicates` replicates with seeds `base_seed + r`, every arm on each.
/// `progress` sees each arm result as it completes.
pub fn run_experiment(
    experiment: Experiment,
    replicates: usize,
    base_seed: u64,
    grid: &GridSpec,
    mut progress: impl FnMut(&ArmResult),
) -> Result<ExperimentReport> {
    if replicates == 0 {
        return Err(Error::Validation("need at least one replicate".into()));
    }
    let scenario = experiment.scenario()?;
    let arms = experiment.arms();
    let mut results = Vec::new();
    for r in 0..replicates {
        let rep = generate(&scenario.with_seed(base_seed.wrapping_add(r as u64)))?;
        for &arm in &arms {
            let res = run_arm(&rep, r, arm, grid)?;
            progress(&res);
            results.push(res);
        }
    }
    let summary = summarise(&arms, &results);
    Ok(ExperimentReport {
        experiment,
        scenario: scenario.with_seed(base_seed),
        results,
        summary,
    })
}

impl ExperimentReport {
    pub fn row(&self, variant: Variant, engine: Engine, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.variant == variant && r.engine == engine && r.metric == metric)
    }

    /// Plain-text table with one line per arm and metric, "mean (se)".
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:<6} {:<22} {:>4}  mean (se)\n", "model", "engine", "metric", "n");
        for r in &self.summary {
            let engine = match r.engine {
                Engine::Vbecm => "vbecm",
                Engine::Ecm => "ecm",
            };
            out += &format!(
                "{:<6} {:<6} {:<22} {:>4}  {:.2} ({:.2})\n",
                r.variant.label(),
                engine,
                r.metric,
                r.n,
                r.mean,
                r.se
            );
        }
        out
    }
}

/// Optimal objective values reached from jittered starts on one data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    pub ecm_q_values: Vec<f64>,
    pub vbecm_elbos: Vec<f64>,
}

impl MultistartReport {
    pub fn ecm_variance(&self) -> f64 {
        self.ecm_q_values.iter().variance()
    }

    pub fn vbecm_variance(&self) -> f64 {
        self.vbecm_elbos.iter().variance()
    }
}

/// Fits GMSS with both engines at a fixed (ν₀, σ₀) from `starts` starts whose
/// initial auxiliary effects carry seeded N(0, jitter²) noise.
pub fn multistart(
    rep: &Replicate,
    starts: usize,
    nu0: f64,
    sigma0: f64,
    jitter: f64,
) -> Result<MultistartReport> {
    let problem = problem_for(rep, Variant::GMSS)?;
    let base = model_for(Variant::GMSS, rep)?.with_nu0(nu0);
    let mut report = MultistartReport {
        ecm_q_values: Vec::with_capacity(starts),
        vbecm_elbos: Vec::with_capacity(starts),
    };
    for k in 0..starts {
        let cfg = ModelConfig {
            seed: base.seed.wrapping_add(k as u64),
            init_jitter: jitter,
            ..base.clone()
        };
        let v = vbecm::run_problem(&problem, &cfg)?;
        report.vbecm_elbos.push(v.final_objective());
        let e = ecm::run_problem(&problem, &EcmConfig::new(cfg, sigma0)?)?;
        report
            .ecm_q_values
            .push(e.q_value.expect("ECM fits report a Q-value"));
    }
    Ok(report)
}
