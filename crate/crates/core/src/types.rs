//! Shared domain types, input validation and data standardisation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N×P sample matrix; rows are observations, columns are nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    node_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("node{j}")).collect();
        Self::with_names(values, names)
    }

    pub fn with_names(values: DMatrix<f64>, node_names: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return Err(Error::Validation(format!(
                "data matrix must be at least 2×2, got {}×{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if node_names.len() != values.ncols() {
            return Err(Error::Validation(format!(
                "{} node names for {} columns",
                node_names.len(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite data entry at row {}, column {}",
                pos % values.nrows() + 1,
                pos / values.nrows() + 1
            )));
        }
        Ok(Self { values, node_names })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    /// S = YᵀY
    pub fn gram(&self) -> DMatrix<f64> {
        self.values.tr_mul(&self.values)
    }

    /// Rescales every column to unit sample variance. Constant columns are left as is.
    pub fn scale_columns(&self) -> DataMatrix {
        let n = self.n_samples() as f64;
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var > 0.0 {
                col /= var.sqrt();
            }
        }
        DataMatrix {
            values,
            node_names: self.node_names.clone(),
        }
    }
}

/// Subtracts every column mean so that the model's zero-mean assumption holds.
pub fn center_columns(data: &DataMatrix) -> Result<DataMatrix> {
    let n = data.n_samples() as f64;
    let mut values = data.values.clone();
    for mut col in values.column_iter_mut() {
        let mean = col.sum() / n;
        if !mean.is_finite() {
            return Err(Error::Validation("non-finite column mean".into()));
        }
        col.add_scalar_mut(-mean);
    }
    DataMatrix::with_names(values, data.node_names.clone())
}

/// P×Q matrix of candidate node-level auxiliary variables. Q may be zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryMatrix {
    values: DMatrix<f64>,
    var_names: Vec<String>,
}

impl AuxiliaryMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|q| format!("var{q}")).collect();
        Self::with_names(values, names)
    }

    pub fn with_names(values: DMatrix<f64>, var_names: Vec<String>) -> Result<Self> {
        if var_names.len() != values.ncols() {
            return Err(Error::Validation(format!(
                "{} variable names for {} columns",
                var_names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite auxiliary entry".into()));
        }
        Ok(Self { values, var_names })
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self {
            values: DMatrix::zeros(n_nodes, 0),
            var_names: Vec::new(),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Probit sparsity prior only; auxiliary variables are ignored.
    #[value(name = "gmstar")]
    GMStar,
    /// Normal (slab-only) prior on the auxiliary effects.
    #[value(name = "gmn")]
    GMN,
    /// Spike-and-slab selection of auxiliary variables.
    #[value(name = "gmss")]
    GMSS,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::GMStar => "GM*",
            Variant::GMN => "GMN",
            Variant::GMSS => "GMSS",
        }
    }

    pub fn uses_auxiliary(self) -> bool {
        !matches!(self, Variant::GMStar)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Vbecm,
    Ecm,
}

/// Model variant, fixed hyperparameters and convergence controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Rate of the exponential prior on the diagonal of Ω (prior Exp(λ/2)).
    pub lambda: f64,
    /// Spike standard deviation for the off-diagonal entries.
    pub nu0: f64,
    /// Slab standard deviation for the off-diagonal entries.
    pub nu1: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_o: f64,
    pub b_o: f64,
    /// Prior mean of the probit intercept ζ.
    pub n0: f64,
    /// Prior variance of ζ.
    pub t0_sq: f64,
    pub max_iter: usize,
    /// Relative objective change treated as converged.
    pub elbo_tol: f64,
    pub seed: u64,
    /// Standard deviation of seeded Gaussian jitter on the initial auxiliary
    /// effects; zero gives the deterministic default start.
    pub init_jitter: f64,
    /// Fix every inclusion probability γ_q at one (GMN behaviour inside GMSS).
    pub pin_inclusion: bool,
    /// After the default start converges, restart from the top-ranked edges
    /// and keep the run with the better objective.
    #[serde(default = "enabled")]
    pub edge_restarts: bool,
}

fn enabled() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::GMSS,
            lambda: 2.0,
            nu0: 0.1,
            nu1: 100.0,
            a_tau: 2.0,
            b_tau: 2.0,
            a_sigma: 2.0,
            b_sigma: 2.0,
            a_o: 1.0,
            b_o: 1.0,
            n0: -2.0,
            t0_sq: 1.0,
            max_iter: 2000,
            elbo_tol: 1e-5,
            seed: 0,
            init_jitter: 0.0,
            pin_inclusion: false,
            edge_restarts: true,
        }
    }
}

impl ModelConfig {
    /// Defaults for a problem of the given size: b_o = Q and (n₀, t₀²) elicited
    /// from a prior edge count with mean 1% and standard deviation 3% of all
    /// possible edges.
    pub fn for_dimensions(variant: Variant, n_nodes: usize, n_vars: usize) -> Result<Self> {
        let target = crate::elicitation::EdgePriorTarget::default_for(n_nodes);
        let (n0, t0_sq) = crate::elicitation::elicit_hyperparams(&target)?;
        Ok(Self {
            variant,
            b_o: n_vars.max(1) as f64,
            n0,
            t0_sq,
            ..Self::default()
        })
    }

    /// Prior expected number of edges, M Φ(n₀/√(1+t₀²)).
    pub fn prior_mean_edges(&self, n_nodes: usize) -> f64 {
        let h = self.n0 / (1.0 + self.t0_sq).sqrt();
        n_pairs(n_nodes) as f64 * crate::special::norm_cdf(h)
    }

    pub fn with_nu0(&self, nu0: f64) -> Self {
        Self {
            nu0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ValidationIssue {
    DimensionMismatch { data_nodes: usize, aux_rows: usize },
    NonFinite(String),
    SpikeNotBelowSlab { nu0: f64, nu1: f64 },
    NonPositiveHyperparameter(String),
    ConstantColumn(usize),
    DegeneratesToGMStar,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::DimensionMismatch {
                data_nodes,
                aux_rows,
            } => write!(
                f,
                "data has {data_nodes} nodes but auxiliary matrix has {aux_rows} rows"
            ),
            ValidationIssue::NonFinite(what) => write!(f, "non-finite value in {what}"),
            ValidationIssue::SpikeNotBelowSlab { nu0, nu1 } => {
                write!(f, "spike sd nu0={nu0} must be below slab sd nu1={nu1}")
            }
            ValidationIssue::NonPositiveHyperparameter(name) => {
                write!(f, "hyperparameter {name} must be positive")
            }
            ValidationIssue::ConstantColumn(j) => write!(f, "data column {} is constant", j + 1),
            ValidationIssue::DegeneratesToGMStar => {
                write!(f, "no auxiliary variables: model degenerates to GM*")
            }
        }
    }
}

/// Result of a full validation scan: hard errors and non-fatal warnings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn degrades_to_gmstar(&self) -> bool {
        self.warnings.contains(&ValidationIssue::DegeneratesToGMStar)
    }
}

/// Checks every input constraint and collects all problems found.
pub fn validate_inputs(
    data: &DataMatrix,
    aux: &AuxiliaryMatrix,
    cfg: &ModelConfig,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    if aux.n_nodes() != data.n_nodes() {
        report.errors.push(ValidationIssue::DimensionMismatch {
            data_nodes: data.n_nodes(),
            aux_rows: aux.n_nodes(),
        });
    }
    if data.values().iter().any(|v| !v.is_finite()) {
        report
            .errors
            .push(ValidationIssue::NonFinite("data".into()));
    }
    if aux.values().iter().any(|v| !v.is_finite()) {
        report
            .errors
            .push(ValidationIssue::NonFinite("auxiliary variables".into()));
    }
    let positive = [
        ("lambda", cfg.lambda),
        ("nu0", cfg.nu0),
        ("nu1", cfg.nu1),
        ("a_tau", cfg.a_tau),
        ("b_tau", cfg.b_tau),
        ("a_sigma", cfg.a_sigma),
        ("b_sigma", cfg.b_sigma),
        ("a_o", cfg.a_o),
        ("b_o", cfg.b_o),
        ("t0_sq", cfg.t0_sq),
    ];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            report
                .errors
                .push(ValidationIssue::NonPositiveHyperparameter(name.into()));
        }
    }
    if !cfg.n0.is_finite() {
        report.errors.push(ValidationIssue::NonFinite("n0".into()));
    }
    if cfg.nu0 >= cfg.nu1 {
        report.errors.push(ValidationIssue::SpikeNotBelowSlab {
            nu0: cfg.nu0,
            nu1: cfg.nu1,
        });
    }
    for (j, col) in data.values().column_iter().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            report.warnings.push(ValidationIssue::ConstantColumn(j));
        }
    }
    if aux.n_vars() == 0 && cfg.variant.uses_auxiliary() {
        report.warnings.push(ValidationIssue::DegeneratesToGMStar);
    }
    report
}

/// Variational factors of the VBECM engine. Ω is a point mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub omega: DMatrix<f64>,
    /// Edge inclusion probabilities δ⁽¹⁾ (symmetric, zero diagonal).
    pub delta1: DMatrix<f64>,
    /// First and second moments of the probit latents z_ij.
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    /// Linear predictor α⁽¹⁾ at which the z moments were last refreshed.
    pub z_center: DMatrix<f64>,
    pub alpha_tau: f64,
    pub beta_tau: f64,
    pub zeta_mean: f64,
    pub zeta_var: f64,
    /// Slab mean and variance of each auxiliary effect.
    pub beta_mean: Vec<f64>,
    pub beta_var: Vec<f64>,
    /// Inclusion probabilities γ⁽¹⁾.
    pub gamma1: Vec<f64>,
    pub alpha_o: f64,
    pub beta_o: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
    pub elbo: f64,
}

impl VariationalState {
    pub fn tau_mean(&self) -> f64 {
        self.alpha_tau / self.beta_tau
    }

    pub fn log_tau_mean(&self) -> f64 {
        crate::special::digamma(self.alpha_tau) - self.beta_tau.ln()
    }

    /// E{σ⁻²}
    pub fn precision_mean(&self) -> f64 {
        self.alpha_sigma / self.beta_sigma
    }

    /// E{log σ⁻²}
    pub fn log_precision_mean(&self) -> f64 {
        crate::special::digamma(self.alpha_sigma) - self.beta_sigma.ln()
    }

    pub fn o_mean(&self) -> f64 {
        self.alpha_o / (self.alpha_o + self.beta_o)
    }

    pub fn log_o_mean(&self) -> f64 {
        crate::special::digamma(self.alpha_o) - crate::special::digamma(self.alpha_o + self.beta_o)
    }

    pub fn log_one_minus_o_mean(&self) -> f64 {
        crate::special::digamma(self.beta_o) - crate::special::digamma(self.alpha_o + self.beta_o)
    }

    /// β⁽¹⁾ = γ⁽¹⁾ μ_β
    pub fn beta_first_moment(&self, q: usize) -> f64 {
        self.gamma1[q] * self.beta_mean[q]
    }

    /// β⁽²⁾ = γ⁽¹⁾ (μ_β² + σ_β²)
    pub fn beta_second_moment(&self, q: usize) -> f64 {
        self.gamma1[q] * (self.beta_mean[q].powi(2) + self.beta_var[q])
    }

    /// Checks the structural invariants of the state.
    pub fn check_invariants(&self) -> Result<()> {
        let p = self.omega.nrows();
        let sym_err = (&self.omega - self.omega.transpose()).amax();
        if sym_err > 1e-8 * self.omega.amax().max(1.0) {
            return Err(Error::Validation(format!("omega asymmetric by {sym_err}")));
        }
        if self.omega.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("omega".into()));
        }
        for i in 0..p {
            if self.delta1[(i, i)] != 0.0 {
                return Err(Error::Validation("delta1 diagonal must be zero".into()));
            }
            for j in 0..p {
                let d = self.delta1[(i, j)];
                if !(0.0..=1.0).contains(&d) || d != self.delta1[(j, i)] {
                    return Err(Error::Validation(format!("delta1[{i},{j}] = {d}")));
                }
            }
        }
        if self.gamma1.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Validation("gamma1 outside [0,1]".into()));
        }
        let positive = [
            self.alpha_tau,
            self.beta_tau,
            self.zeta_var,
            self.alpha_o,
            self.beta_o,
            self.alpha_sigma,
            self.beta_sigma,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.beta_var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Validation("non-positive variational parameter".into()));
        }
        Ok(())
    }
}

/// Point estimates and E-step caches of the ECM engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    pub omega: DMatrix<f64>,
    /// Edge-level scale τ₁.
    pub tau1: f64,
    /// Effect-level scale τ₂.
    pub tau2: f64,
    pub zeta: f64,
    pub beta: Vec<f64>,
    pub o: f64,
    /// E(δ_ij) from the last E-step.
    pub e_delta: DMatrix<f64>,
    /// E(γ_q) from the last E-step.
    pub e_gamma: Vec<f64>,
    /// d*_ij = E{δ/ν₁² + (1-δ)/ν₀²}
    pub d_star: DMatrix<f64>,
    /// g*_q = E{γ/σ₁² + (1-γ)/σ₀²}
    pub g_star: Vec<f64>,
    pub ez: DMatrix<f64>,
    pub ez2: DMatrix<f64>,
    /// Linear predictor α_ij at which the E-step was evaluated.
    pub e_alpha: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FitState {
    Variational(VariationalState),
    Point(PointState),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    pub ebic: f64,
}

/// Per-variable effect summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub ppi: f64,
    /// Slab mean (VBECM) or point estimate (ECM).
    pub mean: f64,
    /// Slab standard deviation; zero for point estimates.
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub engine: Engine,
    pub variant: Variant,
    pub state: FitState,
    /// ELBO (VBECM) or log marginal posterior (ECM) after every iteration.
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub nu0_used: f64,
    /// Spike sd of the auxiliary effects (ECM only).
    pub sigma0_used: Option<f64>,
    /// Final ECM Q-function value Q(θ̂ | θ̂); `None` for VBECM.
    pub q_value: Option<f64>,
    pub criteria: Criteria,
    pub edge_ppi: DMatrix<f64>,
    pub var_ppi: Vec<f64>,
    pub effects: Vec<EffectSummary>,
    pub runtime_seconds: f64,
}

impl FitResult {
    pub fn omega(&self) -> &DMatrix<f64> {
        match &self.state {
            FitState::Variational(s) => &s.omega,
            FitState::Point(s) => &s.omega,
        }
    }

    pub fn final_objective(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn n_nodes(&self) -> usize {
        self.edge_ppi.nrows()
    }
}

/// Number of unordered node pairs, P(P-1)/2.
pub fn n_pairs(p: usize) -> usize {
    p * (p - 1) / 2
}
