//! Variational Bayes expectation conditional maximisation.
//!
//! All factors except Ω are updated by coordinate ascent on the ELBO; Ω is a
//! point mass updated by one column sweep per iteration.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omega::sweep_columns;
use crate::problem::Problem;
use crate::special::{
    digamma, inv_one_plus_exp, ln_beta, ln_gamma, ln_norm_cdf, mills_lower, mills_upper, xlogx,
    LN_SQRT_2PI,
};
use crate::types::{
    AuxiliaryMatrix, Criteria, DataMatrix, EffectSummary, Engine, FitResult, FitState,
    ModelConfig, Variant, VariationalState,
};

/// z-value of the two-sided 95% interval.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Linear predictor α_ij = ζ⁽¹⁾ + e_i + e_j with node effects e_i = Σ_q V_iq β_q⁽¹⁾.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPredictorCache {
    pub zeta: f64,
    pub node_effect: Vec<f64>,
}

impl LinearPredictorCache {
    pub fn from_state(problem: &Problem, state: &VariationalState) -> Self {
        let b: Vec<f64> = (0..problem.n_vars())
            .map(|q| state.beta_first_moment(q))
            .collect();
        Self {
            zeta: state.zeta_mean,
            node_effect: problem.node_effects(&b),
        }
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.zeta + self.node_effect[i] + self.node_effect[j]
    }

    pub fn alpha_matrix(&self) -> DMatrix<f64> {
        let p = self.node_effect.len();
        DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { self.alpha(i, j) })
    }

    pub fn effect_total(&self) -> f64 {
        self.node_effect.iter().sum()
    }

    fn shift_effect(&mut self, problem: &Problem, q: usize, delta: f64) {
        if delta != 0.0 {
            for (e, v) in self.node_effect.iter_mut().zip(problem.aux.column(q).iter()) {
                *e += v * delta;
            }
        }
    }
}

/// The ELBO split by factor. Ω enters as a point mass, so its entropy is omitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub likelihood: f64,
    pub omega_prior: f64,
    pub edges: f64,
    pub tau: f64,
    pub zeta: f64,
    pub effects: f64,
    pub o: f64,
    pub sigma: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.omega_prior
            + self.edges
            + self.tau
            + self.zeta
            + self.effects
            + self.o
            + self.sigma
    }
}

/// -KL{Gamma(α, β) ‖ Gamma(a, b)}
fn gamma_neg_kl(a: f64, b: f64, alpha: f64, beta: f64) -> f64 {
    let e_log = digamma(alpha) - beta.ln();
    let e = alpha / beta;
    (a - alpha) * e_log - (b - beta) * e + a * b.ln() - ln_gamma(a) - alpha * beta.ln()
        + ln_gamma(alpha)
}

/// Initial variational state from the configuration.
pub fn initial_state(problem: &Problem, cfg: &ModelConfig) -> VariationalState {
    let p = problem.n_nodes;
    let q = problem.n_vars();
    let mut delta1 = DMatrix::from_element(p, p, 0.5);
    delta1.fill_diagonal(0.0);
    let mut beta_mean = vec![0.0; q];
    if cfg.init_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.init_jitter).expect("positive jitter");
        for b in beta_mean.iter_mut() {
            *b = normal.sample(&mut rng);
        }
    }
    let gamma0 = if pins_inclusion(cfg) { 1.0 } else { 0.5 };
    VariationalState {
        omega: DMatrix::identity(p, p),
        delta1,
        z1: DMatrix::zeros(p, p),
        z2: DMatrix::zeros(p, p),
        z_center: DMatrix::zeros(p, p),
        alpha_tau: cfg.a_tau,
        beta_tau: cfg.b_tau,
        zeta_mean: cfg.n0,
        zeta_var: cfg.t0_sq,
        beta_mean,
        beta_var: vec![cfg.b_sigma / cfg.a_sigma; q],
        gamma1: vec![gamma0; q],
        alpha_o: cfg.a_o,
        beta_o: cfg.b_o,
        alpha_sigma: cfg.a_sigma,
        beta_sigma: cfg.b_sigma,
        elbo: f64::NEG_INFINITY,
    }
}

fn pins_inclusion(cfg: &ModelConfig) -> bool {
    cfg.pin_inclusion || cfg.variant == Variant::GMN
}

/// A single VBECM fit in progress. Exclusive access: one engine per thread.
#[derive(Clone, Debug)]
pub struct Vbecm<'a> {
    problem: &'a Problem,
    cfg: ModelConfig,
    pub state: VariationalState,
    pub cache: LinearPredictorCache,
}

impl<'a> Vbecm<'a> {
    pub fn new(problem: &'a Problem, cfg: &ModelConfig) -> Self {
        Self::from_state(problem, cfg, initial_state(problem, cfg))
    }

    pub fn from_state(problem: &'a Problem, cfg: &ModelConfig, state: VariationalState) -> Self {
        let cache = LinearPredictorCache::from_state(problem, &state);
        Self {
            problem,
            cfg: cfg.clone(),
            state,
            cache,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn pinned(&self) -> bool {
        pins_inclusion(&self.cfg)
    }

    /// Joint update of q(z_ij | δ_ij) q(δ_ij) for every pair.
    pub fn update_edges(&mut self) {
        let p = self.problem.n_nodes;
        let tau = self.state.tau_mean();
        let (nu0, nu1) = (self.cfg.nu0, self.cfg.nu1);
        let log_ratio = (nu1 / nu0).ln();
        let curvature = 0.5 * tau * (1.0 / (nu1 * nu1) - 1.0 / (nu0 * nu0));
        let st = &mut self.state;
        for j in 0..p {
            for i in 0..j {
                let a = self.cache.alpha(i, j);
                let w = st.omega[(i, j)];
                let logit = log_ratio + curvature * w * w + ln_norm_cdf(-a) - ln_norm_cdf(a);
                let d = inv_one_plus_exp(logit);
                let z1 = a + mills_lower(a) + d * (mills_upper(a) - mills_lower(a));
                let z2 = a * z1 + 1.0;
                for (r, c) in [(i, j), (j, i)] {
                    st.delta1[(r, c)] = d;
                    st.z1[(r, c)] = z1;
                    st.z2[(r, c)] = z2;
                    st.z_center[(r, c)] = a;
                }
            }
        }
    }

    /// Weighted squared off-diagonal mass Σ_{i<j} ω²(δ/ν₁² + (1-δ)/ν₀²).
    fn weighted_omega_sq(&self) -> f64 {
        let p = self.problem.n_nodes;
        let (i0, i1) = (self.cfg.nu0.powi(-2), self.cfg.nu1.powi(-2));
        let mut acc = 0.0;
        for j in 0..p {
            for i in 0..j {
                let d = self.state.delta1[(i, j)];
                acc += self.state.omega[(i, j)].powi(2) * (d * i1 + (1.0 - d) * i0);
            }
        }
        acc
    }

    pub fn update_tau(&mut self) {
        let p = self.problem.n_nodes as f64;
        self.state.alpha_tau = p * (p - 1.0) / 4.0 + self.cfg.a_tau;
        self.state.beta_tau = 0.5 * self.weighted_omega_sq() + self.cfg.b_tau;
    }

    fn z_row_sums(&self) -> Vec<f64> {
        self.state.z1.row_iter().map(|r| r.sum()).collect()
    }

    /// Linear coefficient of β_q in E log p(z | α): Σ_{i<j}(V_iq+V_jq){z1_ij - E α_ij
    /// without the contribution of q}.
    fn effect_score(&self, q: usize, zrow: &[f64]) -> f64 {
        let p = self.problem.n_nodes as f64;
        let e_tot = self.cache.effect_total();
        let zeta = self.cache.zeta;
        let mut b = 0.0;
        for (i, v) in self.problem.aux.column(q).iter().enumerate() {
            if *v != 0.0 {
                let e = self.cache.node_effect[i];
                b += v * (zrow[i] - (p - 1.0) * zeta - (p - 2.0) * e - e_tot);
            }
        }
        b + self.state.beta_first_moment(q) * self.problem.design_sq[q]
    }

    /// Update of the structured factor q(β_q | γ_q) q(γ_q).
    pub fn update_beta_gamma(&mut self, q: usize) {
        let zrow = self.z_row_sums();
        self.update_beta_gamma_with(q, &zrow);
    }

    fn update_beta_gamma_with(&mut self, q: usize, zrow: &[f64]) {
        let b = self.effect_score(q, zrow);
        let prec = self.state.precision_mean() + self.problem.design_sq[q];
        let var = 1.0 / prec;
        let mean = var * b;
        let gamma = if self.pinned() {
            1.0
        } else {
            let logit = self.state.log_one_minus_o_mean() - self.state.log_o_mean()
                - 0.5 * self.state.log_precision_mean()
                - 0.5 * mean * mean / var
                + 0.5 * prec.ln();
            inv_one_plus_exp(logit)
        };
        let old = self.state.beta_first_moment(q);
        self.state.beta_mean[q] = mean;
        self.state.beta_var[q] = var;
        self.state.gamma1[q] = gamma;
        let new = self.state.beta_first_moment(q);
        self.cache.shift_effect(self.problem, q, new - old);
    }

    fn z_pair_sum(&self) -> f64 {
        let p = self.problem.n_nodes;
        let mut acc = 0.0;
        for j in 0..p {
            for i in 0..j {
                acc += self.state.z1[(i, j)];
            }
        }
        acc
    }

    pub fn update_zeta(&mut self) {
        let p = self.problem.n_nodes as f64;
        let var = 1.0 / (1.0 / self.cfg.t0_sq + p * (p - 1.0) / 2.0);
        let mean = var
            * (self.z_pair_sum() - (p - 1.0) * self.cache.effect_total()
                + self.cfg.n0 / self.cfg.t0_sq);
        self.state.zeta_mean = mean;
        self.state.zeta_var = var;
        self.cache.zeta = mean;
    }

    pub fn update_sigma(&mut self) {
        let q = self.problem.n_vars();
        self.state.alpha_sigma = 0.5 * self.state.gamma1.iter().sum::<f64>() + self.cfg.a_sigma;
        self.state.beta_sigma =
            0.5 * (0..q).map(|k| self.state.beta_second_moment(k)).sum::<f64>() + self.cfg.b_sigma;
    }

    pub fn update_o(&mut self) {
        if self.pinned() {
            return;
        }
        let g: f64 = self.state.gamma1.iter().sum();
        self.state.alpha_o = g + self.cfg.a_o;
        self.state.beta_o = self.state.gamma1.len() as f64 - g + self.cfg.b_o;
    }

    /// Edge-specific quadratic weights τ⁽¹⁾(δ/ν₁² + (1-δ)/ν₀²) for the Ω sweep.
    pub fn omega_penalty(&self) -> DMatrix<f64> {
        let tau = self.state.tau_mean();
        let (i0, i1) = (self.cfg.nu0.powi(-2), self.cfg.nu1.powi(-2));
        self.state
            .delta1
            .map(|d| tau * (d * i1 + (1.0 - d) * i0))
    }

    pub fn update_omega(&mut self) -> Result<()> {
        let pen = self.omega_penalty();
        sweep_columns(
            &mut self.state.omega,
            &self.problem.gram,
            self.problem.n_samples,
            self.cfg.lambda,
            &pen,
        )
    }

    /// One VBE sweep followed by the CM sweep for Ω.
    pub fn step(&mut self) -> Result<()> {
        self.update_edges();
        self.update_tau();
        let zrow = self.z_row_sums();
        for q in 0..self.problem.n_vars() {
            self.update_beta_gamma_with(q, &zrow);
        }
        self.update_zeta();
        self.update_sigma();
        self.update_o();
        self.update_omega()
    }

    /// Variance of α_ij summed over pairs: M Var(ζ) + Σ_q Σ_{i<j}(V_iq+V_jq)² Var(β_q).
    fn predictor_variance_sum(&self) -> f64 {
        let m = self.problem.n_pairs() as f64;
        let mut acc = m * self.state.zeta_var;
        for q in 0..self.problem.n_vars() {
            let var = self.state.beta_second_moment(q) - self.state.beta_first_moment(q).powi(2);
            acc += self.problem.design_sq[q] * var;
        }
        acc
    }

    pub fn elbo_terms(&self) -> Result<ElboTerms> {
        let st = &self.state;
        let cfg = &self.cfg;
        let p = self.problem.n_nodes;
        let m = self.problem.n_pairs() as f64;
        let likelihood = self.problem.log_likelihood(&st.omega)?;

        let e_tau = st.tau_mean();
        let e_log_tau = st.log_tau_mean();
        let mut omega_prior = p as f64 * (0.5 * cfg.lambda).ln()
            - 0.5 * cfg.lambda * st.omega.diagonal().sum()
            + m * (0.5 * e_log_tau - LN_SQRT_2PI);
        let (ln0, ln1) = (cfg.nu0.ln(), cfg.nu1.ln());
        let mut edges = 0.0;
        for j in 0..p {
            for i in 0..j {
                let d = st.delta1[(i, j)];
                let a = self.cache.alpha(i, j);
                omega_prior -= d * ln1 + (1.0 - d) * ln0;
                edges += d * ln_norm_cdf(a) + (1.0 - d) * ln_norm_cdf(-a)
                    - xlogx(d)
                    - xlogx(1.0 - d);
            }
        }
        omega_prior -= 0.5 * e_tau * self.weighted_omega_sq();
        edges -= 0.5 * self.predictor_variance_sum();

        let tau = gamma_neg_kl(cfg.a_tau, cfg.b_tau, st.alpha_tau, st.beta_tau);

        let zeta2 = st.zeta_mean.powi(2) + st.zeta_var;
        let zeta = -0.5 * (2.0 * std::f64::consts::PI * cfg.t0_sq).ln()
            - (zeta2 - 2.0 * cfg.n0 * st.zeta_mean + cfg.n0 * cfg.n0) / (2.0 * cfg.t0_sq)
            + 0.5 * (1.0 + (2.0 * std::f64::consts::PI * st.zeta_var).ln());

        let pinned = self.pinned();
        let e_prec = st.precision_mean();
        let e_log_prec = st.log_precision_mean();
        let (e_log_o, e_log_1o) = (st.log_o_mean(), st.log_one_minus_o_mean());
        let mut effects = 0.0;
        for q in 0..self.problem.n_vars() {
            let g = st.gamma1[q];
            effects += g * (0.5 * e_log_prec + 0.5 + 0.5 * st.beta_var[q].ln())
                - 0.5 * st.beta_second_moment(q) * e_prec;
            if !pinned {
                effects += g * e_log_o + (1.0 - g) * e_log_1o - xlogx(g) - xlogx(1.0 - g);
            }
        }
        let o = if pinned {
            0.0
        } else {
            (cfg.a_o - st.alpha_o) * e_log_o + (cfg.b_o - st.beta_o) * e_log_1o
                + ln_beta(st.alpha_o, st.beta_o)
                - ln_beta(cfg.a_o, cfg.b_o)
        };
        let sigma = gamma_neg_kl(cfg.a_sigma, cfg.b_sigma, st.alpha_sigma, st.beta_sigma);
        Ok(ElboTerms {
            likelihood,
            omega_prior,
            edges,
            tau,
            zeta,
            effects,
            o,
            sigma,
        })
    }

    pub fn elbo(&self) -> Result<f64> {
        Ok(self.elbo_terms()?.total())
    }
}

struct Run {
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Iterates to convergence. Convergence means a relative ELBO change below
/// `elbo_tol` on two consecutive iterations.
fn iterate(engine: &mut Vbecm) -> Result<Run> {
    let (max_iter, tol) = (engine.cfg.max_iter, engine.cfg.elbo_tol);
    let mut trace = Vec::new();
    let mut calm = 0;
    let mut converged = false;
    let mut prev = f64::NAN;
    let mut iterations = 0;
    while iterations < max_iter {
        engine.step()?;
        iterations += 1;
        let elbo = engine.elbo()?;
        if !elbo.is_finite() {
            return Err(Error::NoConvergence(format!(
                "ELBO became {elbo} at iteration {iterations}"
            )));
        }
        engine.state.elbo = elbo;
        trace.push(elbo);
        if prev.is_finite() && (elbo - prev).abs() < tol * elbo.abs() {
            calm += 1;
            if calm >= 2 {
                converged = true;
                break;
            }
        } else {
            calm = 0;
        }
        prev = elbo;
    }
    Ok(Run {
        trace,
        converged,
        iterations,
    })
}

fn finish(problem: &Problem, cfg: &ModelConfig, state: VariationalState, run: Run) -> FitResult {
    let effects = (0..problem.n_vars())
        .map(|q| {
            let sd = state.beta_var[q].sqrt();
            let mean = state.beta_mean[q];
            EffectSummary {
                ppi: state.gamma1[q],
                mean,
                sd,
                ci_low: mean - Z_975 * sd,
                ci_high: mean + Z_975 * sd,
            }
        })
        .collect();
    let mut fit = FitResult {
        engine: Engine::Vbecm,
        variant: cfg.variant,
        edge_ppi: state.delta1.clone(),
        var_ppi: state.gamma1.clone(),
        state: FitState::Variational(state),
        elbo_trace: run.trace,
        converged: run.converged,
        iterations: run.iterations,
        nu0_used: cfg.nu0,
        sigma0_used: None,
        q_value: None,
        criteria: Criteria {
            aic: f64::NAN,
            bic: f64::NAN,
            ebic: f64::NAN,
        },
        effects,
        runtime_seconds: 0.0,
    };
    fit.criteria = crate::grid::compute_criteria(&fit, problem, crate::grid::DEFAULT_EBIC_GAMMA);
    fit
}

/// Number of Ω sweeps made after seeding a restart, before the first edge update.
const RESTART_OMEGA_SWEEPS: usize = 5;

/// Runs VBECM from `state` with the slab edges fixed to `edges` until Ω has
/// adapted to them, then iterates to convergence.
pub fn run_from_edges(
    problem: &Problem,
    cfg: &ModelConfig,
    state: &VariationalState,
    edges: DMatrix<f64>,
) -> Result<FitResult> {
    let mut init = initial_state(problem, cfg);
    init.delta1 = edges;
    init.alpha_tau = state.alpha_tau;
    init.beta_tau = state.beta_tau;
    let mut engine = Vbecm::from_state(problem, cfg, init);
    for _ in 0..RESTART_OMEGA_SWEEPS {
        engine.update_omega()?;
    }
    let run = iterate(&mut engine)?;
    Ok(finish(problem, cfg, engine.state, run))
}

/// Runs VBECM to convergence from the default start and, when
/// `cfg.edge_restarts` is set, through the restart ladder of
/// [`crate::restart::ladder`].
pub fn run_problem(problem: &Problem, cfg: &ModelConfig) -> Result<FitResult> {
    let start = Instant::now();
    let mut engine = Vbecm::new(problem, cfg);
    let run = iterate(&mut engine)?;
    let mut fit = finish(problem, cfg, engine.state, run);
    if cfg.edge_restarts {
        fit = crate::restart::ladder(fit, cfg, |best, edges| match &best.state {
            FitState::Variational(st) => run_from_edges(problem, cfg, st, edges),
            FitState::Point(_) => unreachable!("VBECM fits carry a variational state"),
        })?;
    }
    fit.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(fit)
}

pub fn run_vbecm(data: &DataMatrix, aux: &AuxiliaryMatrix, cfg: &ModelConfig) -> Result<FitResult> {
    let problem = Problem::new(data, aux, cfg.variant)?;
    run_problem(&problem, cfg)
}
