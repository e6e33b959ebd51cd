//! Expectation conditional maximisation with a continuous spike-and-slab on
//! the auxiliary effects.
//!
//! The latent variables are the edge indicators δ, the probit latents z and the
//! effect indicators γ; every other parameter is a point estimate. Each
//! iteration is one E-step followed by conditional maximisations in the order
//! τ₁ → τ₂ → ζ → β → o → Ω. The objective tracked is the log marginal posterior
//! of the point parameters, which ECM never decreases.

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
    ln_beta, ln_gamma, ln_norm_cdf, ln_normal_density, log_sum_exp, mills_lower, mills_upper,
    LN_SQRT_2PI,
};
use crate::types::{
    AuxiliaryMatrix, Criteria, DataMatrix, EffectSummary, Engine, FitResult, FitState,
    ModelConfig, PointState, Variant,
};

/// Spike and slab standard deviations of the continuous effect prior
/// γ N(0, σ₁²/τ₂) + (1-γ) N(0, σ₀²/τ₂).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcmConfig {
    pub model: ModelConfig,
    pub sigma0: f64,
    pub sigma1: f64,
}

/// Candidate spike sds for the effect prior.
pub const SIGMA0_GRID: [f64; 4] = [1e-6, 1e-3, 1e-2, 1e-1];

impl EcmConfig {
    pub fn new(model: ModelConfig, sigma0: f64) -> Result<Self> {
        let cfg = Self {
            model,
            sigma0,
            sigma1: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0 < self.sigma1) {
            return Err(Error::Validation(format!(
                "sigma0={} must be positive and below sigma1={}",
                self.sigma0, self.sigma1
            )));
        }
        Ok(())
    }

    fn pinned(&self) -> bool {
        self.model.pin_inclusion || self.model.variant == Variant::GMN
    }
}

/// Probabilities are kept away from 0 and 1 so their logs stay finite.
const PROB_FLOOR: f64 = 1e-300;

pub fn initial_point(problem: &Problem, cfg: &EcmConfig) -> PointState {
    let m = &cfg.model;
    let p = problem.n_nodes;
    let q = problem.n_vars();
    let mut beta = vec![0.0; q];
    if m.init_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
        let normal = Normal::new(0.0, m.init_jitter).expect("positive jitter");
        for b in beta.iter_mut() {
            *b = normal.sample(&mut rng);
        }
    }
    PointState {
        omega: DMatrix::identity(p, p),
        tau1: m.a_tau / m.b_tau,
        tau2: m.a_sigma / m.b_sigma,
        zeta: m.n0,
        beta,
        o: m.a_o / (m.a_o + m.b_o),
        e_delta: DMatrix::zeros(p, p),
        e_gamma: vec![0.0; q],
        d_star: DMatrix::zeros(p, p),
        g_star: vec![0.0; q],
        ez: DMatrix::zeros(p, p),
        ez2: DMatrix::zeros(p, p),
        e_alpha: DMatrix::zeros(p, p),
    }
}

/// A single ECM fit in progress.
#[derive(Clone, Debug)]
pub struct Ecm<'a> {
    problem: &'a Problem,
    cfg: EcmConfig,
    pub state: PointState,
    node_effect: Vec<f64>,
}

impl<'a> Ecm<'a> {
    pub fn new(problem: &'a Problem, cfg: &EcmConfig) -> Self {
        Self::from_state(problem, cfg, initial_point(problem, cfg))
    }

    pub fn from_state(problem: &'a Problem, cfg: &EcmConfig, state: PointState) -> Self {
        let node_effect = problem.node_effects(&state.beta);
        Self {
            problem,
            cfg: cfg.clone(),
            state,
            node_effect,
        }
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.state.zeta + self.node_effect[i] + self.node_effect[j]
    }

    pub fn e_step(&mut self) {
        let p = self.problem.n_nodes;
        let m = &self.cfg.model;
        let (var0, var1) = (
            m.nu0 * m.nu0 / self.state.tau1,
            m.nu1 * m.nu1 / self.state.tau1,
        );
        let (i0, i1) = (m.nu0.powi(-2), m.nu1.powi(-2));
        for j in 0..p {
            for i in 0..j {
                let a = self.alpha(i, j);
                let w = self.state.omega[(i, j)];
                let l1 = ln_normal_density(w, var1) + ln_norm_cdf(a);
                let l0 = ln_normal_density(w, var0) + ln_norm_cdf(-a);
                let ed = (l1 - log_sum_exp(l1, l0)).exp();
                let ez = a + mills_lower(a) + ed * (mills_upper(a) - mills_lower(a));
                let st = &mut self.state;
                for (r, c) in [(i, j), (j, i)] {
                    st.e_delta[(r, c)] = ed;
                    st.d_star[(r, c)] = ed * i1 + (1.0 - ed) * i0;
                    st.ez[(r, c)] = ez;
                    st.ez2[(r, c)] = a * ez + 1.0;
                    st.e_alpha[(r, c)] = a;
                }
            }
        }
        let (s0, s1) = (self.cfg.sigma0, self.cfg.sigma1);
        let pinned = self.cfg.pinned();
        let st = &mut self.state;
        for q in 0..st.beta.len() {
            let eg = if pinned {
                1.0
            } else {
                let b = st.beta[q];
                let l1 = st.o.max(PROB_FLOOR).ln() + ln_normal_density(b, s1 * s1 / st.tau2);
                let l0 = (1.0 - st.o).max(PROB_FLOOR).ln()
                    + ln_normal_density(b, s0 * s0 / st.tau2);
                (l1 - log_sum_exp(l1, l0)).exp()
            };
            st.e_gamma[q] = eg;
            st.g_star[q] = eg / (s1 * s1) + (1.0 - eg) / (s0 * s0);
        }
    }

    fn weighted_omega_sq(&self) -> f64 {
        let p = self.problem.n_nodes;
        let mut acc = 0.0;
        for j in 0..p {
            for i in 0..j {
                acc += self.state.omega[(i, j)].powi(2) * self.state.d_star[(i, j)];
            }
        }
        acc
    }

    pub fn cm_tau1(&mut self) {
        let m = &self.cfg.model;
        let pairs = self.problem.n_pairs() as f64;
        let num = pairs + 2.0 * m.a_tau - 2.0;
        self.state.tau1 = (num / (self.weighted_omega_sq() + 2.0 * m.b_tau)).max(f64::MIN_POSITIVE);
    }

    pub fn cm_tau2(&mut self) {
        let q = self.problem.n_vars();
        if q == 0 {
            return;
        }
        let m = &self.cfg.model;
        let st = &self.state;
        let quad: f64 = st.beta.iter().zip(&st.g_star).map(|(b, g)| b * b * g).sum();
        self.state.tau2 =
            ((q as f64 + 2.0 * m.a_sigma - 2.0) / (quad + 2.0 * m.b_sigma)).max(f64::MIN_POSITIVE);
    }

    fn ez_pair_sum(&self) -> f64 {
        let p = self.problem.n_nodes;
        let mut acc = 0.0;
        for j in 0..p {
            for i in 0..j {
                acc += self.state.ez[(i, j)];
            }
        }
        acc
    }

    pub fn cm_zeta(&mut self) {
        let m = &self.cfg.model;
        let p = self.problem.n_nodes as f64;
        let e_tot: f64 = self.node_effect.iter().sum();
        let t0 = m.t0_sq;
        self.state.zeta = (2.0 * m.n0 + 2.0 * t0 * self.ez_pair_sum()
            - 2.0 * t0 * (p - 1.0) * e_tot)
            / (p * (p - 1.0) * t0 + 2.0);
    }

    /// Coordinate update of β_q given every other effect.
    pub fn cm_beta(&mut self, q: usize) {
        let zrow: Vec<f64> = self.state.ez.row_iter().map(|r| r.sum()).collect();
        self.cm_beta_with(q, &zrow);
    }

    fn cm_beta_with(&mut self, q: usize, zrow: &[f64]) {
        let p = self.problem.n_nodes as f64;
        let e_tot: f64 = self.node_effect.iter().sum();
        let zeta = self.state.zeta;
        let a_q = self.problem.design_sq[q];
        let mut b = self.state.beta[q] * a_q;
        for (i, v) in self.problem.aux.column(q).iter().enumerate() {
            if *v != 0.0 {
                let e = self.node_effect[i];
                b += v * (zrow[i] - (p - 1.0) * zeta - (p - 2.0) * e - e_tot);
            }
        }
        let new = b / (a_q + self.state.tau2 * self.state.g_star[q]);
        let delta = new - self.state.beta[q];
        self.state.beta[q] = new;
        if delta != 0.0 {
            for (e, v) in self.node_effect.iter_mut().zip(self.problem.aux.column(q).iter()) {
                *e += v * delta;
            }
        }
    }

    pub fn cm_o(&mut self) {
        let q = self.problem.n_vars();
        if q == 0 || self.cfg.pinned() {
            return;
        }
        let m = &self.cfg.model;
        let g: f64 = self.state.e_gamma.iter().sum();
        let o = (g + m.a_o - 1.0) / (q as f64 + m.a_o + m.b_o - 2.0);
        self.state.o = o.clamp(PROB_FLOOR, 1.0 - 1e-16);
    }

    pub fn cm_omega(&mut self) -> Result<()> {
        let pen = self.state.d_star.map(|d| self.state.tau1 * d);
        sweep_columns(
            &mut self.state.omega,
            &self.problem.gram,
            self.problem.n_samples,
            self.cfg.model.lambda,
            &pen,
        )
    }

    pub fn cm_step(&mut self) -> Result<()> {
        self.cm_tau1();
        self.cm_tau2();
        self.cm_zeta();
        let zrow: Vec<f64> = self.state.ez.row_iter().map(|r| r.sum()).collect();
        for q in 0..self.problem.n_vars() {
            self.cm_beta_with(q, &zrow);
        }
        self.cm_o();
        self.cm_omega()
    }

    fn ln_gamma_density(x: f64, a: f64, b: f64) -> f64 {
        a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x
    }

    /// Log prior terms shared by the objective and the Q-function: Ω diagonal,
    /// τ₁, τ₂, ζ and o.
    fn log_hyperprior(&self) -> f64 {
        let m = &self.cfg.model;
        let st = &self.state;
        let p = self.problem.n_nodes as f64;
        let mut acc = p * (0.5 * m.lambda).ln() - 0.5 * m.lambda * st.omega.diagonal().sum();
        acc += Self::ln_gamma_density(st.tau1, m.a_tau, m.b_tau);
        acc += ln_normal_density(st.zeta - m.n0, m.t0_sq);
        if self.problem.n_vars() > 0 {
            acc += Self::ln_gamma_density(st.tau2, m.a_sigma, m.b_sigma);
            if !self.cfg.pinned() {
                acc += (m.a_o - 1.0) * st.o.ln() + (m.b_o - 1.0) * (1.0 - st.o).ln()
                    - ln_beta(m.a_o, m.b_o);
            }
        }
        acc
    }

    /// Log marginal posterior of (Ω, τ₁, τ₂, ζ, β, o) up to the normalising
    /// constant, with δ, z and γ integrated out.
    pub fn objective(&self) -> Result<f64> {
        let m = &self.cfg.model;
        let st = &self.state;
        let p = self.problem.n_nodes;
        let mut acc = self.problem.log_likelihood(&st.omega)? + self.log_hyperprior();
        let (var0, var1) = (m.nu0 * m.nu0 / st.tau1, m.nu1 * m.nu1 / st.tau1);
        for j in 0..p {
            for i in 0..j {
                let a = self.alpha(i, j);
                let w = st.omega[(i, j)];
                acc += log_sum_exp(
                    ln_norm_cdf(a) + ln_normal_density(w, var1),
                    ln_norm_cdf(-a) + ln_normal_density(w, var0),
                );
            }
        }
        acc += self.effect_log_prior();
        Ok(acc)
    }

    fn effect_log_prior(&self) -> f64 {
        let st = &self.state;
        let (v0, v1) = (
            self.cfg.sigma0.powi(2) / st.tau2,
            self.cfg.sigma1.powi(2) / st.tau2,
        );
        st.beta
            .iter()
            .map(|&b| {
                if self.cfg.pinned() {
                    ln_normal_density(b, v1)
                } else {
                    log_sum_exp(
                        st.o.ln() + ln_normal_density(b, v1),
                        (1.0 - st.o).ln() + ln_normal_density(b, v0),
                    )
                }
            })
            .sum()
    }

    /// Q(θ | θ'): expected complete-data log posterior under the latent
    /// distribution cached by the last E-step, evaluated at the current θ.
    pub fn q_function(&self) -> Result<f64> {
        let m = &self.cfg.model;
        let st = &self.state;
        let p = self.problem.n_nodes;
        let mut acc = self.problem.log_likelihood(&st.omega)? + self.log_hyperprior();
        let (var0, var1) = (m.nu0 * m.nu0 / st.tau1, m.nu1 * m.nu1 / st.tau1);
        for j in 0..p {
            for i in 0..j {
                let ed = st.e_delta[(i, j)];
                let w = st.omega[(i, j)];
                let a = self.alpha(i, j);
                acc += ed * ln_normal_density(w, var1) + (1.0 - ed) * ln_normal_density(w, var0);
                acc += -LN_SQRT_2PI
                    - 0.5 * (st.ez2[(i, j)] - 2.0 * a * st.ez[(i, j)] + a * a);
            }
        }
        let (v0, v1) = (
            self.cfg.sigma0.powi(2) / st.tau2,
            self.cfg.sigma1.powi(2) / st.tau2,
        );
        let pinned = self.cfg.pinned();
        for (q, &b) in st.beta.iter().enumerate() {
            let eg = st.e_gamma[q];
            acc += eg * ln_normal_density(b, v1) + (1.0 - eg) * ln_normal_density(b, v0);
            if !pinned {
                acc += eg * st.o.ln() + (1.0 - eg) * (1.0 - st.o).ln();
            }
        }
        Ok(acc)
    }
}

struct Run {
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Iterates until the relative change of the objective stays below `elbo_tol`
/// for two consecutive iterations.
fn iterate(engine: &mut Ecm) -> Result<Run> {
    let (max_iter, tol) = (engine.cfg.model.max_iter, engine.cfg.model.elbo_tol);
    let mut trace = Vec::new();
    let mut calm = 0;
    let mut converged = false;
    let mut prev = f64::NAN;
    let mut iterations = 0;
    while iterations < max_iter {
        engine.e_step();
        engine.cm_step()?;
        iterations += 1;
        let obj = engine.objective()?;
        if !obj.is_finite() {
            return Err(Error::NoConvergence(format!(
                "objective became {obj} at iteration {iterations}"
            )));
        }
        trace.push(obj);
        if prev.is_finite() && (obj - prev).abs() < tol * obj.abs() {
            calm += 1;
            if calm >= 2 {
                converged = true;
                break;
            }
        } else {
            calm = 0;
        }
        prev = obj;
    }
    Ok(Run {
        trace,
        converged,
        iterations,
    })
}

fn finish(problem: &Problem, cfg: &EcmConfig, mut engine: Ecm, run: Run) -> Result<FitResult> {
    // Expectations and Q-function at the final estimate.
    engine.e_step();
    let q_value = engine.q_function()?;
    let state = engine.state;
    let effects = state
        .beta
        .iter()
        .zip(&state.e_gamma)
        .map(|(&b, &g)| EffectSummary {
            ppi: g,
            mean: b,
            sd: 0.0,
            ci_low: b,
            ci_high: b,
        })
        .collect();
    let mut fit = FitResult {
        engine: Engine::Ecm,
        variant: cfg.model.variant,
        edge_ppi: state.e_delta.clone(),
        var_ppi: state.e_gamma.clone(),
        state: FitState::Point(state),
        elbo_trace: run.trace,
        converged: run.converged,
        iterations: run.iterations,
        nu0_used: cfg.model.nu0,
        sigma0_used: Some(cfg.sigma0),
        q_value: Some(q_value),
        criteria: Criteria {
            aic: f64::NAN,
            bic: f64::NAN,
            ebic: f64::NAN,
        },
        effects,
        runtime_seconds: 0.0,
    };
    fit.criteria = crate::grid::compute_criteria(&fit, problem, crate::grid::DEFAULT_EBIC_GAMMA);
    Ok(fit)
}

/// Number of Ω maximisations made after seeding a restart, before the first E-step.
const RESTART_OMEGA_SWEEPS: usize = 5;

/// Runs ECM from the default start with the slab edges fixed to `edges` and
/// τ₁ taken from `state` until Ω has adapted, then iterates to convergence.
pub fn run_from_edges(
    problem: &Problem,
    cfg: &EcmConfig,
    state: &PointState,
    edges: DMatrix<f64>,
) -> Result<FitResult> {
    let mut init = initial_point(problem, cfg);
    let m = &cfg.model;
    let (i0, i1) = (m.nu0.powi(-2), m.nu1.powi(-2));
    init.d_star = edges.map(|e| e * i1 + (1.0 - e) * i0);
    init.e_delta = edges;
    init.tau1 = state.tau1;
    let mut engine = Ecm::from_state(problem, cfg, init);
    for _ in 0..RESTART_OMEGA_SWEEPS {
        engine.cm_omega()?;
    }
    let run = iterate(&mut engine)?;
    finish(problem, cfg, engine, run)
}

/// Runs ECM to convergence from the default start and, when
/// `edge_restarts` is set, through the restart ladder of
/// [`crate::restart::ladder`].
pub fn run_problem(problem: &Problem, cfg: &EcmConfig) -> Result<FitResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut engine = Ecm::new(problem, cfg);
    let run = iterate(&mut engine)?;
    let mut fit = finish(problem, cfg, engine, run)?;
    if cfg.model.edge_restarts {
        fit = crate::restart::ladder(fit, &cfg.model, |best, edges| match &best.state {
            FitState::Point(st) => run_from_edges(problem, cfg, st, edges),
            FitState::Variational(_) => unreachable!("ECM fits carry a point state"),
        })?;
    }
    fit.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(fit)
}

pub fn run_ecm(data: &DataMatrix, aux: &AuxiliaryMatrix, cfg: &EcmConfig) -> Result<FitResult> {
    let problem = Problem::new(data, aux, cfg.model.variant)?;
    run_problem(&problem, cfg)
}
