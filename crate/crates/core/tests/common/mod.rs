//! Shared oracles: independent objective functions written from the model
//! definition and a small numerical maximiser.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::{digamma, ln_gamma};

use navgraph::ecm::{Ecm, EcmConfig};
use navgraph::problem::Problem;
use navgraph::vbecm::Vbecm;
use navgraph::{ModelConfig, PointState, Variant, VariationalState};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

fn ln_phi_cdf(x: f64) -> f64 {
    std_normal().cdf(x).ln()
}

fn entropy_bernoulli(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// KL{Gamma(α, β) ‖ Gamma(a, b)}, shape-rate.
pub fn kl_gamma(alpha: f64, beta: f64, a: f64, b: f64) -> f64 {
    (alpha - a) * digamma(alpha) - ln_gamma(alpha) + ln_gamma(a) + a * (beta.ln() - b.ln())
        + alpha * (b - beta) / beta
}

/// KL{Beta(α, β) ‖ Beta(a, b)}
pub fn kl_beta(alpha: f64, beta: f64, a: f64, b: f64) -> f64 {
    ln_beta(a, b) - ln_beta(alpha, beta)
        + (alpha - a) * digamma(alpha)
        + (beta - b) * digamma(beta)
        + (a - alpha + b - beta) * digamma(alpha + beta)
}

fn gauss_loglik(prob: &Problem, omega: &DMatrix<f64>) -> f64 {
    let Some(chol) = omega.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = prob.n_samples as f64;
    0.5 * n * logdet
        - 0.5 * prob.gram.component_mul(omega).sum()
        - 0.5 * n * prob.n_nodes as f64 * LN_2PI
}

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * x * x / var
}

fn pinned(cfg: &ModelConfig) -> bool {
    cfg.pin_inclusion || cfg.variant == Variant::GMN
}

/// ELBO with q(z_ij, δ_ij) parametrised by the inclusion probability d_ij =
/// `delta1` and the centre c_ij = `z_center` of the truncated normals, so that
/// it can be evaluated away from the optimal centre.
pub fn vb_elbo(prob: &Problem, cfg: &ModelConfig, st: &VariationalState) -> f64 {
    let p = prob.n_nodes;
    let nq = prob.n_vars();
    let phi = std_normal();
    let mut elbo = gauss_loglik(prob, &st.omega);
    elbo += p as f64 * (0.5 * cfg.lambda).ln() - 0.5 * cfg.lambda * st.omega.diagonal().sum();

    let e_tau = st.alpha_tau / st.beta_tau;
    let e_ln_tau = digamma(st.alpha_tau) - st.beta_tau.ln();
    let eb: Vec<f64> = (0..nq).map(|q| st.gamma1[q] * st.beta_mean[q]).collect();
    let eb2: Vec<f64> = (0..nq)
        .map(|q| st.gamma1[q] * (st.beta_mean[q].powi(2) + st.beta_var[q]))
        .collect();
    for j in 0..p {
        for i in 0..j {
            let d = st.delta1[(i, j)];
            let c = st.z_center[(i, j)];
            let w = st.omega[(i, j)];
            let mut abar = st.zeta_mean;
            let mut var_a = st.zeta_var;
            for q in 0..nq {
                let x = prob.aux[(i, q)] + prob.aux[(j, q)];
                abar += x * eb[q];
                var_a += x * x * (eb2[q] - eb[q] * eb[q]);
            }
            elbo += -0.5 * LN_2PI - (d * cfg.nu1.ln() + (1.0 - d) * cfg.nu0.ln())
                + 0.5 * e_ln_tau
                - 0.5 * e_tau * w * w * (d / cfg.nu1.powi(2) + (1.0 - d) / cfg.nu0.powi(2));
            let dens = phi.pdf(c);
            let z1 = c + d * dens / phi.cdf(c) - (1.0 - d) * dens / phi.cdf(-c);
            elbo += d * ln_phi_cdf(c) + (1.0 - d) * ln_phi_cdf(-c)
                - (c - abar) * (z1 - c)
                - 0.5 * (c - abar).powi(2)
                - 0.5 * var_a
                + entropy_bernoulli(d);
        }
    }
    elbo -= kl_gamma(st.alpha_tau, st.beta_tau, cfg.a_tau, cfg.b_tau);

    let (m, v) = (st.zeta_mean, st.zeta_var);
    elbo += -0.5 * (LN_2PI + cfg.t0_sq.ln()) - ((m - cfg.n0).powi(2) + v) / (2.0 * cfg.t0_sq)
        + 0.5 * (1.0 + LN_2PI + v.ln());

    let e_s = st.alpha_sigma / st.beta_sigma;
    let e_ln_s = digamma(st.alpha_sigma) - st.beta_sigma.ln();
    let e_ln_o = digamma(st.alpha_o) - digamma(st.alpha_o + st.beta_o);
    let e_ln_1o = digamma(st.beta_o) - digamma(st.alpha_o + st.beta_o);
    for q in 0..nq {
        let g = st.gamma1[q];
        elbo += g * (0.5 * e_ln_s + 0.5 + 0.5 * st.beta_var[q].ln()) - 0.5 * e_s * eb2[q];
        if !pinned(cfg) {
            elbo += g * e_ln_o + (1.0 - g) * e_ln_1o + entropy_bernoulli(g);
        }
    }
    if !pinned(cfg) {
        elbo -= kl_beta(st.alpha_o, st.beta_o, cfg.a_o, cfg.b_o);
    }
    elbo -= kl_gamma(st.alpha_sigma, st.beta_sigma, cfg.a_sigma, cfg.b_sigma);
    elbo
}

/// Expected complete-data log posterior given the E-step expectations stored in
/// `st` (e_delta, ez, ez2, e_gamma), as a function of the point parameters.
pub fn ecm_q(prob: &Problem, cfg: &EcmConfig, st: &PointState) -> f64 {
    let m = &cfg.model;
    let p = prob.n_nodes;
    let nq = prob.n_vars();
    let mut acc = gauss_loglik(prob, &st.omega);
    acc += p as f64 * (0.5 * m.lambda).ln() - 0.5 * m.lambda * st.omega.diagonal().sum();
    let ln_gamma_pdf = |x: f64, a: f64, b: f64| a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x;
    acc += ln_gamma_pdf(st.tau1, m.a_tau, m.b_tau);
    acc += ln_normal(st.zeta - m.n0, m.t0_sq);
    let pin = pinned(m);
    if nq > 0 {
        acc += ln_gamma_pdf(st.tau2, m.a_sigma, m.b_sigma);
        if !pin {
            acc += (m.a_o - 1.0) * st.o.ln() + (m.b_o - 1.0) * (1.0 - st.o).ln()
                - ln_beta(m.a_o, m.b_o);
        }
    }
    for j in 0..p {
        for i in 0..j {
            let ed = st.e_delta[(i, j)];
            let w = st.omega[(i, j)];
            let mut a = st.zeta;
            for q in 0..nq {
                a += (prob.aux[(i, q)] + prob.aux[(j, q)]) * st.beta[q];
            }
            acc += ed * ln_normal(w, m.nu1 * m.nu1 / st.tau1)
                + (1.0 - ed) * ln_normal(w, m.nu0 * m.nu0 / st.tau1);
            acc += -0.5 * LN_2PI - 0.5 * (st.ez2[(i, j)] - 2.0 * a * st.ez[(i, j)] + a * a);
        }
    }
    for q in 0..nq {
        let (b, g) = (st.beta[q], st.e_gamma[q]);
        acc += g * ln_normal(b, cfg.sigma1.powi(2) / st.tau2)
            + (1.0 - g) * ln_normal(b, cfg.sigma0.powi(2) / st.tau2);
        if !pin {
            acc += g * st.o.ln() + (1.0 - g) * (1.0 - st.o).ln();
        }
    }
    acc
}

/// Support of a coordinate; the maximiser works on an unconstrained transform.
#[derive(Clone, Copy, Debug)]
pub enum Dom {
    Real,
    Pos,
    Unit,
}

impl Dom {
    fn fwd(self, x: f64) -> f64 {
        match self {
            Dom::Real => x,
            Dom::Pos => x.ln(),
            Dom::Unit => (x / (1.0 - x)).ln(),
        }
    }

    fn back(self, t: f64) -> f64 {
        match self {
            Dom::Real => t,
            Dom::Pos => t.exp(),
            Dom::Unit => 1.0 / (1.0 + (-t).exp()),
        }
    }
}

fn line_max(g: &dyn Fn(f64) -> f64, x0: f64) -> f64 {
    let f = |x: f64| {
        let v = g(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut h = 0.05 * (1.0 + x0.abs());
    let f0 = f(x0);
    let (mut lo, mut hi);
    if f(x0 + h) > f0 {
        lo = x0;
        let mut x = x0 + h;
        let mut fx = f(x);
        loop {
            h *= 2.0;
            let y = x + h;
            let fy = f(y);
            if fy <= fx {
                hi = y;
                break;
            }
            lo = x;
            x = y;
            fx = fy;
        }
    } else if f(x0 - h) > f0 {
        hi = x0;
        let mut x = x0 - h;
        let mut fx = f(x);
        loop {
            h *= 2.0;
            let y = x - h;
            let fy = f(y);
            if fy <= fx {
                lo = y;
                break;
            }
            hi = x;
            x = y;
            fx = fy;
        }
    } else {
        lo = x0 - h;
        hi = x0 + h;
    }
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 * (1.0 + lo.abs()) {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Maximises `f` over the coordinates `x0` by cyclic line searches on the
/// transformed scale, then polishes with finite-difference Newton steps.
pub fn maximise(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], dom: &[Dom]) -> Vec<f64> {
    let n = x0.len();
    let back = |t: &[f64]| -> Vec<f64> { t.iter().zip(dom).map(|(v, d)| d.back(*v)).collect() };
    let ft = |t: &[f64]| {
        let v = f(&back(t));
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut t: Vec<f64> = x0.iter().zip(dom).map(|(v, d)| d.fwd(*v)).collect();
    for _ in 0..300 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let g = |s: f64| {
                let mut tt = t.clone();
                tt[k] = s;
                ft(&tt)
            };
            let s = line_max(&g, t[k]);
            if g(s) >= g(t[k]) {
                moved = moved.max((s - t[k]).abs());
                t[k] = s;
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    let h = 1e-4;
    for _ in 0..30 {
        let f0 = ft(&t);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let at = |di: &[(usize, f64)]| {
            let mut tt = t.clone();
            for &(k, s) in di {
                tt[k] += s;
            }
            ft(&tt)
        };
        for a in 0..n {
            let (fp, fm) = (at(&[(a, h)]), at(&[(a, -h)]));
            grad[a] = (fp - fm) / (2.0 * h);
            hess[(a, a)] = (fp - 2.0 * f0 + fm) / (h * h);
            for b in 0..a {
                let v = (at(&[(a, h), (b, h)]) - at(&[(a, h), (b, -h)]) - at(&[(a, -h), (b, h)])
                    + at(&[(a, -h), (b, -h)]))
                    / (4.0 * h * h);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        let Some(step) = (-hess).cholesky().map(|c| c.solve(&grad)) else {
            break;
        };
        let cand: Vec<f64> = t.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
        if !(ft(&cand) >= f0) {
            break;
        }
        t = cand;
        if step.amax() < 1e-13 {
            break;
        }
    }
    back(&t)
}

/// Worst relative gap |a − b| / max(1, |b|).
pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Small random problem: N × P Gaussian data and P × Q uniform auxiliary matrix.
pub fn random_problem(seed: u64, n: usize, p: usize, q: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let v = DMatrix::from_fn(p, q, |_, _| rng.random_range(0.0..1.0));
    Problem::from_parts(y.tr_mul(&y), n, v)
}

/// Random but moderate hyperparameters.
pub fn random_config(seed: u64, variant: Variant) -> ModelConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    ModelConfig {
        variant,
        nu0: rng.random_range(0.05..0.5),
        nu1: rng.random_range(2.0..20.0),
        lambda: rng.random_range(0.5..3.0),
        a_tau: rng.random_range(1.0..3.0),
        b_tau: rng.random_range(1.0..3.0),
        a_sigma: rng.random_range(1.0..3.0),
        b_sigma: rng.random_range(1.0..3.0),
        a_o: rng.random_range(1.0..2.0),
        b_o: rng.random_range(1.0..4.0),
        n0: rng.random_range(-1.5..0.0),
        t0_sq: rng.random_range(0.5..2.0),
        ..ModelConfig::default()
    }
}

/// Distance between each closed-form VBE update and the numerical maximiser of
/// the ELBO over the same factor, for one random instance.
pub fn vbe_update_gaps(seed: u64, variant: Variant) -> Vec<(&'static str, f64)> {
    let prob = random_problem(seed, 10, 3, 2);
    let cfg = random_config(seed, variant);
    let mut eng = Vbecm::new(&prob, &cfg);
    for _ in 0..3 {
        eng.step().unwrap();
    }
    let mut gaps = Vec::new();

    // q(z, δ): inclusion probability and truncation centre per pair.
    let base = eng.state.clone();
    let mut upd = Vbecm::from_state(&prob, &cfg, base.clone());
    upd.update_edges();
    let mut worst = 0.0f64;
    for j in 0..3 {
        for i in 0..j {
            let f = |x: &[f64]| {
                let mut s = base.clone();
                for (r, c) in [(i, j), (j, i)] {
                    s.delta1[(r, c)] = x[0];
                    s.z_center[(r, c)] = x[1];
                }
                vb_elbo(&prob, &cfg, &s)
            };
            let x0 = [0.5, base.z_center[(i, j)]];
            let opt = maximise(&f, &x0, &[Dom::Unit, Dom::Real]);
            worst = worst.max(rel_gap(
                &[upd.state.delta1[(i, j)], upd.state.z_center[(i, j)]],
                &opt,
            ));
        }
    }
    gaps.push(("edges", worst));

    // Every later factor is checked from a state whose q(z, δ) is current.
    let mut eng = upd;
    let base = eng.state.clone();

    let mut t = Vbecm::from_state(&prob, &cfg, base.clone());
    t.update_tau();
    let f = |x: &[f64]| {
        let mut s = base.clone();
        s.alpha_tau = x[0];
        s.beta_tau = x[1];
        vb_elbo(&prob, &cfg, &s)
    };
    let opt = maximise(&f, &[base.alpha_tau, base.beta_tau], &[Dom::Pos, Dom::Pos]);
    gaps.push(("tau", rel_gap(&[t.state.alpha_tau, t.state.beta_tau], &opt)));

    for q in 0..2 {
        let mut b = Vbecm::from_state(&prob, &cfg, base.clone());
        b.update_beta_gamma(q);
        let pin = pinned(&cfg);
        let f = |x: &[f64]| {
            let mut s = base.clone();
            s.beta_mean[q] = x[0];
            s.beta_var[q] = x[1];
            if !pin {
                s.gamma1[q] = x[2];
            }
            vb_elbo(&prob, &cfg, &s)
        };
        let (x0, dom, got) = if pin {
            (
                vec![base.beta_mean[q], base.beta_var[q]],
                vec![Dom::Real, Dom::Pos],
                vec![b.state.beta_mean[q], b.state.beta_var[q]],
            )
        } else {
            (
                vec![base.beta_mean[q], base.beta_var[q], 0.5],
                vec![Dom::Real, Dom::Pos, Dom::Unit],
                vec![b.state.beta_mean[q], b.state.beta_var[q], b.state.gamma1[q]],
            )
        };
        let opt = maximise(&f, &x0, &dom);
        gaps.push(("beta_gamma", rel_gap(&got, &opt)));
    }

    let mut z = Vbecm::from_state(&prob, &cfg, base.clone());
    z.update_zeta();
    let f = |x: &[f64]| {
        let mut s = base.clone();
        s.zeta_mean = x[0];
        s.zeta_var = x[1];
        vb_elbo(&prob, &cfg, &s)
    };
    let opt = maximise(&f, &[base.zeta_mean, base.zeta_var], &[Dom::Real, Dom::Pos]);
    gaps.push(("zeta", rel_gap(&[z.state.zeta_mean, z.state.zeta_var], &opt)));

    let mut sg = Vbecm::from_state(&prob, &cfg, base.clone());
    sg.update_sigma();
    let f = |x: &[f64]| {
        let mut s = base.clone();
        s.alpha_sigma = x[0];
        s.beta_sigma = x[1];
        vb_elbo(&prob, &cfg, &s)
    };
    let opt = maximise(&f, &[base.alpha_sigma, base.beta_sigma], &[Dom::Pos, Dom::Pos]);
    gaps.push(("sigma", rel_gap(&[sg.state.alpha_sigma, sg.state.beta_sigma], &opt)));

    if !pinned(&cfg) {
        let mut o = Vbecm::from_state(&prob, &cfg, base.clone());
        o.update_o();
        let f = |x: &[f64]| {
            let mut s = base.clone();
            s.alpha_o = x[0];
            s.beta_o = x[1];
            vb_elbo(&prob, &cfg, &s)
        };
        let opt = maximise(&f, &[base.alpha_o, base.beta_o], &[Dom::Pos, Dom::Pos]);
        gaps.push(("o", rel_gap(&[o.state.alpha_o, o.state.beta_o], &opt)));
    }

    // The sweep ends on the last column, which is then optimal given the rest.
    eng.update_omega().unwrap();
    let after = eng.state.omega.clone();
    let f = |x: &[f64]| {
        let mut s = base.clone();
        s.omega = after.clone();
        s.omega[(0, 2)] = x[0];
        s.omega[(2, 0)] = x[0];
        s.omega[(1, 2)] = x[1];
        s.omega[(2, 1)] = x[1];
        s.omega[(2, 2)] = x[2];
        vb_elbo(&prob, &cfg, &s)
    };
    let x0 = [0.0, 0.0, after[(2, 2)] * 1.5];
    let opt = maximise(&f, &x0, &[Dom::Real, Dom::Real, Dom::Pos]);
    gaps.push(("omega", rel_gap(&[after[(0, 2)], after[(1, 2)], after[(2, 2)]], &opt)));
    gaps
}

/// Distance between each ECM conditional maximisation and the numerical
/// maximiser of the Q-function over the same coordinate.
pub fn cm_update_gaps(seed: u64, variant: Variant) -> Vec<(&'static str, f64)> {
    let prob = random_problem(seed, 10, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let cfg = EcmConfig::new(random_config(seed, variant), rng.random_range(0.01..0.5)).unwrap();
    let mut eng = Ecm::new(&prob, &cfg);
    for _ in 0..3 {
        eng.e_step();
        eng.cm_step().unwrap();
    }
    eng.e_step();
    let base = eng.state.clone();
    let mut gaps = Vec::new();
    let scalar = |name: &'static str,
                  set: &dyn Fn(&mut PointState, f64),
                  get: &dyn Fn(&PointState) -> f64,
                  upd: &dyn Fn(&mut Ecm),
                  dom: Dom,
                  gaps: &mut Vec<(&'static str, f64)>| {
        let mut e = Ecm::from_state(&prob, &cfg, base.clone());
        upd(&mut e);
        let f = |x: &[f64]| {
            let mut s = base.clone();
            set(&mut s, x[0]);
            ecm_q(&prob, &cfg, &s)
        };
        let opt = maximise(&f, &[get(&base)], &[dom]);
        gaps.push((name, rel_gap(&[get(&e.state)], &opt)));
    };
    scalar("tau1", &|s, v| s.tau1 = v, &|s| s.tau1, &|e| e.cm_tau1(), Dom::Pos, &mut gaps);
    scalar("tau2", &|s, v| s.tau2 = v, &|s| s.tau2, &|e| e.cm_tau2(), Dom::Pos, &mut gaps);
    scalar("zeta", &|s, v| s.zeta = v, &|s| s.zeta, &|e| e.cm_zeta(), Dom::Real, &mut gaps);
    for q in 0..2 {
        scalar(
            "beta",
            &move |s, v| s.beta[q] = v,
            &move |s| s.beta[q],
            &move |e| e.cm_beta(q),
            Dom::Real,
            &mut gaps,
        );
    }
    if !pinned(&cfg.model) {
        scalar("o", &|s, v| s.o = v, &|s| s.o, &|e| e.cm_o(), Dom::Unit, &mut gaps);
    }
    let mut e = Ecm::from_state(&prob, &cfg, base.clone());
    e.cm_omega().unwrap();
    let after = e.state.omega.clone();
    let f = |x: &[f64]| {
        let mut s = base.clone();
        s.omega = after.clone();
        s.omega[(0, 2)] = x[0];
        s.omega[(2, 0)] = x[0];
        s.omega[(1, 2)] = x[1];
        s.omega[(2, 1)] = x[1];
        s.omega[(2, 2)] = x[2];
        ecm_q(&prob, &cfg, &s)
    };
    let opt = maximise(&f, &[0.0, 0.0, after[(2, 2)] * 1.5], &[Dom::Real, Dom::Real, Dom::Pos]);
    gaps.push(("omega", rel_gap(&[after[(0, 2)], after[(1, 2)], after[(2, 2)]], &opt)));
    gaps
}

/// Variant of the k-th oracle instance: mostly GMSS, every fifth GMN.
pub fn oracle_variant(k: u64) -> Variant {
    if k % 5 == 4 {
        Variant::GMN
    } else {
        Variant::GMSS
    }
}

/// Outcome of one monotonicity run.
#[derive(Debug, Default)]
pub struct MonotoneRun {
    /// Largest relative decrease of the ELBO, or of the Q-function within a CM
    /// sweep, observed over the run (≤ 0 when monotone).
    pub worst_drop: f64,
    /// Largest relative decrease of the ECM log posterior across iterations.
    pub worst_objective_drop: f64,
    pub pd_failures: usize,
    pub steps: usize,
}

fn rel_drop(before: f64, after: f64) -> f64 {
    (before - after) / before.abs().max(1.0)
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

/// Small seeded scenario for the k-th monotonicity run: P ≤ 30, N ≤ 100, Q ≤ 10.
pub fn small_scenario(k: u64) -> navgraph::simgen::Replicate {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
    let p = rng.random_range(8..=30);
    let q = rng.random_range(2..=10);
    let spec = navgraph::simgen::ScenarioSpec {
        n_samples: rng.random_range(40..=100),
        n_nodes: p,
        n_candidate_vars: q,
        n_active_vars: rng.random_range(0..=q.min(3)),
        sparsity_target: 0.1,
        noise_level: 0.1,
        ..navgraph::simgen::ScenarioSpec::reference()
    }
    .with_seed(k + 1);
    navgraph::simgen::generate(&spec).unwrap()
}

/// Runs both engines for the k-th seeded problem and records every decrease of
/// the monitored objectives and every failed Cholesky after an Ω sweep.
pub fn monotone_run(k: u64, iterations: usize) -> MonotoneRun {
    let variant = [Variant::GMStar, Variant::GMN, Variant::GMSS][(k % 3) as usize];
    let rep = small_scenario(k);
    let data = navgraph::center_columns(&rep.data).unwrap();
    let prob = Problem::new(&data, &rep.aux, variant).unwrap();
    let mut cfg = ModelConfig::for_dimensions(variant, prob.n_nodes, prob.n_vars()).unwrap();
    cfg.nu0 = [0.05, 0.1, 0.3][(k / 3 % 3) as usize];
    cfg.init_jitter = 0.1;
    cfg.seed = k;
    let mut out = MonotoneRun::default();

    let mut vb = Vbecm::new(&prob, &cfg);
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..iterations {
        if vb.step().is_err() || !is_pd(&vb.state.omega) {
            out.pd_failures += 1;
            break;
        }
        let e = vb.elbo().unwrap();
        if prev.is_finite() {
            out.worst_drop = out.worst_drop.max(rel_drop(prev, e));
        }
        prev = e;
        out.steps += 1;
    }

    let ecfg = EcmConfig::new(cfg.clone(), 0.1).unwrap();
    let mut em = Ecm::new(&prob, &ecfg);
    let mut prev_obj = f64::NEG_INFINITY;
    for _ in 0..iterations {
        em.e_step();
        let mut q = em.q_function().unwrap();
        let mut track = |em: &Ecm, out: &mut MonotoneRun| {
            let now = em.q_function().unwrap();
            out.worst_drop = out.worst_drop.max(rel_drop(q, now));
            q = now;
        };
        em.cm_tau1();
        track(&em, &mut out);
        em.cm_tau2();
        track(&em, &mut out);
        em.cm_zeta();
        track(&em, &mut out);
        for j in 0..prob.n_vars() {
            em.cm_beta(j);
            track(&em, &mut out);
        }
        em.cm_o();
        track(&em, &mut out);
        if em.cm_omega().is_err() || !is_pd(&em.state.omega) {
            out.pd_failures += 1;
            break;
        }
        track(&em, &mut out);
        let obj = em.objective().unwrap();
        if prev_obj.is_finite() {
            out.worst_objective_drop = out.worst_objective_drop.max(rel_drop(prev_obj, obj));
        }
        prev_obj = obj;
        out.steps += 1;
    }
    out
}

/// Threshold from a direct scan of every candidate κ ∈ {0} ∪ {distinct PPIs < 1}
/// in increasing order, evaluating the FDR estimate from scratch each time.
pub fn fdr_scan_oracle(ppis: &[f64], target: f64) -> f64 {
    let mut cands: Vec<f64> = ppis.iter().copied().filter(|&p| p < 1.0).collect();
    cands.push(0.0);
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();
    for kappa in cands {
        let sel: Vec<f64> = ppis.iter().copied().filter(|&p| p > kappa).collect();
        if sel.is_empty() {
            continue;
        }
        let fdr = sel.iter().map(|p| 1.0 - p).sum::<f64>() / sel.len() as f64;
        if fdr <= target {
            return kappa;
        }
    }
    1.0
}

/// Random PPI vector: a mix of near-0, near-1 and uniform values, with ties.
pub fn random_ppis(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..200);
    (0..n)
        .map(|_| match rng.random_range(0..5) {
            0 => rng.random_range(0.0..0.05),
            1 => rng.random_range(0.95..=1.0),
            2 => [0.0, 0.5, 1.0][rng.random_range(0..3)],
            _ => rng.random_range(0.0..=1.0),
        })
        .collect()
}

/// Number of mismatches against the scan oracle over `n` random vectors.
pub fn fdr_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|_| {
            let ppis = random_ppis(&mut rng);
            let target = rng.random_range(0.01..0.5);
            navgraph::postprocess::fdr_threshold(&ppis, target) != fdr_scan_oracle(&ppis, target)
        })
        .count()
}

/// (mean edges, sd edges, n0, t0², decimals of t0²) for P = 100.
pub const ELICITATION_TABLE: [(f64, f64, f64, f64, u32); 9] = [
    (25.0, 25.0, -2.69, 0.09, 2),
    (25.0, 50.0, -2.93, 0.30, 2),
    (25.0, 150.0, -4.34, 1.85, 2),
    (50.0, 25.0, -2.36, 0.03, 2),
    (50.0, 50.0, -2.45, 0.12, 2),
    (50.0, 150.0, -3.09, 0.77, 2),
    (150.0, 25.0, -1.88, 0.004, 3),
    (150.0, 50.0, -1.90, 0.02, 2),
    (150.0, 150.0, -2.04, 0.18, 2),
];

/// Problems found when checking every table row in both directions; empty
/// when all rows reproduce.
pub fn elicitation_table_problems() -> Vec<String> {
    use navgraph::elicitation::{elicit_hyperparams, prior_edge_moments, EdgePriorTarget};
    let mut out = Vec::new();
    for &(mean, sd, n0, t0, dec) in &ELICITATION_TABLE {
        let (en0, et0) = elicit_hyperparams(&EdgePriorTarget::new(mean, sd, 100).unwrap()).unwrap();
        let t_tol = if dec == 3 { 0.005 } else { 0.01 };
        if (en0 - n0).abs() > 0.01 || (et0 - t0).abs() > t_tol {
            out.push(format!("({mean}, {sd}) elicited ({en0:.4}, {et0:.4}), table ({n0}, {t0})"));
        }
        // The targets must be reachable from some point of the rounding box.
        let half_t = 0.5 * 10f64.powi(-(dec as i32));
        let (mut m_lo, mut m_hi, mut s_lo, mut s_hi) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for a in 0..=10 {
            for b in 0..=10 {
                let x = n0 - 0.005 + 0.001 * a as f64;
                let y = (t0 - half_t + 2.0 * half_t * b as f64 / 10.0).max(1e-9);
                let (m, s) = prior_edge_moments(x, y, 100).unwrap();
                m_lo = m_lo.min(m);
                m_hi = m_hi.max(m);
                s_lo = s_lo.min(s);
                s_hi = s_hi.max(s);
            }
        }
        if !(m_lo <= mean && mean <= m_hi && s_lo <= sd && sd <= s_hi) {
            out.push(format!(
                "({n0}, {t0}) maps to mean [{m_lo:.2}, {m_hi:.2}] sd [{s_lo:.2}, {s_hi:.2}]"
            ));
        }
    }
    out
}
