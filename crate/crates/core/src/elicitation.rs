//! Elicitation of the sparsity prior ζ ~ N(n₀, t₀²) from a prior guess of the
//! mean and standard deviation of the number of edges.
//!
//! Ignoring auxiliary variables, each of the M = P(P-1)/2 edges is included
//! with probability Φ(ζ), so the edge count is Binomial(M, Φ(ζ)) given ζ. The
//! first two moments of Φ(ζ) under a Gaussian ζ are available in closed form
//! through Owen's T function, which turns elicitation into a two-equation root
//! finding problem in (n₀, t₀²).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_quantile};
use crate::types::n_pairs;

/// Prior guess on the number of edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePriorTarget {
    pub mean_edges: f64,
    pub sd_edges: f64,
    pub n_nodes: usize,
}

impl EdgePriorTarget {
    pub fn new(mean_edges: f64, sd_edges: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::Domain("at least two nodes are required".into()));
        }
        let m = n_pairs(n_nodes) as f64;
        if !(mean_edges > 0.0 && mean_edges < m) {
            return Err(Error::Domain(format!(
                "mean edge count {mean_edges} must lie in (0, {m})"
            )));
        }
        if !(sd_edges > 0.0) {
            return Err(Error::Domain("edge count sd must be positive".into()));
        }
        Ok(Self {
            mean_edges,
            sd_edges,
            n_nodes,
        })
    }

    /// Mean 1% and standard deviation 3% of all possible edges.
    pub fn default_for(n_nodes: usize) -> Self {
        let m = n_pairs(n_nodes.max(2)) as f64;
        Self {
            mean_edges: 0.01 * m,
            sd_edges: 0.03 * m,
            n_nodes: n_nodes.max(2),
        }
    }

    /// Smallest achievable sd: the binomial spread at the implied edge probability.
    pub fn binomial_floor(&self) -> f64 {
        let m = n_pairs(self.n_nodes) as f64;
        let p = self.mean_edges / m;
        (m * p * (1.0 - p)).sqrt()
    }
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for k in 0..7 {
        let dx = h * GK_NODES[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[k] * pair;
        if k % 2 == 1 {
            gauss += GAUSS_WEIGHTS[k / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let mid = 0.5 * (a + b);
    adaptive(f, a, mid, 0.5 * tol, depth - 1) + adaptive(f, mid, b, 0.5 * tol, depth - 1)
}

/// Owen's T function T(h, a) = φ(h) ∫₀^a φ(hx)/(1+x²) dx, by adaptive
/// Gauss–Kronrod quadrature of the defining integral.
pub fn owen_t(h: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let sign = a.signum();
    let a = a.abs();
    let h2 = h * h;
    let integrand = |x: f64| {
        let s = 1.0 + x * x;
        (-0.5 * h2 * s).exp() / s
    };
    sign * adaptive(&integrand, 0.0, a, 1e-14, 40) / (2.0 * std::f64::consts::PI)
}

/// Prior mean and standard deviation of the edge count for ζ ~ N(n₀, t₀²),
/// with M = P(P-1)/2 exchangeable edges and no auxiliary effects.
pub fn prior_edge_moments(n0: f64, t0_sq: f64, n_nodes: usize) -> Result<(f64, f64)> {
    if !(t0_sq > 0.0) {
        return Err(Error::Domain(format!("t0_sq must be positive, got {t0_sq}")));
    }
    if n_nodes < 2 {
        return Err(Error::Domain("at least two nodes are required".into()));
    }
    let m = n_pairs(n_nodes) as f64;
    // E{Φ(ζ)²} = P(X₁ ≤ ζ, X₂ ≤ ζ): a bivariate normal orthant with correlation
    // ρ = t₀²/(1+t₀²), so √{(1-ρ)/(1+ρ)} = 1/√(1+2t₀²).
    let h = n0 / (1.0 + t0_sq).sqrt();
    let p1 = norm_cdf(h);
    let p2 = p1 - 2.0 * owen_t(h, 1.0 / (1.0 + 2.0 * t0_sq).sqrt());
    let var = m * (p1 - p2) + m * m * (p2 - p1 * p1);
    Ok((m * p1, var.max(0.0).sqrt()))
}

fn residuals(target: &EdgePriorTarget, n0: f64, log_t0_sq: f64) -> [f64; 2] {
    let (mean, sd) = prior_edge_moments(n0, log_t0_sq.exp(), target.n_nodes)
        .expect("t0_sq = exp(.) is positive");
    [
        mean / target.mean_edges - 1.0,
        sd / target.sd_edges - 1.0,
    ]
}

fn norm2(r: &[f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

const SOLVE_TOL: f64 = 1e-11;

fn newton(target: &EdgePriorTarget) -> Option<(f64, f64)> {
    let m = n_pairs(target.n_nodes) as f64;
    let mut x = [norm_quantile(target.mean_edges / m) * 2f64.sqrt(), 0.0];
    let mut r = residuals(target, x[0], x[1]);
    for _ in 0..200 {
        if norm2(&r) < SOLVE_TOL {
            return Some((x[0], x[1].exp()));
        }
        let step = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut hi = x;
            let mut lo = x;
            hi[k] += step;
            lo[k] -= step;
            let rh = residuals(target, hi[0], hi[1]);
            let rl = residuals(target, lo[0], lo[1]);
            for row in 0..2 {
                jac[row][k] = (rh[row] - rl[row]) / (2.0 * step);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            return None;
        }
        let dx = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut damping = 1.0;
        loop {
            let trial = [x[0] + damping * dx[0], x[1] + damping * dx[1]];
            let rt = residuals(target, trial[0], trial[1]);
            if rt.iter().all(|v| v.is_finite()) && norm2(&rt) < norm2(&r) {
                x = trial;
                r = rt;
                break;
            }
            damping *= 0.5;
            if damping < 1e-10 {
                return None;
            }
        }
    }
    (norm2(&r) < SOLVE_TOL).then(|| (x[0], x[1].exp()))
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    // assumes f(lo) < 0 < f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Fallback: for each t₀² the mean equation is solved in n₀ by bisection, then
/// the sd equation is solved in log t₀² by an outer bisection.
fn nested_bisection(target: &EdgePriorTarget) -> Result<(f64, f64)> {
    let n0_for = |log_t: f64| {
        bisect(
            |n0| {
                let (mean, _) = prior_edge_moments(n0, log_t.exp(), target.n_nodes).unwrap();
                mean - target.mean_edges
            },
            -60.0,
            60.0,
        )
    };
    let sd_gap = |log_t: f64| {
        let n0 = n0_for(log_t);
        let (_, sd) = prior_edge_moments(n0, log_t.exp(), target.n_nodes).unwrap();
        sd - target.sd_edges
    };
    let (lo, hi) = (-30.0, 12.0);
    if sd_gap(lo) > 0.0 || sd_gap(hi) < 0.0 {
        return Err(Error::NoConvergence(
            "edge-count sd target not bracketed".into(),
        ));
    }
    let log_t = bisect(sd_gap, lo, hi);
    Ok((n0_for(log_t), log_t.exp()))
}

/// Solves for (n₀, t₀²) reproducing the target edge-count mean and sd.
pub fn elicit_hyperparams(target: &EdgePriorTarget) -> Result<(f64, f64)> {
    let floor = target.binomial_floor();
    if target.sd_edges <= floor * (1.0 + 1e-9) {
        return Err(Error::InfeasibleTarget {
            sd: target.sd_edges,
            floor,
        });
    }
    if let Some(solution) = newton(target) {
        return Ok(solution);
    }
    nested_bisection(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Composite Simpson rule on the defining integral, independent of the
    /// adaptive quadrature.
    fn owen_t_simpson(h: f64, a: f64) -> f64 {
        let n = 20_000;
        let step = a / n as f64;
        let f = |x: f64| (-0.5 * h * h * (1.0 + x * x)).exp() / (1.0 + x * x);
        let mut acc = f(0.0) + f(a);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * step);
        }
        acc * step / 3.0 / (2.0 * std::f64::consts::PI)
    }

    #[test]
    fn owen_t_examples() {
        assert_eq!(owen_t(1.5, 0.0), 0.0);
        assert_abs_diff_eq!(owen_t(0.0, 1.0), 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(owen_t(0.3, 0.7), owen_t_simpson(0.3, 0.7), epsilon = 1e-9);
    }

    #[test]
    fn owen_t_identities() {
        for &h in &[-2.5, -0.4, 0.0, 0.9, 3.1] {
            for &a in &[0.05, 0.5, 1.0, 2.7, 15.0] {
                assert_abs_diff_eq!(owen_t(h, -a), -owen_t(h, a), epsilon = 1e-12);
                assert_abs_diff_eq!(owen_t(-h, a), owen_t(h, a), epsilon = 1e-12);
            }
            let p = norm_cdf(h);
            assert_abs_diff_eq!(owen_t(h, 1.0), 0.5 * p * (1.0 - p), epsilon = 1e-10);
        }
        for &a in &[0.1, 1.0, 4.0] {
            assert_abs_diff_eq!(
                owen_t(0.0, a),
                a.atan() / (2.0 * std::f64::consts::PI),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn degenerate_zeta_gives_binomial_mean() {
        let (mean, sd) = prior_edge_moments(0.0, 1e-12, 3).unwrap();
        assert_abs_diff_eq!(mean, 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sd, (3.0f64 * 0.25).sqrt(), epsilon = 1e-5);
    }

    #[test]
    fn forward_map_rejects_non_positive_variance() {
        assert!(matches!(
            prior_edge_moments(0.0, 0.0, 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mean_increases_with_n0() {
        let mut last = 0.0;
        for k in -40..=10 {
            let (mean, _) = prior_edge_moments(k as f64 * 0.1, 0.5, 50).unwrap();
            assert!(mean > last);
            last = mean;
        }
    }

    #[test]
    fn infeasible_sd_is_reported_with_floor() {
        let t = EdgePriorTarget::new(150.0, 5.0, 100).unwrap();
        match elicit_hyperparams(&t) {
            Err(Error::InfeasibleTarget { floor, .. }) => assert!(floor > 12.0 && floor < 12.2),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn fallback_agrees_with_newton() {
        let t = EdgePriorTarget::new(50.0, 150.0, 100).unwrap();
        let (a0, a1) = newton(&t).unwrap();
        let (b0, b1) = nested_bisection(&t).unwrap();
        assert_abs_diff_eq!(a0, b0, epsilon = 1e-6);
        assert_abs_diff_eq!(a1, b1, epsilon = 1e-6);
    }
}
