//! Scalar special functions for the probit and conjugate-exponential updates.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

pub use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::{digamma, ln_gamma};

/// log(sqrt(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 700.0;

pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn norm_pdf(x: f64) -> f64 {
    ln_norm_pdf(x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// log Φ(x), accurate in both tails.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x < -30.0 {
        // Asymptotic expansion of the Mills ratio.
        let t = 1.0 / (x * x);
        let series = 1.0 - t * (1.0 - t * (3.0 - t * (15.0 - 105.0 * t)));
        ln_norm_pdf(x) - (-x).ln() + series.ln()
    } else if x < 5.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    }
}

/// log{1 - Φ(x)}.
pub fn ln_norm_sf(x: f64) -> f64 {
    ln_norm_cdf(-x)
}

/// Inverse Mills ratio M(μ, 1) = φ(μ)/Φ(μ): mean shift of N(μ,1) truncated to (0, ∞).
pub fn mills_upper(mu: f64) -> f64 {
    (ln_norm_pdf(mu) - ln_norm_cdf(mu)).exp()
}

/// Inverse Mills ratio M(μ, 0) = -φ(μ)/{1-Φ(μ)}: mean shift of N(μ,1) truncated to (-∞, 0].
pub fn mills_lower(mu: f64) -> f64 {
    -(ln_norm_pdf(mu) - ln_norm_sf(mu)).exp()
}

pub fn norm_quantile(p: f64) -> f64 {
    let x = Normal::standard().inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    // one Newton step on Φ(x) = p
    x - (norm_cdf(x) - p) / norm_pdf(x)
}

/// 1 / (1 + exp(logit)) with the logit clamped.
pub fn inv_one_plus_exp(logit: f64) -> f64 {
    1.0 / (1.0 + logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp())
}

/// x log x with the convention 0 log 0 = 0.
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// log N(x; 0, var)
pub fn ln_normal_density(x: f64, var: f64) -> f64 {
    -0.5 * x * x / var - 0.5 * var.ln() - LN_SQRT_2PI
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_cdf_matches_direct_in_bulk() {
        for &x in &[-8.0, -3.0, -0.5, 0.0, 0.7, 2.5, 4.9] {
            assert_relative_eq!(ln_norm_cdf(x), norm_cdf(x).ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn ln_cdf_is_continuous_at_branch_points() {
        for &x in &[-30.0f64, 5.0] {
            let lo = ln_norm_cdf(x - 1e-9);
            let hi = ln_norm_cdf(x + 1e-9);
            assert!((lo - hi).abs() < 1e-6 * lo.abs().max(1e-12), "{x}: {lo} vs {hi}");
        }
    }

    #[test]
    fn ln_cdf_far_tail_stays_finite() {
        let v = ln_norm_cdf(-200.0);
        assert!(v.is_finite());
        // leading term -x²/2 - ln(-x) - ln√(2π)
        assert_relative_eq!(v, -20_000.0 - 200f64.ln() - LN_SQRT_2PI, max_relative = 1e-8);
        assert_eq!(ln_norm_cdf(60.0), 0.0);
    }

    #[test]
    fn mills_ratios_at_zero() {
        let r = (2.0 / std::f64::consts::PI).sqrt();
        assert_relative_eq!(mills_upper(0.0), r, epsilon = 1e-14);
        assert_relative_eq!(mills_lower(0.0), -r, epsilon = 1e-14);
        assert!(mills_upper(-100.0).is_finite());
        assert!(mills_lower(100.0).is_finite());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[0.01, 0.3, 0.5, 0.97] {
            assert_relative_eq!(norm_cdf(norm_quantile(p)), p, epsilon = 1e-12);
        }
    }
}
