//! Quantiles of the Beta distribution.
//!
//! The regularized incomplete beta `I_x(a, b)` comes from `statrs`; the
//! inversion is a Newton iteration kept inside a shrinking bisection bracket,
//! so every iterate stays in `(0, 1)` and the method cannot diverge.

use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

const MAX_ITERS: usize = 200;
const STEP_TOL: f64 = 1e-14;

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    }
}

fn ln_pdf(a: f64, b: f64, ln_norm: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_norm
}

/// Returns `x` with `I_x(a, b) = p`, accurate to about `1e-13` in `x`.
pub fn beta_quantile(a: f64, b: f64, p: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta parameters must be positive and finite, got ({a}, {b})"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }

    let ln_norm = ln_beta(a, b);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = (a / (a + b)).clamp(1e-6, 1.0 - 1e-6);

    for _ in 0..MAX_ITERS {
        let f = beta_cdf(a, b, x) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ln_pdf(a, b, ln_norm, x).exp();
        let newton = x - f / density;
        let next = if density > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() < STEP_TOL || hi - lo < STEP_TOL {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}
