use super::{ensure_finite, EULER_GAMMA};
use crate::error::{Error, Result};

/// Exponential integral E1(x) for x > 0.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    check_positive(x)?;
    Ok(if x <= 1.0 {
        e1_series(x)
    } else {
        (-x).exp() * scaled_cf(x)
    })
}

/// Fused e^x E1(x) for x > 0. Never overflows: for x > 1 the continued
/// fraction yields the product directly.
pub fn exp_scaled_e1(x: f64) -> Result<f64> {
    check_positive(x)?;
    Ok(exp_scaled_e1_unchecked(x))
}

#[inline]
pub(crate) fn exp_scaled_e1_unchecked(x: f64) -> f64 {
    if x <= 1.0 {
        x.exp() * e1_series(x)
    } else {
        scaled_cf(x)
    }
}

fn check_positive(x: f64) -> Result<()> {
    ensure_finite("exp_integral_e1", x)?;
    if x <= 0.0 {
        return Err(Error::Domain(format!(
            "exp_integral_e1: argument {x} must be positive"
        )));
    }
    Ok(())
}

// E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
fn e1_series(x: f64) -> f64 {
    let mut fact_term = 1.0; // (-1)^{k+1} x^k / k!
    let mut sum = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        fact_term *= if k == 1 { x } else { -x / kf };
        let term = fact_term / kf;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

// e^x E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...))), modified Lentz.
fn scaled_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}
