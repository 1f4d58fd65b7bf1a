use std::f64::consts::{FRAC_PI_4, PI};

use super::ensure_finite;
use crate::error::Result;

// Below this the power series keeps ~12 correct digits; above it the Hankel
// expansion's optimally truncated error is under 1e-10.
const SERIES_LIMIT: f64 = 12.0;

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> Result<f64> {
    ensure_finite("bessel_j0", x)?;
    let ax = x.abs();
    Ok(if ax <= SERIES_LIMIT {
        j0_series(ax)
    } else {
        j0_hankel(ax)
    })
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-3) {
            break;
        }
    }
    sum
}

fn j0_hankel(x: f64) -> f64 {
    // a_k = a_{k-1} * (-(2k-1)^2) / (8k); even k feed P, odd k feed Q.
    let mut a = 1.0;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut xpow = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        a *= -(odd * odd) / (8.0 * kf);
        xpow *= x;
        let term = a / xpow;
        if term.abs() >= last {
            break;
        }
        last = term.abs();
        // (-1)^(k/2) for even k, (-1)^((k-1)/2) for odd k
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if last < 1e-17 {
            break;
        }
    }
    let w = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * w.cos() - q * w.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_values() {
        assert_eq!(bessel_j0(0.0).unwrap(), 1.0);
        assert!((bessel_j0(1.0).unwrap() - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!(bessel_j0(2.404_825_557_695_773).unwrap().abs() < 1e-7);
        assert!(bessel_j0(f64::NAN).is_err());
        assert!(bessel_j0(f64::INFINITY).is_err());
    }

    #[test]
    fn continuous_across_branch() {
        let below = bessel_j0(SERIES_LIMIT - 1e-9).unwrap();
        let above = bessel_j0(SERIES_LIMIT + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn even_and_bounded() {
        for i in 0..2000 {
            let x = i as f64 * 0.37;
            let v = bessel_j0(x).unwrap();
            assert_eq!(v, bessel_j0(-x).unwrap());
            assert!(v.abs() <= 1.0);
        }
    }
}
