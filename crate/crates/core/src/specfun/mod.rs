//! Scalar special functions used throughout the crate.
//!
//! Everything here is pure `f64` code with no lookup tables: power series,
//! asymptotic expansions and continued fractions, each used in the range
//! where it converges to machine precision.

mod bessel;
pub(crate) mod expint;
pub(crate) mod normal;
mod sum;

pub use bessel::bessel_j0;
pub use expint::{exp_integral_e1, exp_scaled_e1};
pub use normal::{erfc, gaussian_q, gaussian_q_inv, normal_pdf};
pub use sum::{compensated_sum, NeumaierSum};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Absolute/relative tolerance pair for iterative and adaptive routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl AccuracySpec {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be positive (abs {abs_tol}, rel {rel_tol})"
            )));
        }
        Ok(Self { abs_tol, rel_tol })
    }

    /// Acceptance threshold for an estimate of magnitude `value`.
    pub fn bound(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}: non-finite argument {x}")))
    }
}
