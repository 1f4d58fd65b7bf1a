//! Numerical-integration baseline for the average BLER.

use std::f64::consts::LOG2_E;

use super::{linearization, normal_approx, FrameConfig};
use crate::channel::{check_gbar, product_pdf, SpectralChannel};
use crate::error::Result;
use crate::quadrature::Integrator;

// Q(38) is below 1e-300.
const Q_NEGLIGIBLE_ARG: f64 = 38.0;
// Tail mass of the SNR distribution left out of the integral.
const TAIL_MASS: f64 = 1e-14;

/// Average BLER by adaptive quadrature of `eps(x) f(x)`.
///
/// With `use_exact_q` the integrand uses the normal approximation itself,
/// otherwise its piecewise-linear surrogate.
pub fn avg_bler_quadrature(
    ch: &SpectralChannel,
    gbar: f64,
    frame: &FrameConfig,
    n: usize,
    use_exact_q: bool,
) -> Result<f64> {
    check_gbar(gbar)?;
    let l = frame.blocklength(n)?;
    let lin = linearization(frame, n)?;
    let d = frame.payload_bits as f64;
    let eigs = ch.eigenvalues();

    // beyond x_tail the SNR has probability mass below TAIL_MASS
    let lambda_max = eigs[0];
    let x_tail = gbar * lambda_max * (eigs.len() as f64 / TAIL_MASS).ln();
    let x_err = if use_exact_q {
        // V <= (log2 e)^2, so the Q argument exceeds the cutoff past this SNR
        ((d / l + Q_NEGLIGIBLE_ARG * LOG2_E / l.sqrt()) * std::f64::consts::LN_2).exp_m1()
    } else {
        lin.delta_hi
    };
    let upper = x_tail.min(x_err);

    let mut points = vec![0.0];
    for p in [lin.lower(), lin.theta, lin.delta_hi] {
        if p > 0.0 && p < upper {
            points.push(p);
        }
    }
    points.push(upper);
    points.dedup();

    let integrator = Integrator::new(1e-300, 1e-12);
    let value = if use_exact_q {
        integrator.integrate(
            |x| normal_approx(x, d, l) * product_pdf(eigs, gbar, x),
            &points,
        )?
    } else {
        integrator.integrate(|x| lin.eval(x) * product_pdf(eigs, gbar, x), &points)?
    }
    .value;
    Ok(value.clamp(0.0, 1.0))
}
