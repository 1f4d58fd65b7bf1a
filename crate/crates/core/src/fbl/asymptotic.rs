//! High-SNR behaviour: `eps ~ K(M, L) (G_a gbar)^-M`, the power-law model
//! `K(M, L) ~ A L^-k` and the resulting reliability delay threshold.

use std::f64::consts::{LN_2, LOG2_E};

use serde::{Deserialize, Serialize};

use super::{effective_blocklength, normal_approx, FrameConfig, LinearizationParams};
use crate::channel::{check_gbar, SpectralChannel};
use crate::error::{Error, Result};
use crate::quadrature::Integrator;

// Q(9.3) < 1e-20; the penalty integrand is dropped beyond that argument.
const PENALTY_Q_CUTOFF: f64 = 9.3;
const FIT_POINTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticBler {
    pub diversity_order: usize,
    pub array_gain: f64,
    pub coding_penalty: f64,
}

impl AsymptoticBler {
    /// `K (G_a gbar)^-M`.
    pub fn at(&self, gbar: f64) -> f64 {
        self.coding_penalty * (self.array_gain * gbar).powi(-(self.diversity_order as i32))
    }
}

/// Coding penalty `K(M, L) = int_0^inf eps(x) M x^(M-1) dx`.
pub fn coding_penalty(m: usize, l: f64, payload_bits: u32) -> Result<f64> {
    if m < 1 {
        return Err(Error::Domain("coding penalty needs m >= 1".into()));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Domain(format!(
            "coding penalty needs L > 0, got {l}"
        )));
    }
    let d = payload_bits as f64;
    let lin = LinearizationParams::from_blocklength(d, l)?;
    // V <= (log2 e)^2 bounds the Q argument from below
    let upper = ((d / l + PENALTY_Q_CUTOFF * LOG2_E / l.sqrt()) * LN_2).exp_m1();
    let mf = m as f64;
    let value = Integrator::new(1e-300, 1e-10)
        .integrate(
            |x| normal_approx(x, d, l) * mf * x.powi(m as i32 - 1),
            &[0.0, lin.theta, upper],
        )?
        .value;
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Numerical(format!(
            "coding penalty K({m}, {l}) evaluated to {value}"
        )));
    }
    Ok(value)
}

/// Diversity order, array gain and coding penalty, with the asymptote at `gbar`.
pub fn asymptotic_bler(
    ch: &SpectralChannel,
    gbar: f64,
    frame: &FrameConfig,
    n: usize,
) -> Result<(AsymptoticBler, f64)> {
    check_gbar(gbar)?;
    let l = effective_blocklength(frame, n)?;
    let asym = AsymptoticBler {
        diversity_order: ch.rank(),
        array_gain: ch.array_gain(),
        coding_penalty: coding_penalty(ch.rank(), l, frame.payload_bits)?,
    };
    Ok((asym, asym.at(gbar)))
}

/// Least-squares fit of `log K = log A - k log L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub k: f64,
    pub amplitude: f64,
    pub r_squared: f64,
}

/// Sensitivity exponent over 12 geometric blocklengths in `[l_min, l_tot]`.
pub fn sensitivity_exponent(m: usize, frame: &FrameConfig) -> Result<PowerLawFit> {
    sensitivity_exponent_over(
        m,
        frame.payload_bits,
        frame.l_min as f64,
        frame.l_tot as f64,
        FIT_POINTS,
    )
}

/// Sensitivity exponent over `points` geometric blocklengths in `[l_lo, l_hi]`.
pub fn sensitivity_exponent_over(
    m: usize,
    payload_bits: u32,
    l_lo: f64,
    l_hi: f64,
    points: usize,
) -> Result<PowerLawFit> {
    if !(l_lo > 0.0 && l_hi > l_lo) || points < 3 {
        return Err(Error::Domain(format!(
            "fit needs 0 < l_lo < l_hi and >= 3 points, got [{l_lo}, {l_hi}] x {points}"
        )));
    }
    let ratio = l_hi / l_lo;
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        let l = l_lo * ratio.powf(i as f64 / (points - 1) as f64);
        xs.push(l.ln());
        ys.push(coding_penalty(m, l, payload_bits)?.ln());
    }
    let np = points as f64;
    let mx = xs.iter().sum::<f64>() / np;
    let my = ys.iter().sum::<f64>() / np;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let k = -slope;
    if !(k > 0.0) {
        return Err(Error::ModelFit(format!(
            "fitted sensitivity exponent k = {k} is not positive (M = {m}, L in [{l_lo}, {l_hi}])"
        )));
    }
    Ok(PowerLawFit {
        k,
        amplitude: intercept.exp(),
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityThreshold {
    /// Largest per-port delay at which the FAS asymptote does not exceed the
    /// single-antenna one; 0 when FAS never wins.
    pub tau_eq: f64,
    /// Set when the raw threshold was negative and clamped to 0.
    pub clamped: bool,
    /// Gain ratio `K(1) G_a^M gbar^(M-1) / (K(M) sigma2)` at the full budget.
    pub gain_ratio: f64,
    pub fit: PowerLawFit,
}

/// Reliability delay threshold under the power-law penalty model.
///
/// With `K(M, L(N)) = K(M, L_tot) (1 - N tau / L_tot)^-k`, the FAS asymptote
/// is below the single-antenna one `K(1, L_tot) / (sigma2 gbar)` iff
/// `(1 - N tau / L_tot)^-k <= R`, i.e. `tau <= (L_tot / N) (1 - R^(-1/k))`.
pub fn tau_threshold_reliability(
    ch: &SpectralChannel,
    gbar: f64,
    frame: &FrameConfig,
    n: usize,
) -> Result<ReliabilityThreshold> {
    check_gbar(gbar)?;
    if n < 1 {
        return Err(Error::Domain("port count must be at least 1".into()));
    }
    let m = ch.rank();
    let fit = sensitivity_exponent(m, frame)?;
    let gain_ratio = gain_ratio(ch, gbar, frame)?;
    let raw = frame.l_tot as f64 / n as f64 * (1.0 - gain_ratio.powf(-1.0 / fit.k));
    Ok(ReliabilityThreshold {
        tau_eq: raw.max(0.0),
        clamped: raw < 0.0,
        gain_ratio,
        fit,
    })
}

fn gain_ratio(ch: &SpectralChannel, gbar: f64, frame: &FrameConfig) -> Result<f64> {
    let m = ch.rank();
    let l_tot = frame.l_tot as f64;
    let k1 = coding_penalty(1, l_tot, frame.payload_bits)?;
    let km = coding_penalty(m, l_tot, frame.payload_bits)?;
    // in logs: G_a^M gbar^(M-1) overflows quickly
    let log_r = k1.ln() - km.ln() + m as f64 * ch.array_gain().ln() + (m as f64 - 1.0) * gbar.ln()
        - ch.port_power().ln();
    Ok(log_r.exp())
}

/// FAS and single-antenna asymptotes at delay `tau` under the power-law
/// penalty model with exponent `k`.
pub fn power_law_asymptotes(
    ch: &SpectralChannel,
    gbar: f64,
    frame: &FrameConfig,
    n: usize,
    tau: f64,
    k: f64,
) -> Result<(f64, f64)> {
    check_gbar(gbar)?;
    let m = ch.rank();
    let l_tot = frame.l_tot as f64;
    let shrink = 1.0 - n as f64 * tau / l_tot;
    if !(shrink > 0.0) {
        return Err(Error::InfeasiblePortCount {
            n,
            blocklength: l_tot * shrink,
            l_min: frame.l_min,
        });
    }
    let km = coding_penalty(m, l_tot, frame.payload_bits)?;
    let k1 = coding_penalty(1, l_tot, frame.payload_bits)?;
    let fas = km * shrink.powf(-k) * (ch.array_gain() * gbar).powi(-(m as i32));
    let fpa = k1 / (ch.port_power() * gbar);
    Ok((fas, fpa))
}
