//! Finite-blocklength error probability: the normal approximation, its
//! linearized average over the best-port SNR, high-SNR asymptotics and the
//! reliability delay threshold.

mod asymptotic;
mod closed_form;
mod integral;

pub use asymptotic::{
    asymptotic_bler, coding_penalty, power_law_asymptotes, sensitivity_exponent,
    sensitivity_exponent_over, tau_threshold_reliability, AsymptoticBler, PowerLawFit,
    ReliabilityThreshold,
};
pub use closed_form::{
    avg_bler_closed_form, avg_bler_closed_form_direct, closed_form_report, ClosedFormReport,
};
pub use integral::avg_bler_quadrature;

use std::f64::consts::{LN_2, LOG2_E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::normal::q_unchecked;

/// Latency budget and payload of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Total budget in channel uses.
    pub l_tot: u32,
    /// Per-port scanning overhead in channel uses.
    pub tau: f64,
    /// Payload D in bits.
    pub payload_bits: u32,
    /// Shortest admissible coding blocklength.
    pub l_min: u32,
}

impl FrameConfig {
    pub fn new(l_tot: u32, tau: f64, payload_bits: u32) -> Result<Self> {
        let frame = Self {
            l_tot,
            tau,
            payload_bits,
            l_min: 50,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn with_l_min(mut self, l_min: u32) -> Result<Self> {
        self.l_min = l_min;
        self.validate().map(|_| self)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate().map(|_| self)
    }

    pub fn with_l_tot(mut self, l_tot: u32) -> Result<Self> {
        self.l_tot = l_tot;
        self.validate().map(|_| self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_min < 1 || self.l_tot <= self.l_min {
            return Err(Error::InvalidConfig(format!(
                "need l_tot > l_min >= 1, got l_tot={} l_min={}",
                self.l_tot, self.l_min
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if self.payload_bits < 1 {
            return Err(Error::InvalidConfig(
                "payload_bits must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Blocklength left for coding after scanning `n` ports.
    pub fn blocklength(&self, n: usize) -> Result<f64> {
        effective_blocklength(self, n)
    }
}

/// `L(n) = l_tot - n tau`; an error when it falls below `l_min`.
pub fn effective_blocklength(frame: &FrameConfig, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain("port count must be at least 1".into()));
    }
    let l = frame.l_tot as f64 - n as f64 * frame.tau;
    if l < frame.l_min as f64 {
        return Err(Error::InfeasiblePortCount {
            n,
            blocklength: l,
            l_min: frame.l_min,
        });
    }
    Ok(l)
}

/// Shannon capacity `log2(1 + gamma)`.
#[inline]
pub fn capacity(gamma: f64) -> f64 {
    gamma.ln_1p() * LOG2_E
}

/// Channel dispersion `(1 - (1 + gamma)^-2) (log2 e)^2`.
#[inline]
pub fn dispersion(gamma: f64) -> f64 {
    -(-2.0 * gamma.ln_1p()).exp_m1() * LOG2_E * LOG2_E
}

/// Normal-approximation error probability for `payload_bits` over `l`
/// channel uses at SNR `gamma`.
#[inline]
pub(crate) fn normal_approx(gamma: f64, payload_bits: f64, l: f64) -> f64 {
    let v = dispersion(gamma);
    if v <= 0.0 {
        return 1.0;
    }
    q_unchecked((capacity(gamma) - payload_bits / l) * (l / v).sqrt())
}

/// Instantaneous BLER at SNR `gamma` with `n` ports scanned.
pub fn instantaneous_bler(gamma: f64, frame: &FrameConfig, n: usize) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "SNR {gamma} must be finite and nonnegative"
        )));
    }
    let l = effective_blocklength(frame, n)?;
    Ok(normal_approx(gamma, frame.payload_bits as f64, l))
}

/// Parameters of the piecewise-linear surrogate for the Q-function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationParams {
    pub theta: f64,
    pub beta: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
}

impl LinearizationParams {
    /// Parameters for `payload_bits` over blocklength `l`.
    pub fn from_blocklength(payload_bits: f64, l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite() && payload_bits > 0.0) {
            return Err(Error::Domain(format!(
                "linearization needs positive payload and blocklength, got D={payload_bits} L={l}"
            )));
        }
        let r = payload_bits / l;
        let theta = (r * LN_2).exp_m1();
        let beta = (l / (2.0 * PI * (2.0 * r * LN_2).exp_m1())).sqrt();
        if !(theta.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Numerical(format!(
                "linearization overflow at D/L = {r}"
            )));
        }
        let half = 0.5 / beta;
        Ok(Self {
            theta,
            beta,
            delta_lo: theta - half,
            delta_hi: theta + half,
        })
    }

    /// Lower breakpoint clamped to the SNR support.
    pub fn lower(&self) -> f64 {
        self.delta_lo.max(0.0)
    }

    /// The linearized error curve: 1 below `delta_lo`, 0 above `delta_hi`.
    pub fn eval(&self, gamma: f64) -> f64 {
        if gamma <= self.delta_lo {
            1.0
        } else if gamma >= self.delta_hi {
            0.0
        } else {
            0.5 - self.beta * (gamma - self.theta)
        }
    }
}

pub fn linearization(frame: &FrameConfig, n: usize) -> Result<LinearizationParams> {
    let l = effective_blocklength(frame, n)?;
    LinearizationParams::from_blocklength(frame.payload_bits as f64, l)
}

/// `log10` of a probability; `-inf` for an exact zero.
pub fn log10_bler(p: f64) -> f64 {
    p.log10()
}
