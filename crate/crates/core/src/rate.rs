//! Average achievable rate under finite blocklength, its high-SNR form and
//! the rate-based delay threshold.
//!
//! The rate splits into the ergodic capacity of the best-port SNR,
//! `(1/ln 2) sum_s sign_s e^{eta_s} E1(eta_s)` with `eta_s = xi_s / gbar`,
//! minus the penalty `chi / sqrt(L(N))`, `chi = Q^-1(eps) log2 e`, which uses
//! the high-SNR dispersion `(log2 e)^2`.

use std::f64::consts::{LN_2, LOG2_E};

use serde::{Deserialize, Serialize};

use crate::channel::{check_gbar, product_pdf, SpectralChannel};
use crate::error::{Error, Result};
use crate::fbl::{avg_bler_closed_form, effective_blocklength, FrameConfig};
use crate::quadrature::Integrator;
use crate::specfun::expint::exp_scaled_e1_unchecked;
use crate::specfun::{gaussian_q_inv, NeumaierSum, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Target error probability inside the penalty term.
    pub target_eps: f64,
    pub frame: FrameConfig,
    pub gbar: f64,
}

impl RateConfig {
    pub fn new(frame: FrameConfig, gbar: f64) -> Result<Self> {
        let cfg = Self {
            target_eps: 1e-5,
            frame,
            gbar,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_target_eps(mut self, eps: f64) -> Result<Self> {
        self.target_eps = eps;
        self.validate().map(|_| self)
    }

    pub fn with_gbar(mut self, gbar: f64) -> Result<Self> {
        self.gbar = gbar;
        self.validate().map(|_| self)
    }

    pub fn with_frame(mut self, frame: FrameConfig) -> Result<Self> {
        self.frame = frame;
        self.validate().map(|_| self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_eps > 0.0 && self.target_eps < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "target_eps must lie in (0, 0.5), got {}",
                self.target_eps
            )));
        }
        if !(self.gbar > 0.0 && self.gbar.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gbar must be positive, got {}",
                self.gbar
            )));
        }
        self.frame.validate()
    }

    /// `chi = Q^-1(eps) log2 e`.
    pub fn chi(&self) -> f64 {
        gaussian_q_inv(self.target_eps).expect("validated target_eps") * LOG2_E
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub shannon_term: f64,
    pub penalty_term: f64,
    pub total: f64,
}

/// Ergodic capacity of the best-port SNR in bits per channel use.
pub fn ergodic_capacity(ch: &SpectralChannel, gbar: f64) -> Result<f64> {
    check_gbar(gbar)?;
    let mut acc = NeumaierSum::new();
    for s in ch.subsets() {
        acc.add(s.sign * exp_scaled_e1_unchecked(s.xi / gbar));
    }
    Ok(acc.value() / LN_2)
}

/// `int log2(1 + x) f(x) dx` by adaptive quadrature; a numerical baseline.
pub fn ergodic_capacity_quadrature(ch: &SpectralChannel, gbar: f64) -> Result<f64> {
    check_gbar(gbar)?;
    let eigs = ch.eigenvalues();
    let tail = gbar * eigs[0] * (eigs.len() as f64 * 1e18).ln();
    let mut points = vec![0.0];
    for l in eigs.iter().rev() {
        let p = gbar * l;
        if p < tail && p > *points.last().unwrap() {
            points.push(p);
        }
    }
    points.push(tail);
    let r = Integrator::new(1e-300, 1e-12)
        .integrate(|x| x.ln_1p() * LOG2_E * product_pdf(eigs, gbar, x), &points)?;
    Ok(r.value)
}

/// Finite-blocklength penalty `chi / sqrt(L(n))`.
pub fn rate_penalty(cfg: &RateConfig, n: usize) -> Result<f64> {
    cfg.validate()?;
    let l = effective_blocklength(&cfg.frame, n)?;
    Ok(cfg.chi() / l.sqrt())
}

/// Average achievable rate with `n` ports scanned.
pub fn avg_rate(ch: &SpectralChannel, cfg: &RateConfig, n: usize) -> Result<RateBreakdown> {
    let penalty_term = rate_penalty(cfg, n)?;
    let shannon_term = ergodic_capacity(ch, cfg.gbar)?;
    Ok(RateBreakdown {
        shannon_term,
        penalty_term,
        total: shannon_term - penalty_term,
    })
}

/// Rate times the probability of correct decoding under the closed-form
/// BLER. Diagnostic only.
pub fn effective_throughput(ch: &SpectralChannel, cfg: &RateConfig, n: usize) -> Result<f64> {
    let r = avg_rate(ch, cfg, n)?;
    let eps = avg_bler_closed_form(ch, cfg.gbar, &cfg.frame, n)?;
    Ok(r.total * (1.0 - eps))
}

/// Diversity offset
/// `S_div = -gamma_EM / ln 2 - (1 / ln 2) sum_s sign_s ln xi_s`.
///
/// Raw convention: a single unit-power mode gives `-gamma_EM / ln 2`.
pub fn diversity_offset(ch: &SpectralChannel) -> f64 {
    let mut acc = NeumaierSum::new();
    for s in ch.subsets() {
        acc.add(s.sign * s.xi.ln());
    }
    -(EULER_GAMMA + acc.value()) / LN_2
}

/// Diversity offset of a single port with the channel's per-port power.
pub fn single_port_offset(ch: &SpectralChannel) -> f64 {
    (-EULER_GAMMA + ch.port_power().ln()) / LN_2
}

/// `(S_div, log2 gbar + S_div - chi / sqrt(L(n)))`.
pub fn asymptotic_rate(ch: &SpectralChannel, cfg: &RateConfig, n: usize) -> Result<(f64, f64)> {
    let penalty = rate_penalty(cfg, n)?;
    let s_div = diversity_offset(ch);
    Ok((s_div, cfg.gbar.log2() + s_div - penalty))
}

/// High-SNR FAS and single-antenna rates at delay `tau`; only
/// `n tau < L_tot` is required.
pub fn rate_asymptotes(
    ch: &SpectralChannel,
    cfg: &RateConfig,
    n: usize,
    tau: f64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let l_tot = cfg.frame.l_tot as f64;
    let l = l_tot - n as f64 * tau;
    if !(l > 0.0) {
        return Err(Error::InfeasiblePortCount {
            n,
            blocklength: l,
            l_min: cfg.frame.l_min,
        });
    }
    let chi = cfg.chi();
    let log_g = cfg.gbar.log2();
    let fas = log_g + diversity_offset(ch) - chi / l.sqrt();
    let fpa = log_g + single_port_offset(ch) - chi / l_tot.sqrt();
    Ok((fas, fpa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateThreshold {
    pub tau_eq: f64,
    /// `S_div(N) - S_div(1)`.
    pub delta_s: f64,
    /// Set when `delta_s <= 0`, so FAS never beats the single antenna.
    pub no_gain: bool,
}

/// Largest per-port delay at which the high-SNR FAS rate is at least the
/// single-antenna rate: `(L_tot / N) (1 - (1 + dS sqrt(L_tot) / chi)^-2)`.
pub fn tau_threshold_rate(
    ch: &SpectralChannel,
    cfg: &RateConfig,
    n: usize,
) -> Result<RateThreshold> {
    cfg.validate()?;
    if n < 1 {
        return Err(Error::Domain("port count must be at least 1".into()));
    }
    let delta_s = diversity_offset(ch) - single_port_offset(ch);
    if !(delta_s > 0.0) {
        return Ok(RateThreshold {
            tau_eq: 0.0,
            delta_s,
            no_gain: true,
        });
    }
    let l_tot = cfg.frame.l_tot as f64;
    let psi = 1.0 + delta_s * l_tot.sqrt() / cfg.chi();
    Ok(RateThreshold {
        tau_eq: l_tot / n as f64 * (1.0 - psi.powi(-2)),
        delta_s,
        no_gain: false,
    })
}
