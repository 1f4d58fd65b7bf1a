//! Seeded brute-force sampling of the best-port SNR, used as an oracle for
//! the closed forms.

use std::f64::consts::{LOG2_E, TAU};
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    build_covariance, check_gbar, spectral_decompose, CorrelationSpec, PhysicalChannel,
    SpectralChannel,
};
use crate::error::{Error, Result};
use crate::fbl::{
    avg_bler_closed_form, avg_bler_quadrature, capacity, dispersion, effective_blocklength,
    normal_approx, FrameConfig,
};
use crate::rate::RateConfig;

pub const MIN_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Independent modes scaled by the retained eigenvalues.
    Spectral,
    /// Correlated ports `h = U Lambda^(1/2) z` over all N ports.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub mode: SamplingMode,
}

impl McConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_samples: 1_000_000,
            mode: SamplingMode::Spectral,
        }
    }

    pub fn with_samples(mut self, n_samples: usize) -> Result<Self> {
        self.n_samples = n_samples;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    /// Seed for grid point `index`.
    pub fn for_point(&self, index: usize) -> Self {
        Self {
            seed: self.seed ^ index as u64,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::InvalidConfig(format!(
                "n_samples = {} is below the minimum {MIN_SAMPLES}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_samples)`.
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Distance to `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Welford accumulator.
#[derive(Debug, Clone, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn estimate(&self) -> McEstimate {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            n_samples: self.n,
        }
    }
}

/// Channel form handed to the sampler.
#[derive(Debug, Clone, Copy)]
pub enum ChannelRef<'a> {
    Spectral(&'a SpectralChannel),
    Physical(&'a PhysicalChannel),
}

impl<'a> From<&'a SpectralChannel> for ChannelRef<'a> {
    fn from(ch: &'a SpectralChannel) -> Self {
        ChannelRef::Spectral(ch)
    }
}

impl<'a> From<&'a PhysicalChannel> for ChannelRef<'a> {
    fn from(ch: &'a PhysicalChannel) -> Self {
        ChannelRef::Physical(ch)
    }
}

enum Kernel<'a> {
    Spectral {
        scale: Vec<f64>,
    },
    Physical {
        root: Vec<f64>,
        u: &'a nalgebra::DMatrix<f64>,
        re: Vec<f64>,
        im: Vec<f64>,
    },
}

/// Deterministic stream of SNR draws.
pub struct SnrSampler<'a> {
    rng: ChaCha8Rng,
    gbar: f64,
    remaining: usize,
    kernel: Kernel<'a>,
}

/// Uniform on (0, 1].
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Complex Gaussian with unit variance: Box-Muller, 1/2 per component.
fn complex_normal(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let r = (-uniform(rng).ln()).sqrt();
    let phi = TAU * uniform(rng);
    (r * phi.cos(), r * phi.sin())
}

impl SnrSampler<'_> {
    fn draw(&mut self) -> f64 {
        let rng = &mut self.rng;
        let mut best = 0.0f64;
        match &mut self.kernel {
            Kernel::Spectral { scale } => {
                for s in scale.iter() {
                    let (a, b) = complex_normal(rng);
                    best = best.max(s * (a * a + b * b));
                }
            }
            Kernel::Physical { root, u, re, im } => {
                let n = root.len();
                for k in 0..n {
                    let (a, b) = complex_normal(rng);
                    re[k] = root[k] * a;
                    im[k] = root[k] * b;
                }
                for p in 0..n {
                    let (mut hr, mut hi) = (0.0, 0.0);
                    for k in 0..n {
                        let w = u[(p, k)];
                        hr += w * re[k];
                        hi += w * im[k];
                    }
                    best = best.max(hr * hr + hi * hi);
                }
            }
        }
        self.gbar * best
    }
}

impl Iterator for SnrSampler<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.draw())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Stream of `mc.n_samples` draws of the best-port SNR.
pub fn sample_snr<'a>(
    ch: impl Into<ChannelRef<'a>>,
    gbar: f64,
    mc: &McConfig,
) -> Result<SnrSampler<'a>> {
    check_gbar(gbar)?;
    if mc.n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be positive".into()));
    }
    let kernel = match (ch.into(), mc.mode) {
        (ChannelRef::Spectral(ch), SamplingMode::Spectral) => Kernel::Spectral {
            scale: ch.eigenvalues().to_vec(),
        },
        (ChannelRef::Physical(ch), SamplingMode::Physical) => {
            let u = ch.eigenvectors.as_ref().ok_or_else(|| {
                Error::Usage("physical sampling needs the eigenvectors of the covariance".into())
            })?;
            let n = ch.eigenvalues.len();
            Kernel::Physical {
                root: ch.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect(),
                u,
                re: vec![0.0; n],
                im: vec![0.0; n],
            }
        }
        (_, mode) => {
            return Err(Error::Usage(format!(
                "sampling mode {mode:?} does not match the channel form supplied"
            )))
        }
    };
    Ok(SnrSampler {
        rng: ChaCha8Rng::seed_from_u64(mc.seed),
        gbar,
        remaining: mc.n_samples,
        kernel,
    })
}

/// Empirical average of the instantaneous BLER (exact Q).
pub fn mc_avg_bler<'a>(
    ch: impl Into<ChannelRef<'a>>,
    gbar: f64,
    frame: &FrameConfig,
    n: usize,
    mc: &McConfig,
) -> Result<McEstimate> {
    let l = effective_blocklength(frame, n)?;
    let d = frame.payload_bits as f64;
    let mut acc = Moments::default();
    for g in sample_snr(ch, gbar, mc)? {
        acc.push(normal_approx(g, d, l));
    }
    Ok(acc.estimate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRateEstimate {
    /// Penalty with the exact dispersion `V(gamma)`.
    pub exact: McEstimate,
    /// Penalty with `V = (log2 e)^2`; the one the closed form targets.
    pub approx: McEstimate,
}

pub fn mc_avg_rate<'a>(
    ch: impl Into<ChannelRef<'a>>,
    gbar: f64,
    cfg: &RateConfig,
    n: usize,
    mc: &McConfig,
) -> Result<McRateEstimate> {
    cfg.validate()?;
    let l = effective_blocklength(&cfg.frame, n)?;
    let q = cfg.chi() / LOG2_E;
    let flat = q * LOG2_E / l.sqrt();
    let (mut exact, mut approx) = (Moments::default(), Moments::default());
    for g in sample_snr(ch, gbar, mc)? {
        let c = capacity(g);
        exact.push(c - (dispersion(g) / l).sqrt() * q);
        approx.push(c - flat);
    }
    Ok(McRateEstimate {
        exact: exact.estimate(),
        approx: approx.estimate(),
    })
}

/// Runs `f` over `len` grid points in parallel, each with seed `seed ^ i`.
pub fn par_grid<T, F>(mc: &McConfig, len: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &McConfig) -> Result<T> + Sync,
{
    (0..len)
        .into_par_iter()
        .map(|i| f(i, &mc.for_point(i)))
        .collect()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// KS distance between spectral-mode and physical-mode SNR samples drawn
/// with the same seed and count.
pub fn model_gap(spec: &CorrelationSpec, gbar: f64, mc: &McConfig) -> Result<f64> {
    let (spectral, physical) = spectral_decompose(&build_covariance(spec)?, spec)?;
    let mut a: Vec<f64> =
        sample_snr(&spectral, gbar, &mc.with_mode(SamplingMode::Spectral))?.collect();
    let mut b: Vec<f64> =
        sample_snr(&physical, gbar, &mc.with_mode(SamplingMode::Physical))?.collect();
    Ok(ks_two_sample(&mut a, &mut b))
}

/// One point of a benchmark grid.
#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub channel: SpectralChannel,
    pub gbar: f64,
    pub frame: FrameConfig,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Median wall-clock times for the whole grid.
    pub closed_form: Duration,
    pub quadrature: Duration,
    pub monte_carlo: Duration,
    pub repetitions: usize,
    /// Per point: closed form, exact-Q quadrature, Monte-Carlo mean.
    pub values: Vec<(f64, f64, f64)>,
}

impl BenchReport {
    pub fn speedup_vs_quadrature(&self) -> f64 {
        self.quadrature.as_secs_f64() / self.closed_form.as_secs_f64()
    }

    pub fn speedup_vs_monte_carlo(&self) -> f64 {
        self.monte_carlo.as_secs_f64() / self.closed_form.as_secs_f64()
    }
}

fn median(mut t: Vec<Duration>) -> Duration {
    t.sort();
    t[t.len() / 2]
}

/// Sequential timing of the three BLER evaluators over `grid`.
pub fn benchmark_speedup(
    grid: &[BenchPoint],
    repetitions: usize,
    mc: &McConfig,
) -> Result<BenchReport> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("benchmark grid is empty".into()));
    }
    let reps = repetitions.max(5);
    let mut times = [Vec::new(), Vec::new(), Vec::new()];
    let mut values: Option<Vec<(f64, f64, f64)>> = None;
    for _ in 0..reps {
        let mut row = Vec::with_capacity(grid.len());
        let t0 = Instant::now();
        let cf = grid
            .iter()
            .map(|p| avg_bler_closed_form(&p.channel, p.gbar, &p.frame, p.n))
            .collect::<Result<Vec<_>>>()?;
        times[0].push(t0.elapsed());
        let t1 = Instant::now();
        let qd = grid
            .iter()
            .map(|p| avg_bler_quadrature(&p.channel, p.gbar, &p.frame, p.n, true))
            .collect::<Result<Vec<_>>>()?;
        times[1].push(t1.elapsed());
        let t2 = Instant::now();
        let sim = grid
            .iter()
            .enumerate()
            .map(|(i, p)| {
                mc_avg_bler(&p.channel, p.gbar, &p.frame, p.n, &mc.for_point(i)).map(|e| e.mean)
            })
            .collect::<Result<Vec<_>>>()?;
        times[2].push(t2.elapsed());
        for i in 0..grid.len() {
            row.push((cf[i], qd[i], sim[i]));
        }
        match &values {
            None => values = Some(row),
            Some(v) if *v != row => {
                return Err(Error::Numerical(
                    "benchmark values changed between repetitions".into(),
                ))
            }
            _ => {}
        }
    }
    let [a, b, c] = times;
    Ok(BenchReport {
        closed_form: median(a),
        quadrature: median(b),
        monte_carlo: median(c),
        repetitions: reps,
        values: values.expect("at least one repetition"),
    })
}
