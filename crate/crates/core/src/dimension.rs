//! Port dimensioning: exhaustive search over the feasible port counts for
//! the best reliability, throughput or energy efficiency.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{spectral_channel, CorrelationSpec, SpectralChannel};
use crate::error::{Error, Result};
use crate::fbl::{avg_bler_closed_form, effective_blocklength, FrameConfig};
use crate::rate::{avg_rate, RateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub p_scan: f64,
    pub p_active: f64,
}

impl PowerModel {
    pub fn new(p_scan: f64, p_active: f64) -> Result<Self> {
        let pm = Self { p_scan, p_active };
        pm.validate()?;
        Ok(pm)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_scan", self.p_scan), ("p_active", self.p_active)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.p_scan * factor, self.p_active * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reliability,
    Throughput,
    Energy,
}

/// Which rate the throughput mode maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMetric {
    /// Average achievable rate per coded channel use.
    Average,
    /// Average rate scaled by the coding share `L(N) / L_tot` of the frame.
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

/// Knobs of the search beyond the problem data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub rate_metric: RateMetric,
    /// Subtract the finite-blocklength penalty (false gives the Shannon rate).
    pub with_penalty: bool,
    /// Upper bound on the scan; required when `tau = 0`.
    pub max_ports: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            rate_metric: RateMetric::Average,
            with_penalty: true,
            max_ports: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensioningResult {
    pub n_opt: usize,
    /// `(n, metric)` for every scanned n, ascending.
    pub metric_curve: Vec<(usize, f64)>,
    /// Whether each scanned n satisfies the reliability constraint.
    pub admissible: Vec<bool>,
    pub mode: Mode,
    pub unimodal: bool,
    /// Extremum index when unimodal, else the first violation index.
    pub unimodality_index: usize,
    pub feasible_max: usize,
}

/// `N_max = floor((L_tot - L_min) / tau)`.
pub fn feasible_port_range(frame: &FrameConfig) -> Result<usize> {
    frame.validate()?;
    if frame.tau == 0.0 {
        return Err(Error::InvalidConfig(
            "tau = 0 leaves the port count unbounded; set a maximum port count".into(),
        ));
    }
    let n_max = ((frame.l_tot - frame.l_min) as f64 / frame.tau).floor();
    if n_max < 1.0 {
        return Err(Error::NoFeasibleSolution(format!(
            "not even one port fits: (L_tot - L_min) / tau = {}",
            (frame.l_tot - frame.l_min) as f64 / frame.tau
        )));
    }
    Ok(n_max as usize)
}

/// Frame-averaged power `(n tau P_scan + (L_tot - n tau) P_active) / L_tot`.
pub fn avg_power(frame: &FrameConfig, pm: &PowerModel, n: usize) -> Result<f64> {
    pm.validate()?;
    let l = effective_blocklength(frame, n)?;
    let l_tot = frame.l_tot as f64;
    Ok(((l_tot - l) * pm.p_scan + l * pm.p_active) / l_tot)
}

/// Average rate per unit average power; negative rates count as zero.
pub fn energy_efficiency(
    ch: &SpectralChannel,
    cfg: &RateConfig,
    pm: &PowerModel,
    n: usize,
) -> Result<f64> {
    let rate = avg_rate(ch, cfg, n)?.total;
    Ok(rate.max(0.0) / avg_power(&cfg.frame, pm, n)?)
}

/// Throughput metric under `opts`.
pub fn throughput(
    ch: &SpectralChannel,
    cfg: &RateConfig,
    n: usize,
    opts: &SearchOptions,
) -> Result<f64> {
    let r = avg_rate(ch, cfg, n)?;
    let rate = if opts.with_penalty {
        r.total
    } else {
        r.shannon_term
    };
    Ok(match opts.rate_metric {
        RateMetric::Average => rate,
        RateMetric::Effective => {
            rate * effective_blocklength(&cfg.frame, n)? / cfg.frame.l_tot as f64
        }
    })
}

// (n, W, sigma2, energy fraction, rank cap), floats by bit pattern
type CacheKey = (usize, u64, u64, u64, usize);

/// Memoized Jakes channels, keyed on everything that shapes the spectrum.
#[derive(Debug, Default)]
pub struct ChannelCache {
    map: Mutex<HashMap<CacheKey, Arc<SpectralChannel>>>,
}

impl ChannelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, spec: &CorrelationSpec) -> Result<Arc<SpectralChannel>> {
        let key = (
            spec.n_ports,
            spec.aperture.to_bits(),
            spec.sigma2.to_bits(),
            spec.energy_fraction.to_bits(),
            spec.rank_cap,
        );
        if let Some(ch) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(ch.clone());
        }
        let ch = Arc::new(spectral_channel(spec)?);
        self.map.lock().expect("cache lock").insert(key, ch.clone());
        Ok(ch)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Channel builder over a fixed aperture: the port count varies, `W` does not.
pub fn jakes_builder<'a>(
    template: CorrelationSpec,
    cache: &'a ChannelCache,
) -> impl Fn(usize) -> Result<Arc<SpectralChannel>> + Sync + 'a {
    move |n| cache.get(&template.with_ports(n)?)
}

/// Exhaustive scan over `1..=N_max` with the smallest n winning ties.
pub fn optimize<F>(
    ch_builder: F,
    cfg: &RateConfig,
    pm: Option<&PowerModel>,
    mode: Mode,
    eps_th: Option<f64>,
    opts: &SearchOptions,
) -> Result<DimensioningResult>
where
    F: Fn(usize) -> Result<Arc<SpectralChannel>> + Sync,
{
    cfg.validate()?;
    let frame = &cfg.frame;
    let n_max = match (frame.tau == 0.0, opts.max_ports) {
        (true, Some(cap)) => cap,
        (true, None) => feasible_port_range(frame)?,
        (false, Some(cap)) => feasible_port_range(frame)?.min(cap),
        (false, None) => feasible_port_range(frame)?,
    };
    if n_max < 1 {
        return Err(Error::NoFeasibleSolution("empty port range".into()));
    }
    if mode == Mode::Energy && pm.is_none() {
        return Err(Error::InvalidConfig(
            "energy mode needs a power model".into(),
        ));
    }
    if let Some(th) = eps_th {
        if !(th > 0.0 && th <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eps_th must lie in (0, 1], got {th}"
            )));
        }
    }

    let evaluated: Vec<(f64, bool)> = (1..=n_max)
        .into_par_iter()
        .map(|n| -> Result<(f64, bool)> {
            let ch = ch_builder(n)?;
            match mode {
                Mode::Reliability => Ok((avg_bler_closed_form(&ch, cfg.gbar, frame, n)?, true)),
                Mode::Throughput => Ok((throughput(&ch, cfg, n, opts)?, true)),
                Mode::Energy => {
                    let pm = pm.expect("checked above");
                    let ee = energy_efficiency(&ch, cfg, pm, n)?;
                    let ok = match eps_th {
                        Some(th) => avg_bler_closed_form(&ch, cfg.gbar, frame, n)? <= th,
                        None => true,
                    };
                    Ok((ee, ok))
                }
            }
        })
        .collect::<Result<_>>()?;

    let sense = if mode == Mode::Reliability {
        Sense::Min
    } else {
        Sense::Max
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, &(v, ok)) in evaluated.iter().enumerate() {
        if !ok {
            continue;
        }
        let better = match (best, sense) {
            (None, _) => true,
            (Some((_, b)), Sense::Min) => v < b,
            (Some((_, b)), Sense::Max) => v > b,
        };
        if better {
            best = Some((i + 1, v));
        }
    }
    let (n_opt, _) = best.ok_or_else(|| {
        Error::NoFeasibleSolution(format!(
            "no port count in 1..={n_max} meets the reliability target {:e}",
            eps_th.unwrap_or(1.0)
        ))
    })?;

    let values: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let (unimodal, unimodality_index) = check_unimodality(&values, sense);
    Ok(DimensioningResult {
        n_opt,
        metric_curve: values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1, v))
            .collect(),
        admissible: evaluated.iter().map(|e| e.1).collect(),
        mode,
        unimodal,
        unimodality_index,
        feasible_max: n_max,
    })
}

/// Discrete unimodality test.
///
/// For `Sense::Min` the sequence must fall to a single minimum and rise
/// after it; single flat steps (within 1e-12 relative) are tolerated, two in
/// a row are not. Returns `(true, index of the extremum)` or
/// `(false, first violation index)`; a monotone sequence is unimodal with
/// its extremum at an end.
pub fn check_unimodality(values: &[f64], sense: Sense) -> (bool, usize) {
    let v: Vec<f64> = match sense {
        Sense::Min => values.to_vec(),
        Sense::Max => values.iter().map(|x| -x).collect(),
    };
    if v.is_empty() {
        return (true, 0);
    }
    let flat = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    let mut rising = false;
    let mut flat_run = 0;
    for i in 0..v.len().saturating_sub(1) {
        let (a, b) = (v[i], v[i + 1]);
        if flat(a, b) {
            flat_run += 1;
            if flat_run > 1 {
                return (false, i - 1);
            }
            continue;
        }
        flat_run = 0;
        if b > a {
            rising = true;
        } else if rising {
            return (false, i);
        }
    }
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[idx] {
            idx = i;
        }
    }
    (true, idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unimodality_examples() {
        assert_eq!(
            check_unimodality(&[1.0, 3.0, 2.0, 1.0, 2.0, 3.0], Sense::Min),
            (false, 1)
        );
        assert_eq!(
            check_unimodality(&[5.0, 3.0, 2.0, 4.0, 6.0], Sense::Min),
            (true, 2)
        );
        assert_eq!(
            check_unimodality(&[1.0, 2.0, 3.0, 2.0, 1.0], Sense::Max),
            (true, 2)
        );
        assert_eq!(check_unimodality(&[1.0, 2.0, 3.0], Sense::Min), (true, 0));
        assert_eq!(check_unimodality(&[1.0, 2.0, 3.0], Sense::Max), (true, 2));
        // one flat step is fine, two are not
        assert_eq!(
            check_unimodality(&[3.0, 2.0, 2.0, 4.0], Sense::Min),
            (true, 1)
        );
        assert_eq!(
            check_unimodality(&[3.0, 2.0, 2.0, 2.0, 4.0], Sense::Min),
            (false, 1)
        );
    }

    #[test]
    fn port_range_examples() {
        let f = |l_tot, tau| FrameConfig::new(l_tot, tau, 256).unwrap();
        assert_eq!(feasible_port_range(&f(500, 2.0)).unwrap(), 225);
        assert_eq!(feasible_port_range(&f(300, 4.0)).unwrap(), 62);
        assert_eq!(feasible_port_range(&f(100, 10.0)).unwrap(), 5);
        assert!(feasible_port_range(&f(100, 60.0)).is_err());
        assert!(feasible_port_range(&f(100, 0.0)).is_err());
    }

    #[test]
    fn power_examples() {
        let frame = FrameConfig::new(500, 2.0, 256).unwrap();
        let pm = PowerModel::new(2.0, 1.0).unwrap();
        assert!((avg_power(&frame, &pm, 50).unwrap() - 1.2).abs() < 1e-15);
        let flat = PowerModel::new(3.0, 3.0).unwrap();
        for n in [1, 10, 225] {
            assert!((avg_power(&frame, &flat, n).unwrap() - 3.0).abs() < 1e-15);
        }
        assert!(PowerModel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn negative_rate_floors_efficiency() {
        let frame = FrameConfig::new(100, 0.5, 256).unwrap();
        let cfg = RateConfig::new(frame, 1e-3).unwrap();
        let ch = SpectralChannel::from_eigenvalues(&[1.0], 1.0).unwrap();
        let pm = PowerModel::new(1.0, 1.0).unwrap();
        assert_eq!(energy_efficiency(&ch, &cfg, &pm, 1).unwrap(), 0.0);
    }

    #[test]
    fn cache_reuses_channels() {
        let cache = ChannelCache::new();
        let spec = CorrelationSpec::new(10, 2.0).unwrap();
        let a = cache.get(&spec).unwrap();
        let b = cache.get(&spec).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn optimum_is_curve_extremum() {
        let frame = FrameConfig::new(300, 10.0, 256).unwrap();
        let cfg = RateConfig::new(frame, 100.0).unwrap();
        let cache = ChannelCache::new();
        let build = jakes_builder(CorrelationSpec::new(1, 3.0).unwrap(), &cache);
        let pm = PowerModel::new(2.0, 1.0).unwrap();
        for mode in [Mode::Reliability, Mode::Throughput, Mode::Energy] {
            let r = optimize(
                &build,
                &cfg,
                Some(&pm),
                mode,
                None,
                &SearchOptions::default(),
            )
            .unwrap();
            assert_eq!(r.metric_curve.len(), r.feasible_max);
            let ext = r
                .metric_curve
                .iter()
                .copied()
                .reduce(|a, b| match mode {
                    Mode::Reliability if b.1 < a.1 => b,
                    Mode::Throughput | Mode::Energy if b.1 > a.1 => b,
                    _ => a,
                })
                .unwrap();
            assert_eq!(ext.0, r.n_opt, "{mode:?}");
        }
    }

    #[test]
    fn energy_constraint_can_empty_the_set() {
        let frame = FrameConfig::new(300, 10.0, 256).unwrap();
        let cfg = RateConfig::new(frame, 1.0).unwrap();
        let cache = ChannelCache::new();
        let build = jakes_builder(CorrelationSpec::new(1, 3.0).unwrap(), &cache);
        let pm = PowerModel::new(2.0, 1.0).unwrap();
        let r = optimize(
            &build,
            &cfg,
            Some(&pm),
            Mode::Energy,
            Some(1e-12),
            &SearchOptions::default(),
        );
        assert!(matches!(r, Err(Error::NoFeasibleSolution(_))));
        assert!(optimize(
            &build,
            &cfg,
            None,
            Mode::Energy,
            None,
            &SearchOptions::default()
        )
        .is_err());
    }
}
