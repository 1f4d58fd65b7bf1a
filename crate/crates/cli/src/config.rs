//! Flat `key = value` configuration with defaults, overrides and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use fas_hrllc::channel::{CorrelationSpec, MAX_RANK};
use fas_hrllc::dimension::{Mode, PowerModel, RateMetric, SearchOptions};
use fas_hrllc::fbl::FrameConfig;
use fas_hrllc::montecarlo::{McConfig, SamplingMode, MIN_SAMPLES};
use fas_hrllc::rate::RateConfig;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    BlerVsSnr,
    BlerVsN,
    RateVsN,
    RateVsSnr,
    EigenSpectrum,
    TauThreshold,
    EeCurve,
    Optimize,
    McValidate,
    Bench,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::BlerVsSnr => "bler-vs-snr",
            Scenario::BlerVsN => "bler-vs-n",
            Scenario::RateVsN => "rate-vs-n",
            Scenario::RateVsSnr => "rate-vs-snr",
            Scenario::EigenSpectrum => "eigen-spectrum",
            Scenario::TauThreshold => "tau-threshold",
            Scenario::EeCurve => "ee-curve",
            Scenario::Optimize => "optimize",
            Scenario::McValidate => "mc-validate",
            Scenario::Bench => "bench",
        }
    }

    /// Whether the sweep runs over the port count (otherwise over SNR in dB).
    pub fn sweeps_ports(self) -> bool {
        matches!(
            self,
            Scenario::BlerVsN | Scenario::RateVsN | Scenario::TauThreshold | Scenario::EeCurve
        )
    }
}

/// Recognized keys and their defaults; `None` means optional with no default.
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("n_ports", Some("10"), "number of ports N"),
    (
        "aperture",
        Some("5"),
        "normalized aperture W in wavelengths",
    ),
    ("sigma2", Some("1"), "per-port fading power"),
    (
        "energy_fraction",
        Some("0.99"),
        "eigen-energy kept by truncation",
    ),
    ("rank_cap", Some("20"), "upper bound on the retained rank"),
    ("l_tot", Some("500"), "frame length in channel uses"),
    ("tau", Some("2"), "channel uses spent per scanned port"),
    ("payload_bits", Some("256"), "payload D in bits"),
    ("l_min", Some("50"), "minimum coding blocklength"),
    (
        "target_eps",
        Some("1e-5"),
        "target error probability of the rate expression",
    ),
    (
        "snr_db",
        Some("10"),
        "average SNR in dB; a comma list for port sweeps",
    ),
    ("p_scan", None, "power drawn while scanning"),
    ("p_active", None, "power drawn while transmitting"),
    (
        "mode",
        Some("reliability"),
        "optimize objective: reliability, throughput or energy",
    ),
    ("eps_th", None, "reliability constraint for mode=energy"),
    (
        "rate_metric",
        Some("average"),
        "throughput metric: average or effective",
    ),
    (
        "penalty",
        Some("true"),
        "subtract the finite-blocklength penalty",
    ),
    (
        "max_ports",
        None,
        "cap on the port scan, required when tau = 0",
    ),
    ("sweep_min", None, "first sweep value"),
    ("sweep_max", None, "last sweep value"),
    ("sweep_step", None, "sweep increment"),
    ("sweep_values", None, "explicit comma list of sweep values"),
    (
        "exact_q",
        Some("false"),
        "also report the exact-Q quadrature BLER",
    ),
    ("mc_seed", Some("1"), "Monte-Carlo seed"),
    (
        "mc_samples",
        Some("100000"),
        "Monte-Carlo samples per point",
    ),
    (
        "mc_mode",
        Some("spectral"),
        "Monte-Carlo sampling: spectral or physical",
    ),
    ("bench_repetitions", Some("5"), "benchmark repetitions"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub key: String,
    pub message: String,
}

impl Diagnostic {
    fn error(key: &str, message: impl Into<String>) -> Self {
        Self {
            level: Level::Error,
            key: key.into(),
            message: message.into(),
        }
    }

    fn warning(key: &str, message: impl Into<String>) -> Self {
        Self {
            level: Level::Warning,
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.level {
            Level::Error => "error",
            Level::Warning => "warning",
        };
        write!(f, "{level}: {}: {}", self.key, self.message)
    }
}

/// Raw key-value configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, Diagnostic> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Diagnostic::error("config", format!("line {}: expected key = value", i + 1))
            })?;
            cfg.entries
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, assignment: &str) -> Result<(), Diagnostic> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Diagnostic::error("--set", format!("expected key=value, got '{assignment}'"))
        })?;
        self.entries
            .insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    /// Entries with every default filled in.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = self.entries.clone();
        for (k, d, _) in KEYS {
            if let Some(d) = d {
                out.entry((*k).to_string())
                    .or_insert_with(|| (*d).to_string());
            }
        }
        out
    }

    /// Canonical text form, one sorted `key = value` per line.
    pub fn canonical(&self) -> String {
        self.resolved()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Fully typed experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub correlation: CorrelationSpec,
    pub frame: FrameConfig,
    pub rate: RateConfig,
    pub snr_db: Vec<f64>,
    pub power: Option<PowerModel>,
    pub mode: Mode,
    pub eps_th: Option<f64>,
    pub search: SearchOptions,
    pub sweep: Vec<f64>,
    pub exact_q: bool,
    pub mc: McConfig,
    pub bench_repetitions: usize,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    diags: Vec<Diagnostic>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str) -> Option<T> {
        let raw = self.map.get(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.diags
                    .push(Diagnostic::error(key, format!("cannot parse '{raw}'")));
                None
            }
        }
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let raw = self.map.get(key)?;
        let parsed: Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Some(v),
            _ => {
                self.diags
                    .push(Diagnostic::error(key, format!("cannot parse list '{raw}'")));
                None
            }
        }
    }

    fn parse_enum<T>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T>
    where
        T: Copy,
    {
        let raw = self.map.get(key)?;
        match options.iter().find(|(name, _)| name == raw) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|o| o.0).collect();
                self.diags.push(Diagnostic::error(
                    key,
                    format!("'{raw}' is not one of {}", names.join(", ")),
                ));
                None
            }
        }
    }

    fn check<E: fmt::Display>(&mut self, key: &str, r: Result<(), E>) {
        if let Err(e) = r {
            self.diags.push(Diagnostic::error(key, e.to_string()));
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Every violation of `raw` for `scenario`; empty means runnable.
pub fn validate_config(scenario: Scenario, raw: &RawConfig) -> Vec<Diagnostic> {
    match build(scenario, raw) {
        Ok((_, diags)) => diags,
        Err(diags) => diags,
    }
}

/// Typed experiment plus warnings, or the full list of diagnostics.
pub fn build(
    scenario: Scenario,
    raw: &RawConfig,
) -> Result<(Experiment, Vec<Diagnostic>), Vec<Diagnostic>> {
    let map = raw.resolved();
    let mut r = Reader {
        map: &map,
        diags: Vec::new(),
    };

    for key in raw.entries.keys() {
        if !KEYS.iter().any(|(k, _, _)| k == key) {
            r.diags.push(Diagnostic::error(key, "unknown key"));
        }
    }

    let n_ports: Option<usize> = r.get("n_ports");
    let aperture: Option<f64> = r.get("aperture");
    let sigma2: Option<f64> = r.get("sigma2");
    let energy_fraction: Option<f64> = r.get("energy_fraction");
    let rank_cap: Option<usize> = r.get("rank_cap");
    let l_tot: Option<u32> = r.get("l_tot");
    let tau: Option<f64> = r.get("tau");
    let payload: Option<u32> = r.get("payload_bits");
    let l_min: Option<u32> = r.get("l_min");
    let target_eps: Option<f64> = r.get("target_eps");
    let snr_db = r.list("snr_db");
    let p_scan: Option<f64> = r.get("p_scan");
    let p_active: Option<f64> = r.get("p_active");
    let mode = r.parse_enum(
        "mode",
        &[
            ("reliability", Mode::Reliability),
            ("throughput", Mode::Throughput),
            ("energy", Mode::Energy),
        ],
    );
    let eps_th: Option<f64> = r.get("eps_th");
    let rate_metric = r.parse_enum(
        "rate_metric",
        &[
            ("average", RateMetric::Average),
            ("effective", RateMetric::Effective),
        ],
    );
    let penalty: Option<bool> = r.get("penalty");
    let max_ports: Option<usize> = r.get("max_ports");
    let sweep_min: Option<f64> = r.get("sweep_min");
    let sweep_max: Option<f64> = r.get("sweep_max");
    let sweep_step: Option<f64> = r.get("sweep_step");
    let sweep_values = r.list("sweep_values");
    let exact_q: Option<bool> = r.get("exact_q");
    let mc_seed: Option<u64> = r.get("mc_seed");
    let mc_samples: Option<usize> = r.get("mc_samples");
    let mc_mode = r.parse_enum(
        "mc_mode",
        &[
            ("spectral", SamplingMode::Spectral),
            ("physical", SamplingMode::Physical),
        ],
    );
    let bench_repetitions: Option<usize> = r.get("bench_repetitions");

    if let Some(w) = aperture {
        if !(w > 0.0 && w.is_finite()) {
            r.diags.push(Diagnostic::error(
                "aperture",
                format!("W must be positive, got {w}"),
            ));
        }
    }
    if let Some(v) = &snr_db {
        if scenario.sweeps_ports() && !strictly_increasing(v) {
            r.diags.push(Diagnostic::error(
                "snr_db",
                "SNR list must be strictly increasing",
            ));
        }
        if !scenario.sweeps_ports() && v.len() > 1 {
            r.diags.push(Diagnostic::error(
                "snr_db",
                "a list is only accepted by port sweeps",
            ));
        }
    }
    if scenario == Scenario::TauThreshold && tau == Some(0.0) {
        r.diags.push(Diagnostic::error(
            "tau",
            "the threshold scenario computes the admissible delay; tau = 0 leaves the port range unbounded",
        ));
    }
    let needs_power = scenario == Scenario::EeCurve
        || (scenario == Scenario::Optimize && mode == Some(Mode::Energy));
    if needs_power && (p_scan.is_none() || p_active.is_none()) {
        r.diags.push(Diagnostic::error(
            "p_scan",
            "p_scan and p_active are required for energy efficiency",
        ));
    }
    if eps_th.is_some() && !(scenario == Scenario::Optimize && mode == Some(Mode::Energy)) {
        r.diags.push(Diagnostic::warning(
            "eps_th",
            "only used by optimize with mode = energy",
        ));
    }
    if let (Some(ef), Some(cap)) = (energy_fraction, rank_cap) {
        let widest = if scenario.sweeps_ports() || scenario == Scenario::Optimize {
            max_ports
                .or(sweep_max.map(|x| x as usize))
                .unwrap_or(usize::MAX)
        } else {
            n_ports.unwrap_or(0)
        };
        if ef >= 1.0 && widest > cap {
            r.diags.push(Diagnostic::warning(
                "energy_fraction",
                format!(
                    "energy_fraction = 1 with up to {} ports: rank_cap = {cap} will bind",
                    if widest == usize::MAX {
                        "unbounded".to_string()
                    } else {
                        widest.to_string()
                    }
                ),
            ));
        }
    }
    if let Some(cap) = rank_cap {
        if cap > MAX_RANK {
            r.diags.push(Diagnostic::error(
                "rank_cap",
                format!("rank_cap {cap} exceeds {MAX_RANK}"),
            ));
        }
    }
    if let Some(n) = mc_samples {
        if n < MIN_SAMPLES {
            r.diags.push(Diagnostic::error(
                "mc_samples",
                format!("at least {MIN_SAMPLES} samples are required"),
            ));
        }
    }
    if bench_repetitions == Some(0) {
        r.diags
            .push(Diagnostic::error("bench_repetitions", "must be positive"));
    }

    let correlation = match (n_ports, aperture, sigma2, energy_fraction, rank_cap) {
        (Some(n), Some(w), Some(s), Some(ef), Some(cap)) if w > 0.0 => {
            let spec = CorrelationSpec::new(n, w)
                .and_then(|c| c.with_sigma2(s))
                .and_then(|c| c.with_energy_fraction(ef))
                .and_then(|c| c.with_rank_cap(cap.min(MAX_RANK)));
            r.check(
                "correlation",
                spec.as_ref().map(|_| ()).map_err(|e| e.to_string()),
            );
            spec.ok()
        }
        _ => None,
    };
    let frame = match (l_tot, tau, payload, l_min) {
        (Some(lt), Some(t), Some(d), Some(lm)) => {
            let f = FrameConfig::new(lt, t, d).and_then(|f| f.with_l_min(lm));
            r.check("frame", f.as_ref().map(|_| ()).map_err(|e| e.to_string()));
            f.ok()
        }
        _ => None,
    };
    let rate = match (frame, target_eps, snr_db.as_ref()) {
        (Some(f), Some(eps), Some(s)) => {
            let c = RateConfig::new(f, db_to_linear(s[0])).and_then(|c| c.with_target_eps(eps));
            r.check(
                "target_eps",
                c.as_ref().map(|_| ()).map_err(|e| e.to_string()),
            );
            c.ok()
        }
        _ => None,
    };
    let power = match (p_scan, p_active) {
        (Some(s), Some(a)) => {
            let pm = PowerModel::new(s, a);
            r.check("p_scan", pm.as_ref().map(|_| ()).map_err(|e| e.to_string()));
            pm.ok()
        }
        (None, None) => None,
        _ => {
            r.diags.push(Diagnostic::error(
                "p_active",
                "p_scan and p_active must be given together",
            ));
            None
        }
    };
    if let Some(th) = eps_th {
        if !(th > 0.0 && th <= 1.0) {
            r.diags.push(Diagnostic::error(
                "eps_th",
                format!("must lie in (0, 1], got {th}"),
            ));
        }
    }

    // sweep axis
    let sweep = if let Some(v) = sweep_values {
        if sweep_min.is_some() || sweep_max.is_some() || sweep_step.is_some() {
            r.diags.push(Diagnostic::error(
                "sweep_values",
                "give either a list or min/max/step, not both",
            ));
        }
        if !strictly_increasing(&v) {
            r.diags.push(Diagnostic::error(
                "sweep_values",
                "sweep values must be strictly increasing",
            ));
        }
        Some(v)
    } else {
        default_sweep(
            scenario,
            frame.as_ref(),
            max_ports,
            sweep_min,
            sweep_max,
            sweep_step,
            &mut r.diags,
        )
    };
    if let Some(v) = &sweep {
        let ports = scenario.sweeps_ports() || scenario == Scenario::Optimize;
        if ports && v.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
            r.diags.push(Diagnostic::error(
                "sweep_values",
                "port counts must be positive integers",
            ));
        }
    }

    let errors = r.diags.iter().any(|d| d.level == Level::Error);
    if errors {
        return Err(r.diags);
    }
    let search = SearchOptions {
        rate_metric: rate_metric.expect("validated"),
        with_penalty: penalty.expect("validated"),
        max_ports,
    };
    let exp = Experiment {
        scenario,
        correlation: correlation.expect("validated"),
        frame: frame.expect("validated"),
        rate: rate.expect("validated"),
        snr_db: snr_db.expect("validated"),
        power,
        mode: mode.expect("validated"),
        eps_th,
        search,
        sweep: sweep.unwrap_or_default(),
        exact_q: exact_q.expect("validated"),
        mc: McConfig {
            seed: mc_seed.expect("validated"),
            n_samples: mc_samples.expect("validated"),
            mode: mc_mode.expect("validated"),
        },
        bench_repetitions: bench_repetitions.expect("validated"),
    };
    Ok((exp, r.diags))
}

fn default_sweep(
    scenario: Scenario,
    frame: Option<&FrameConfig>,
    max_ports: Option<usize>,
    lo: Option<f64>,
    hi: Option<f64>,
    step: Option<f64>,
    diags: &mut Vec<Diagnostic>,
) -> Option<Vec<f64>> {
    if scenario == Scenario::EigenSpectrum || scenario == Scenario::Optimize {
        return None;
    }
    let (lo, hi, step) = if scenario.sweeps_ports() {
        let frame = frame?;
        let n_max = if frame.tau > 0.0 {
            let n = ((frame.l_tot - frame.l_min) as f64 / frame.tau).floor();
            Some(max_ports.map_or(n, |c| n.min(c as f64)))
        } else {
            max_ports.map(|c| c as f64)
        };
        let hi = match (hi, n_max) {
            (Some(h), _) => h,
            (None, Some(n)) => n,
            (None, None) => {
                diags.push(Diagnostic::error(
                    "max_ports",
                    "tau = 0 needs max_ports or sweep_max",
                ));
                return None;
            }
        };
        (lo.unwrap_or(1.0), hi, step.unwrap_or(1.0))
    } else {
        (lo.unwrap_or(0.0), hi.unwrap_or(30.0), step.unwrap_or(2.0))
    };
    if step.is_nan() || step <= 0.0 || lo > hi {
        diags.push(Diagnostic::error(
            "sweep_step",
            "need sweep_step > 0 and sweep_min <= sweep_max",
        ));
        return None;
    }
    let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
    if count > 100_000 {
        diags.push(Diagnostic::error(
            "sweep_step",
            format!("{count} sweep points is too many"),
        ));
        return None;
    }
    Some((0..count).map(|i| lo + i as f64 * step).collect())
}
