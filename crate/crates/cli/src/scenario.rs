//! One recipe per scenario; each turns an experiment into result rows.

use std::collections::BTreeMap;
use std::sync::Arc;

use fas_hrllc::channel::{build_covariance, spectral_channel, spectral_decompose, SpectralChannel};
use fas_hrllc::dimension::{avg_power, energy_efficiency, jakes_builder, optimize, ChannelCache};
use fas_hrllc::fbl::{
    asymptotic_bler, avg_bler_closed_form, avg_bler_quadrature, log10_bler,
    tau_threshold_reliability,
};
use fas_hrllc::montecarlo::{benchmark_speedup, mc_avg_bler, mc_avg_rate, par_grid, BenchPoint};
use fas_hrllc::rate::{asymptotic_rate, avg_rate, tau_threshold_rate, RateConfig};
use fas_hrllc::Result;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{db_to_linear, Experiment, Scenario};

/// Tabular result: named metric columns plus free-form summary fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sweep_variable: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<(f64, Vec<f64>)>,
    /// Deterministic scalar outcomes (e.g. the optimum).
    pub summary: BTreeMap<String, Value>,
    /// Wall-clock measurements; excluded from the deterministic output.
    pub timing: Option<BTreeMap<String, f64>>,
}

impl Report {
    fn new(sweep_variable: &'static str, columns: Vec<&'static str>) -> Self {
        Self {
            sweep_variable,
            columns,
            rows: Vec::new(),
            summary: BTreeMap::new(),
            timing: None,
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn run(exp: &Experiment) -> Result<Report> {
    match exp.scenario {
        Scenario::BlerVsSnr => bler_vs_snr(exp),
        Scenario::BlerVsN => bler_vs_n(exp),
        Scenario::RateVsN => rate_vs_n(exp),
        Scenario::RateVsSnr => rate_vs_snr(exp),
        Scenario::EigenSpectrum => eigen_spectrum(exp),
        Scenario::TauThreshold => tau_threshold(exp),
        Scenario::EeCurve => ee_curve(exp),
        Scenario::Optimize => run_optimize(exp),
        Scenario::McValidate => mc_validate(exp),
        Scenario::Bench => bench(exp),
    }
}

fn fixed_channel(exp: &Experiment) -> Result<SpectralChannel> {
    spectral_channel(&exp.correlation)
}

/// Evaluates `f` on every `(snr_db, n)` pair of a port sweep, in order.
fn port_sweep<F>(exp: &Experiment, f: F) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: Fn(&SpectralChannel, &RateConfig, f64, usize) -> Result<Vec<f64>> + Sync,
{
    let cache = ChannelCache::new();
    let build = jakes_builder(exp.correlation, &cache);
    let points: Vec<(f64, usize)> = exp
        .snr_db
        .iter()
        .flat_map(|&s| exp.sweep.iter().map(move |&n| (s, n as usize)))
        .collect();
    points
        .par_iter()
        .map(|&(snr, n)| {
            let ch = build(n)?;
            let cfg = exp.rate.with_gbar(db_to_linear(snr))?;
            let mut row = vec![snr, ch.rank() as f64];
            row.extend(f(&ch, &cfg, snr, n)?);
            Ok((n as f64, row))
        })
        .collect()
}

/// Evaluates `f` at every SNR of the sweep for the configured port count.
fn snr_sweep<F>(exp: &Experiment, ch: &SpectralChannel, f: F) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: Fn(usize, &RateConfig) -> Result<Vec<f64>> + Sync,
{
    exp.sweep
        .par_iter()
        .enumerate()
        .map(|(i, &snr)| {
            let cfg = exp.rate.with_gbar(db_to_linear(snr))?;
            let mut row = vec![ch.rank() as f64];
            row.extend(f(i, &cfg)?);
            Ok((snr, row))
        })
        .collect()
}

fn bler_vs_snr(exp: &Experiment) -> Result<Report> {
    let ch = fixed_channel(exp)?;
    let n = exp.correlation.n_ports;
    let mut cols = vec!["rank", "bler", "log10_bler", "asymptotic_bler"];
    if exp.exact_q {
        cols.push("bler_exact_q");
    }
    let (asym, _) = asymptotic_bler(&ch, 1.0, &exp.frame, n)?;
    let mut rep = Report::new("snr_db", cols);
    rep.rows = snr_sweep(exp, &ch, |_, cfg| {
        let p = avg_bler_closed_form(&ch, cfg.gbar, &exp.frame, n)?;
        let mut v = vec![p, log10_bler(p), asym.at(cfg.gbar)];
        if exp.exact_q {
            v.push(avg_bler_quadrature(&ch, cfg.gbar, &exp.frame, n, true)?);
        }
        Ok(v)
    })?;
    Ok(rep)
}

fn bler_vs_n(exp: &Experiment) -> Result<Report> {
    let mut cols = vec!["snr_db", "rank", "bler", "log10_bler"];
    if exp.exact_q {
        cols.push("bler_exact_q");
    }
    let mut rep = Report::new("n", cols);
    rep.rows = port_sweep(exp, |ch, cfg, _, n| {
        let p = avg_bler_closed_form(ch, cfg.gbar, &exp.frame, n)?;
        let mut v = vec![p, log10_bler(p)];
        if exp.exact_q {
            v.push(avg_bler_quadrature(ch, cfg.gbar, &exp.frame, n, true)?);
        }
        Ok(v)
    })?;
    Ok(rep)
}

fn rate_columns(ch: &SpectralChannel, cfg: &RateConfig, n: usize) -> Result<Vec<f64>> {
    let r = avg_rate(ch, cfg, n)?;
    let share = cfg.frame.blocklength(n)? / cfg.frame.l_tot as f64;
    Ok(vec![
        r.total,
        r.shannon_term,
        r.penalty_term,
        share * r.total,
    ])
}

fn rate_vs_n(exp: &Experiment) -> Result<Report> {
    let mut rep = Report::new(
        "n",
        vec![
            "snr_db",
            "rank",
            "rate_total",
            "shannon",
            "penalty",
            "effective_rate",
        ],
    );
    rep.rows = port_sweep(exp, |ch, cfg, _, n| rate_columns(ch, cfg, n))?;
    Ok(rep)
}

fn rate_vs_snr(exp: &Experiment) -> Result<Report> {
    let ch = fixed_channel(exp)?;
    let n = exp.correlation.n_ports;
    let mut rep = Report::new(
        "snr_db",
        vec![
            "rank",
            "rate_total",
            "shannon",
            "penalty",
            "effective_rate",
            "asymptotic_rate",
        ],
    );
    rep.rows = snr_sweep(exp, &ch, |_, cfg| {
        let mut v = rate_columns(&ch, cfg, n)?;
        v.push(asymptotic_rate(&ch, cfg, n)?.1);
        Ok(v)
    })?;
    Ok(rep)
}

fn eigen_spectrum(exp: &Experiment) -> Result<Report> {
    let spec = &exp.correlation;
    let (ch, phys) = spectral_decompose(&build_covariance(spec)?, spec)?;
    let trace = spec.n_ports as f64 * spec.sigma2;
    let mut rep = Report::new("index", vec!["eigenvalue", "cumulative_energy", "retained"]);
    let mut acc = 0.0;
    for (i, &l) in phys.eigenvalues.iter().enumerate() {
        acc += l;
        rep.rows
            .push(((i + 1) as f64, vec![l, acc / trace, flag(i < ch.rank())]));
    }
    rep.summary.insert("rank".into(), json!(ch.rank()));
    rep.summary.insert(
        "truncation_shortfall".into(),
        json!(ch.truncation_shortfall()),
    );
    Ok(rep)
}

fn tau_threshold(exp: &Experiment) -> Result<Report> {
    let mut rep = Report::new(
        "n",
        vec![
            "snr_db",
            "rank",
            "tau_eq",
            "delta_s",
            "tau_eq_reliability",
            "sensitivity_k",
            "r_squared",
        ],
    );
    rep.rows = port_sweep(exp, |ch, cfg, _, n| {
        let r = tau_threshold_rate(ch, cfg, n)?;
        let e = tau_threshold_reliability(ch, cfg.gbar, &cfg.frame, n)?;
        Ok(vec![
            r.tau_eq,
            r.delta_s,
            e.tau_eq,
            e.fit.k,
            e.fit.r_squared,
        ])
    })?;
    Ok(rep)
}

fn ee_curve(exp: &Experiment) -> Result<Report> {
    let pm = exp.power.expect("validated");
    let mut rep = Report::new(
        "n",
        vec!["snr_db", "rank", "ee", "avg_power", "rate_total", "bler"],
    );
    rep.rows = port_sweep(exp, |ch, cfg, _, n| {
        Ok(vec![
            energy_efficiency(ch, cfg, &pm, n)?,
            avg_power(&cfg.frame, &pm, n)?,
            avg_rate(ch, cfg, n)?.total,
            avg_bler_closed_form(ch, cfg.gbar, &cfg.frame, n)?,
        ])
    })?;
    Ok(rep)
}

fn run_optimize(exp: &Experiment) -> Result<Report> {
    let cache = ChannelCache::new();
    let build = jakes_builder(exp.correlation, &cache);
    let res = optimize(
        &build,
        &exp.rate,
        exp.power.as_ref(),
        exp.mode,
        exp.eps_th,
        &exp.search,
    )?;
    let mut rep = Report::new("n", vec!["rank", "metric", "admissible"]);
    for ((n, v), ok) in res.metric_curve.iter().zip(&res.admissible) {
        let rank = build(*n)?.rank();
        rep.rows.push((*n as f64, vec![rank as f64, *v, flag(*ok)]));
    }
    rep.summary.insert("mode".into(), json!(res.mode));
    rep.summary.insert("n_opt".into(), json!(res.n_opt));
    rep.summary.insert("unimodal".into(), json!(res.unimodal));
    rep.summary
        .insert("unimodality_index".into(), json!(res.unimodality_index));
    rep.summary
        .insert("feasible_max".into(), json!(res.feasible_max));
    Ok(rep)
}

fn mc_validate(exp: &Experiment) -> Result<Report> {
    let spec = &exp.correlation;
    let (ch, phys) = spectral_decompose(&build_covariance(spec)?, spec)?;
    let n = spec.n_ports;
    let mut rep = Report::new(
        "snr_db",
        vec![
            "rank",
            "bler",
            "bler_exact_q",
            "mc_mean",
            "mc_stderr",
            "bler_z",
            "rate_total",
            "mc_rate",
            "mc_rate_stderr",
            "rate_z",
            "mc_rate_exact_dispersion",
        ],
    );
    let physical = exp.mc.mode == fas_hrllc::montecarlo::SamplingMode::Physical;
    let rows = par_grid(&exp.mc, exp.sweep.len(), |i, mc| {
        let snr = exp.sweep[i];
        let cfg = exp.rate.with_gbar(db_to_linear(snr))?;
        let (b, r) = if physical {
            (
                mc_avg_bler(&phys, cfg.gbar, &exp.frame, n, mc)?,
                mc_avg_rate(&phys, cfg.gbar, &cfg, n, mc)?,
            )
        } else {
            (
                mc_avg_bler(&ch, cfg.gbar, &exp.frame, n, mc)?,
                mc_avg_rate(&ch, cfg.gbar, &cfg, n, mc)?,
            )
        };
        let exact = avg_bler_quadrature(&ch, cfg.gbar, &exp.frame, n, true)?;
        let rate = avg_rate(&ch, &cfg, n)?.total;
        Ok((
            snr,
            vec![
                ch.rank() as f64,
                avg_bler_closed_form(&ch, cfg.gbar, &exp.frame, n)?,
                exact,
                b.mean,
                b.std_error,
                b.z_score(exact),
                rate,
                r.approx.mean,
                r.approx.std_error,
                r.approx.z_score(rate),
                r.exact.mean,
            ],
        ))
    })?;
    rep.rows = rows;
    Ok(rep)
}

fn bench(exp: &Experiment) -> Result<Report> {
    let ch = Arc::new(fixed_channel(exp)?);
    let n = exp.correlation.n_ports;
    let grid: Vec<BenchPoint> = exp
        .sweep
        .iter()
        .map(|&snr| BenchPoint {
            channel: (*ch).clone(),
            gbar: db_to_linear(snr),
            frame: exp.frame,
            n,
        })
        .collect();
    let b = benchmark_speedup(&grid, exp.bench_repetitions, &exp.mc)?;
    let mut rep = Report::new("snr_db", vec!["closed_form", "quadrature", "monte_carlo"]);
    rep.rows = exp
        .sweep
        .iter()
        .zip(&b.values)
        .map(|(&s, &(a, q, m))| (s, vec![a, q, m]))
        .collect();
    rep.summary
        .insert("repetitions".into(), json!(b.repetitions));
    rep.timing = Some(BTreeMap::from([
        ("closed_form_s".to_string(), b.closed_form.as_secs_f64()),
        ("quadrature_s".to_string(), b.quadrature.as_secs_f64()),
        ("monte_carlo_s".to_string(), b.monte_carlo.as_secs_f64()),
        (
            "speedup_vs_quadrature".to_string(),
            b.speedup_vs_quadrature(),
        ),
        (
            "speedup_vs_monte_carlo".to_string(),
            b.speedup_vs_monte_carlo(),
        ),
    ]));
    Ok(rep)
}
