//! `fas-hrllc <scenario> --config <path> [--set key=value ...] --out <path> --format csv|json`

mod config;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fas_hrllc::Error;
use serde_json::json;

use config::{build, validate_config, Diagnostic, Level, RawConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "fas-hrllc",
    version,
    about = "Fluid-antenna short-packet link experiments"
)]
struct Cli {
    scenario: Scenario,
    /// Flat `key = value` config file; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Only validate the config and print diagnostics.
    #[arg(long)]
    check: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_IO: u8 = 1;

fn fail(code: u8, kind: &str, message: String, diagnostics: &[Diagnostic]) -> ExitCode {
    let obj = json!({
        "error": kind,
        "message": message,
        "exit_code": code,
        "diagnostics": diagnostics,
    });
    eprintln!("{obj}");
    ExitCode::from(code)
}

fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Domain(_) | Error::InvalidConfig(_) | Error::Usage(_) => {
            (EXIT_CONFIG, "invalid_config")
        }
        Error::InfeasiblePortCount { .. } | Error::NoFeasibleSolution(_) => {
            (EXIT_INFEASIBLE, "infeasible")
        }
        Error::Numerical(_) | Error::Model(_) | Error::ModelFit(_) => (EXIT_NUMERICAL, "numerical"),
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FAS_HRLLC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("FAS_HRLLC_THREADS='{v}' is not a count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(m) = configure_threads() {
        return fail(EXIT_CONFIG, "invalid_config", m, &[]);
    }

    let mut raw = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match RawConfig::parse(&text) {
                Ok(r) => r,
                Err(d) => return fail(EXIT_CONFIG, "invalid_config", d.to_string(), &[d]),
            },
            Err(e) => return fail(EXIT_IO, "io", format!("{}: {e}", path.display()), &[]),
        },
        None => RawConfig::default(),
    };
    for s in &cli.set {
        if let Err(d) = raw.set(s) {
            return fail(EXIT_CONFIG, "invalid_config", d.to_string(), &[d]);
        }
    }

    if cli.check {
        let diags = validate_config(cli.scenario, &raw);
        println!(
            "{}",
            serde_json::to_string_pretty(&diags).expect("serializable")
        );
        let bad = diags.iter().any(|d| d.level == Level::Error);
        return if bad {
            ExitCode::from(EXIT_CONFIG)
        } else {
            ExitCode::SUCCESS
        };
    }

    let (exp, warnings) = match build(cli.scenario, &raw) {
        Ok(x) => x,
        Err(diags) => {
            let msg = diags
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return fail(EXIT_CONFIG, "invalid_config", msg, &diags);
        }
    };
    for w in &warnings {
        eprintln!("{w}");
    }

    let report = match scenario::run(&exp) {
        Ok(r) => r,
        Err(e) => {
            let (code, kind) = classify(&e);
            return fail(code, kind, e.to_string(), &[]);
        }
    };
    let fp = output::fingerprint(cli.scenario, &raw);
    let text = match cli.format {
        Format::Csv => {
            if let Some(t) = &report.timing {
                for (k, v) in t {
                    eprintln!("{k} = {v}");
                }
            }
            output::to_csv(&report, &fp)
        }
        Format::Json => output::to_json(&report, cli.scenario, &raw, &fp),
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                return fail(EXIT_IO, "io", format!("{}: {e}", path.display()), &[]);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}
