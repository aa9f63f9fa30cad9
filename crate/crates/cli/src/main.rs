use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

mod commands;
mod config;

use config::{FamilyConfig, Overrides};

const CORPUS: &[(&str, &str)] = &[
    ("linear.json", include_str!("../corpus/linear.json")),
    ("kloosterman.json", include_str!("../corpus/kloosterman.json")),
    ("three_term.json", include_str!("../corpus/three_term.json")),
    ("f9_three_term.json", include_str!("../corpus/f9_three_term.json")),
];

#[derive(Parser)]
#[command(name = "unitroot", version, about = "Unit-root L-functions of toric exponential sums")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Family configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Working p-adic precision N (result is mod p^N).
    #[arg(long)]
    precision: Option<u32>,
    /// Largest closed-point degree.
    #[arg(long = "dmax")]
    d_max: Option<usize>,
    /// Symmetric power truncation.
    #[arg(long = "tmax")]
    t_max: Option<usize>,
    /// Write the report here as well as to stdout.
    #[arg(long = "json-out")]
    json_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exponential sums and L-polynomials from point counts.
    Count(Common),
    /// Fiber Frobenius, Fredholm determinant and unit root per closed point.
    Fiber(Common),
    /// Assemble the unit-root L-function and extract its unit root.
    Lunit(Common),
    /// Evaluate the closed-form unit root.
    Formula(Common),
    /// Symmetric power operator reports.
    Sympower(Common),
    /// Run every cross-check.
    Verify(Common),
    /// Write the bundled example configurations into a directory and verify each.
    SeedCorpus {
        #[arg(long = "seed-corpus")]
        dir: PathBuf,
        /// Only write the files.
        #[arg(long = "no-run")]
        no_run: bool,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn emit(report: &Value, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

fn run(name: &str, common: &Common) -> Result<bool, Failure> {
    let cfg = FamilyConfig::load(&common.config).map_err(Failure::Config)?;
    let overrides = Overrides { precision: common.precision, d_max: common.d_max, t_max: common.t_max };
    let params = cfg.params(&overrides);
    let outcome = match name {
        "count" => commands::count(&cfg, &params),
        "fiber" => commands::fiber(&cfg, &params),
        "lunit" => commands::lunit(&cfg, &params),
        "formula" => commands::formula(&cfg, &params),
        "sympower" => commands::sympower(&cfg, &params),
        _ => commands::verify(&cfg, &params),
    }
    .map_err(Failure::Runtime)?;
    let report = json!({
        "manifest": {
            "tool": "unitroot",
            "version": env!("CARGO_PKG_VERSION"),
            "command": name,
            "family": cfg.label(),
            "config_sha256": cfg.digest(),
            "params": params,
        },
        "report": outcome.body,
        "passed": outcome.passed,
        "first_failure": outcome.first_failure,
    });
    emit(&report, common.json_out.as_ref()).map_err(Failure::Runtime)?;
    Ok(outcome.passed)
}

fn seed(dir: &PathBuf, no_run: bool) -> Result<bool> {
    std::fs::create_dir_all(dir)?;
    let mut all = true;
    let mut results = Vec::new();
    for (name, text) in CORPUS {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        if no_run {
            continue;
        }
        let cfg = FamilyConfig::parse(text)?;
        let outcome = commands::verify(&cfg, &cfg.params(&Overrides::default()))?;
        all &= outcome.passed;
        results.push(json!({
            "config": path.display().to_string(),
            "config_sha256": cfg.digest(),
            "passed": outcome.passed,
            "first_failure": outcome.first_failure,
        }));
    }
    if !no_run {
        emit(&json!({"corpus": results, "passed": all}), None)?;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Count(c) => ("count", c),
        Command::Fiber(c) => ("fiber", c),
        Command::Lunit(c) => ("lunit", c),
        Command::Formula(c) => ("formula", c),
        Command::Sympower(c) => ("sympower", c),
        Command::Verify(c) => ("verify", c),
        Command::SeedCorpus { dir, no_run } => {
            return match seed(dir, *no_run) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(1),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match run(name, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            let err = json!({"error": "config", "detail": format!("{e:#}")});
            eprintln!("{}", serde_json::to_string_pretty(&err).unwrap_or_default());
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            let err = json!({"error": "runtime", "detail": format!("{e:#}")});
            eprintln!("{}", serde_json::to_string_pretty(&err).unwrap_or_default());
            ExitCode::from(1)
        }
    }
}
