use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qwgrowth::harness::{run_experiment, CheckName, ExperimentConfig, ExperimentKind, Report};

/// Exit status when a check row fails.
const EXIT_FAILED: u8 = 1;
/// Bad arguments or config (clap uses 2 for its own parse errors as well).
const EXIT_USAGE: u8 = 2;
/// The pipeline itself errored; a partial report was still written.
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qwg", version, about = "Simulations and checks for q-Whittaker growth dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dynamic and compare the ensemble mean with the limit profile
    Simulate(Common),
    /// Tabulate the deterministic limit profile
    Lln(Common),
    /// Tabulate the limiting covariance, optionally against Monte Carlo
    Cov(Common),
    /// Integrate the limiting SDE system and compare with closed forms
    Sde(Common),
    /// Large-time covariance: integral vs closed form and finite-size values
    Asympt(Common),
    /// Run one named check
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check name (overrides the config's `check`)
        #[arg(long, value_parser = parse_check)]
        check: Option<CheckName>,
    },
    /// List the check names
    Checks,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores
    #[arg(long)]
    workers: Option<usize>,
    /// Output root; artifacts go to <out>/<run-id>/
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Tolerance override, repeatable
    #[arg(long = "tol", value_name = "KEY=VALUE", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Print every row, not just failures
    #[arg(long, short)]
    verbose: bool,
}

fn parse_check(s: &str) -> Result<CheckName, String> {
    CheckName::parse(s).map_err(|e| e.to_string())
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn build(kind: ExperimentKind, c: &Common, check: Option<CheckName>) -> Result<ExperimentConfig, String> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => ExperimentConfig::new(kind),
    };
    if cfg.kind != kind {
        return Err(format!("config is a '{}' experiment, not '{}'", cfg.kind.name(), kind.name()));
    }
    if check.is_some() {
        cfg.check = check;
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if c.replicas.is_some() {
        cfg.replicas = c.replicas;
    }
    for (k, v) in &c.tol {
        cfg.tolerance.insert(k.clone(), *v);
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn print_report(r: &Report, dir: &std::path::Path, verbose: bool) {
    for row in &r.rows {
        if verbose || !row.pass {
            let z = row.z.map(|z| format!(" z={z:+.2}")).unwrap_or_default();
            println!(
                "{} {} [{}] formula={:.10e} estimate={:.10e}{z} tol={}",
                if row.pass { "ok  " } else { "FAIL" },
                row.quantity,
                row.comparison.name(),
                row.formula,
                row.estimate,
                row.tolerance
            );
        }
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    let pass = r.rows.iter().filter(|x| x.pass).count();
    println!("{}: {pass}/{} rows pass in {:.2}s -> {}", r.run_id, r.rows.len(), r.elapsed_seconds, dir.display());
    if !r.within_runtime() {
        println!("runtime {:.1}s exceeds the {:.0}s budget", r.elapsed_seconds, r.runtime_limit_seconds.unwrap_or(0.0));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common, check) = match &cli.command {
        Command::Simulate(c) => (ExperimentKind::Simulate, c, None),
        Command::Lln(c) => (ExperimentKind::Lln, c, None),
        Command::Cov(c) => (ExperimentKind::Cov, c, None),
        Command::Sde(c) => (ExperimentKind::Sde, c, None),
        Command::Asympt(c) => (ExperimentKind::Asympt, c, None),
        Command::Verify { common, check } => (ExperimentKind::Verify, common, *check),
        Command::Checks => {
            for c in CheckName::ALL {
                println!("{}{}", c.name(), if c.stochastic() { " (needs seed)" } else { "" });
            }
            return ExitCode::SUCCESS;
        }
    };
    let cfg = match build(kind, common, check) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qwg: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let dir = cfg.run_dir();
    match run_experiment(&cfg) {
        Ok(r) => {
            print_report(&r, &dir, common.verbose);
            if r.passed() && r.within_runtime() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e) => {
            eprintln!("qwg: {e}");
            match e {
                qwgrowth::Error::Config(_) | qwgrowth::Error::Params(_) => ExitCode::from(EXIT_USAGE),
                _ => ExitCode::from(EXIT_RUNTIME),
            }
        }
    }
}
