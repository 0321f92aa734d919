//! Experiment runner: configuration, seed splitting, parallel ensembles,
//! streaming statistics, reports and the acceptance checks.

pub mod config;
pub mod ensemble;
pub mod pipelines;
pub mod report;
pub mod stats;
pub mod verify;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{CheckName, DynamicName, ExperimentConfig, ExperimentKind, GridSection, ModelSection, SdeSystem};
pub use ensemble::{ensemble_collect, ensemble_run, ensemble_run_with, EnsembleStats, Moments};
pub use report::{export, Cell, Comparison, Format, Report, Row, Table};

use crate::{Error, Result};

/// Replica seed from (master seed, replica index): one splitmix64 round over
/// master ⊕ golden-ratio multiple of the index.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn dispatch(config: &ExperimentConfig, report: &mut Report, dir: Option<&std::path::Path>) -> Result<()> {
    match config.kind {
        ExperimentKind::Verify => {
            let check = config.check.ok_or_else(|| Error::Config("verify needs a 'check'".into()))?;
            verify::run_check(config, check, report)
        }
        kind => {
            pipelines::validate_tolerances(config)?;
            match kind {
                ExperimentKind::Simulate => pipelines::simulate(config, report, dir),
                ExperimentKind::Lln => pipelines::lln(config, report),
                ExperimentKind::Cov => pipelines::cov(config, report),
                ExperimentKind::Sde => pipelines::sde(config, report),
                ExperimentKind::Asympt => pipelines::asympt(config, report),
                ExperimentKind::Verify => unreachable!(),
            }
        }
    }
}

fn execute_into(config: &ExperimentConfig, dir: Option<&std::path::Path>) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let mut report = Report::new(config);
    let outcome = in_pool(config.workers, || dispatch(config, &mut report, dir))?;
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = outcome {
        report.error = Some(e.to_string());
    }
    Ok(report)
}

/// Run the pipeline without writing artifacts (trajectory files are skipped).
/// A pipeline failure is recorded in `report.error` with the rows gathered so far.
pub fn execute(config: &ExperimentConfig) -> Result<Report> {
    execute_into(config, None)
}

/// Run the pipeline and write `rows.csv`, one CSV per table and `report.json`
/// under `<out>/<run-id>/`. Config errors are returned before anything runs;
/// a pipeline failure still writes the partial report and is then returned as
/// the error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    let dir: PathBuf = config.run_dir();
    let report = execute_into(config, Some(&dir))?;
    export(&report, Format::Csv, &dir)?;
    export(&report, Format::Json, &dir)?;
    match &report.error {
        Some(msg) => Err(Error::Simulation(format!("{msg} (partial report in {})", dir.display()))),
        None => Ok(report),
    }
}
