//! Command implementations behind the `lsvi` binary.
//!
//! Exit codes: 0 success, 1 diagnostics failed or output could not be
//! written, 2 invalid input, 3 numerical failure during a run, 4 some sweep
//! rows failed.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adaptive_lsvi::diagnostics::{run_all, DiagnosticsReport};
use adaptive_lsvi::{
    run_experiment, switch_count_bound, Config, Error, Report, RunStatus, SchedulerKind, Spec,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Overrides, RunFile, SchedulerName, SpecSource, SuiteFile, SweepPoint, SCHEMA_VERSION};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    DiagnosticsFailed(usize),
    SweepFailures(usize),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::SweepFailures(_) => 4,
            CliError::DiagnosticsFailed(_) | CliError::Output(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::DiagnosticsFailed(n) => write!(f, "{n} diagnostic check(s) failed"),
            CliError::SweepFailures(n) => write!(f, "{n} sweep run(s) failed"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure(m) => CliError::Numerical(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| output_err(path, e))
}

/// Self-contained record of a run: the spec is stored inline so diagnostics
/// need nothing else.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub config: RunFile,
    pub scheduler: SchedulerKind<f64>,
    pub report: Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: RunStatus,
    pub regret: f64,
    pub n_switches: usize,
    pub n_refits: usize,
    pub n_policy_changes: usize,
    pub scheduler: String,
    pub batch_count: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub eta: Option<f64>,
    /// Upper bound on the number of switches implied by `η`.
    pub switch_bound: Option<f64>,
    pub beta: f64,
    pub runtime_secs: f64,
}

impl Summary {
    pub fn new(report: &Report, scheduler: &SchedulerKind<f64>, lambda: f64) -> Self {
        let (name, batch_count, grid, eta, switch_bound) = match scheduler {
            SchedulerKind::Full => ("full", None, None, None, None),
            SchedulerKind::UniformBatch { grid } => {
                ("batch", Some(grid.len()), Some(grid.starts().to_vec()), None, None)
            }
            SchedulerKind::DetSwitch { eta } => (
                "det_switch",
                None,
                None,
                Some(*eta),
                switch_count_bound(report.dim, report.horizon, report.episodes, lambda, *eta).ok(),
            ),
        };
        Self {
            status: report.status.clone(),
            regret: report.regret(),
            n_switches: report.n_switches,
            n_refits: report.n_refits(),
            n_policy_changes: report.n_policy_changes,
            scheduler: name.to_string(),
            batch_count,
            grid,
            eta,
            switch_bound,
            beta: report.beta,
            runtime_secs: report.timing.total_secs,
        }
    }
}

/// Inline the spec so the stored config does not depend on external files.
fn inline_spec(file: &RunFile, spec: &Spec) -> RunFile {
    let mut stored = file.clone();
    if matches!(stored.spec, SpecSource::File { .. }) {
        stored.spec = SpecSource::Inline {
            document: spec.to_document(),
        };
    }
    stored
}

/// Executes one run and writes `run.csv`, `summary.json` and `run.json`.
pub fn cmd_run(config_path: &Path, overrides: &Overrides, out: &Path) -> Result<Summary, CliError> {
    let mut file = RunFile::load(config_path)?;
    file.apply(overrides)?;
    let cfg = file.to_run_config(config_path.parent())?;
    let scheduler = cfg.scheduler_kind()?;
    let report = run_experiment(&cfg)?;

    fs::create_dir_all(out).map_err(|e| output_err(out, e))?;
    let csv_path = out.join("run.csv");
    let csv_file = fs::File::create(&csv_path).map_err(|e| output_err(&csv_path, e))?;
    report.write_csv(csv_file).map_err(|e| output_err(&csv_path, e))?;
    let summary = Summary::new(&report, &scheduler, cfg.lambda);
    write_json(&out.join("summary.json"), &summary)?;
    let artifact = RunArtifact {
        schema_version: SCHEMA_VERSION,
        config: inline_spec(&file, &cfg.spec),
        scheduler,
        report,
    };
    write_json(&out.join("run.json"), &artifact)?;

    match &artifact.report.status {
        RunStatus::Completed => Ok(summary),
        RunStatus::NumericalFailure { episode, message } => {
            Err(CliError::Numerical(format!("episode {episode}: {message}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheduler: String,
    pub budget: Option<usize>,
    pub seed: u64,
    pub spec_seed: Option<u64>,
    pub regret: Option<f64>,
    pub n_switches: Option<usize>,
    pub n_refits: Option<usize>,
    pub status: String,
    pub message: String,
}

fn sweep_row(point: &SweepPoint, cfg: &Config) -> SweepRow {
    let mut row = SweepRow {
        scheduler: point.scheduler.as_str().to_string(),
        budget: point.budget,
        seed: point.seed,
        spec_seed: point.spec_seed,
        regret: None,
        n_switches: None,
        n_refits: None,
        status: "ok".to_string(),
        message: String::new(),
    };
    match run_experiment(cfg) {
        Ok(report) => {
            row.regret = Some(report.regret());
            row.n_switches = Some(report.n_switches);
            row.n_refits = Some(report.n_refits());
            if let RunStatus::NumericalFailure { episode, message } = &report.status {
                row.status = "numerical_failure".to_string();
                row.message = format!("episode {episode}: {message}");
            }
        }
        Err(e) => {
            row.status = "error".to_string();
            row.message = e.to_string();
        }
    }
    row
}

/// Runs every suite point in parallel and writes `sweep.csv` in suite order.
pub fn cmd_sweep(suite_path: &Path, out: Option<&Path>) -> Result<Vec<SweepRow>, CliError> {
    let suite = SuiteFile::load(suite_path)?;
    let out: PathBuf = match (out, &suite.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => suite_path.parent().unwrap_or(Path::new(".")).join(d),
        (None, None) => return Err(CliError::Validation("output_dir: pass --out or set it in the suite".into())),
    };
    let points = suite.expand()?;
    let base_dir = suite_path.parent();
    // Reject bad configs before spending time on any run.
    let configs: Vec<Config> = points
        .iter()
        .map(|p| {
            p.run.to_run_config(base_dir).map_err(|e| match e {
                CliError::Validation(m) => CliError::Validation(format!(
                    "{} budget={:?} seed={}: {m}",
                    p.scheduler.as_str(),
                    p.budget,
                    p.seed
                )),
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;

    let rows: Vec<SweepRow> = points.par_iter().zip(configs.par_iter()).map(|(p, c)| sweep_row(p, c)).collect();

    fs::create_dir_all(&out).map_err(|e| output_err(&out, e))?;
    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| output_err(&path, e))?;
    for row in &rows {
        w.serialize(row).map_err(|e| output_err(&path, e))?;
    }
    w.flush().map_err(|e| output_err(&path, e))?;

    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        return Err(CliError::SweepFailures(failed));
    }
    Ok(rows)
}

/// Replays a stored run and writes `diagnostics.json`; succeeds iff every check passes.
pub fn cmd_diagnose(artifact_path: &Path, out: Option<&Path>) -> Result<DiagnosticsReport, CliError> {
    let text = fs::read_to_string(artifact_path)
        .map_err(|e| CliError::Validation(format!("artifact: cannot read {}: {e}", artifact_path.display())))?;
    let artifact: RunArtifact =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("artifact: {e}")))?;
    artifact
        .report
        .check_consistency()
        .map_err(|e| CliError::Validation(format!("artifact: {e}")))?;
    let spec = artifact.config.spec.build(artifact_path.parent())?;
    let diagnostics = run_all(&artifact.report, &artifact.scheduler, Some(&spec))?;

    let out_dir = match out {
        Some(o) => o.to_path_buf(),
        None => artifact_path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    fs::create_dir_all(&out_dir).map_err(|e| output_err(&out_dir, e))?;
    write_json(&out_dir.join("diagnostics.json"), &diagnostics)?;
    if diagnostics.all_pass() {
        Ok(diagnostics)
    } else {
        Err(CliError::DiagnosticsFailed(diagnostics.n_fail))
    }
}

/// Wall-clock helper for the binary's progress line.
pub fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}
