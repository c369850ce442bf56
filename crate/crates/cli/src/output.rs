//! CSV and JSON artifacts. Floats are written as `{:.16e}` (17 significant
//! digits) so that identical runs give byte-identical files.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use hypflow::flow::{FlowConfig, NodalGeometry, TerminationReason, Trajectory};
use hypflow::monitors::{DiagnosticsRecord, EstimateSummary, VerdictRow};
use hypflow::Verdict;
use serde::Serialize;

use crate::scenario::{OutputSpec, ScenarioFile};
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub termination: TerminationReason,
    pub steps: usize,
    pub t_final: f64,
    pub final_residual: f64,
    pub wall_clock_seconds: f64,
    /// Sup over interior nodes of `|u - cap|` against the exact lifted cap.
    pub stationary_error: f64,
    pub verdicts: Vec<VerdictRow>,
    pub c_fit: f64,
    pub lambda_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationSummary>,
    pub config: ScenarioFile,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelSummary {
    pub k: usize,
    pub epsilon: f64,
    pub steps: usize,
    pub t_final: f64,
    pub final_residual: f64,
    pub boundary_w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationSummary {
    pub levels: Vec<LevelSummary>,
    pub cauchy: Vec<f64>,
    pub cauchy_over_eps: Vec<f64>,
}

impl RunSummary {
    pub fn new(
        command: &str,
        trajectory: &Trajectory<f64>,
        config: &FlowConfig<f64>,
        table: EstimateSummary,
        wall_clock_seconds: f64,
        echo: &ScenarioFile,
    ) -> Self {
        Self {
            command: command.into(),
            termination: trajectory.termination,
            steps: trajectory.steps,
            t_final: trajectory.final_state.t,
            final_residual: trajectory.final_residual,
            wall_clock_seconds,
            stationary_error: stationary_error(trajectory, config),
            verdicts: table.rows,
            c_fit: table.c_fit,
            lambda_hat: table.lambda_hat,
            continuation: None,
            config: echo.clone(),
        }
    }

    pub fn any_fail(&self) -> bool {
        self.verdicts.iter().any(|r| r.verdict == Verdict::Fail)
    }
}

pub fn stationary_error(trajectory: &Trajectory<f64>, config: &FlowConfig<f64>) -> f64 {
    let Ok(cap) = config.stationary_cap() else { return f64::NAN };
    config
        .domain
        .interior()
        .map(|j| (trajectory.final_state.u[j] - cap.height(config.domain.coordinate(j))).abs())
        .fold(0.0, f64::max)
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: e.into() }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

impl OutputSpec {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.directory.join(format!("{}_{suffix}", self.prefix))
    }

    pub fn ensure_directory(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.directory).map_err(io_err(&self.directory))
    }
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord<f64>]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(DiagnosticsRecord::<f64>::COLUMNS).map_err(csv_err(path))?;
    for rec in records {
        let row = rec.fields();
        let mut cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        // step counter is an integer column
        cells[1] = rec.step.to_string();
        w.write_record(&cells).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub const FINAL_U_COLUMNS: [&str; 8] = ["node", "r_or_x", "u", "w", "nu", "kappa_max", "kappa_min", "F"];

pub fn write_final_state(path: &Path, u: &[f64], config: &FlowConfig<f64>) -> Result<(), CliError> {
    let geom = NodalGeometry::evaluate(u, config);
    let mut w = csv_writer(path)?;
    w.write_record(FINAL_U_COLUMNS).map_err(csv_err(path))?;
    for (j, &uj) in u.iter().enumerate() {
        let row = [
            j.to_string(),
            fmt_f64(config.domain.coordinate(j)),
            fmt_f64(uj),
            fmt_f64(geom.w[j]),
            fmt_f64(geom.nu[j]),
            fmt_f64(geom.kappa_max[j]),
            fmt_f64(geom.kappa_min[j]),
            fmt_f64(geom.f[j]),
        ];
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.into() })?;
    text.push('\n');
    let mut file = File::create(path).map_err(io_err(path))?;
    file.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Writes `<prefix>_diag.csv`, `<prefix>_final_u.csv` and `<prefix>_summary.json`.
pub fn write_outputs(
    trajectory: &Trajectory<f64>,
    config: &FlowConfig<f64>,
    summary: &RunSummary,
    output: &OutputSpec,
) -> Result<Vec<PathBuf>, CliError> {
    output.ensure_directory()?;
    let diag = output.path("diag.csv");
    let final_u = output.path("final_u.csv");
    let json = output.path("summary.json");
    write_diagnostics(&diag, &trajectory.records)?;
    write_final_state(&final_u, &trajectory.final_state.u, config)?;
    write_json(&json, summary)?;
    Ok(vec![diag, final_u, json])
}
