//! Crash deduplication, coverage samples and the run report artifact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{BudgetPlan, ComplexityAssessment};
use crate::explorer::{event_log_tsv, ComponentRun, CrashObservation, ExplorerConfig, ProgressWait, RunOutcome, VisionCall};
use crate::state::ExplorationGraph;

pub const REPORT_FILE: &str = "report.json";
pub const EVENTS_FILE: &str = "events.tsv";
pub const GRAPH_FILE: &str = "graph.tsv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashCategory {
    AppBug,
    /// Platform refused something on purpose (permissions, exported checks).
    SecurityMechanism,
    /// Reaching a component that was never meant to be started from outside.
    PrivateComponent,
}

/// Rough triage from the exception type and message.
pub fn categorize(exception_type: &str, message: &str) -> CrashCategory {
    let short = exception_type.rsplit('.').next().unwrap_or(exception_type);
    let msg = message.to_lowercase();
    if short == "SecurityException" || msg.contains("permission denial") {
        CrashCategory::SecurityMechanism
    } else if short == "ActivityNotFoundException" || msg.contains("not exported") {
        CrashCategory::PrivateComponent
    } else {
        CrashCategory::AppBug
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub exception_type: String,
    pub message: String,
    pub stack_top_frame: String,
    pub component: String,
    pub first_seen_ms: u64,
    pub occurrence_count: u32,
    pub dedup_key: (String, String),
    pub category: CrashCategory,
}

/// Groups fatal crashes by (exception type, top frame). Non-fatal events are
/// dropped. Records come out in first-seen order.
pub fn dedup_crashes(observations: &[CrashObservation]) -> Vec<CrashRecord> {
    let mut out: Vec<CrashRecord> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.event.fatal) {
        let e = &o.event;
        let key = (e.exception_type.clone(), e.stack_top_frame.clone());
        match index.get(&key) {
            Some(&i) => {
                let r = &mut out[i];
                r.occurrence_count += 1;
                if e.mono_ms < r.first_seen_ms {
                    r.first_seen_ms = e.mono_ms;
                    r.message = e.message.clone();
                    r.component = o.component.clone();
                }
            }
            None => {
                index.insert(key.clone(), out.len());
                out.push(CrashRecord {
                    exception_type: e.exception_type.clone(),
                    message: e.message.clone(),
                    stack_top_frame: e.stack_top_frame.clone(),
                    component: o.component.clone(),
                    first_seen_ms: e.mono_ms,
                    occurrence_count: 1,
                    dedup_key: key,
                    category: categorize(&e.exception_type, &e.message),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSample {
    pub mono_ms: u64,
    pub states_discovered: usize,
    pub transitions_discovered: usize,
    pub components_launched: usize,
}

pub fn sample_coverage(graph: &ExplorationGraph, components_launched: usize, mono_ms: u64) -> CoverageSample {
    CoverageSample {
        mono_ms,
        states_discovered: graph.states().len(),
        transitions_discovered: graph.transitions().len(),
        components_launched,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub target: String,
    pub config: ExplorerConfig,
    pub assessments: Vec<ComplexityAssessment>,
    pub plan: BudgetPlan,
    pub components: Vec<ComponentRun>,
    pub coverage: Vec<CoverageSample>,
    pub crashes: Vec<CrashRecord>,
    pub progress_waits: Vec<ProgressWait>,
    pub vision_calls: Vec<VisionCall>,
    pub states: usize,
    pub transitions: usize,
    pub events: usize,
    pub started_ms: u64,
    pub finished_ms: u64,
    pub graph_path: String,
    pub event_log_path: String,
}

impl RunReport {
    pub fn from_outcome(target: &str, config: &ExplorerConfig, outcome: &RunOutcome) -> Self {
        RunReport {
            target: target.to_string(),
            config: config.clone(),
            assessments: outcome.assessments.clone(),
            plan: outcome.plan.clone(),
            components: outcome.component_runs.clone(),
            coverage: outcome.coverage.clone(),
            crashes: dedup_crashes(&outcome.crashes),
            progress_waits: outcome.progress_waits.clone(),
            vision_calls: outcome.vision_calls.clone(),
            states: outcome.graph.states().len(),
            transitions: outcome.graph.transitions().len(),
            events: outcome.events.len(),
            started_ms: outcome.started_ms,
            finished_ms: outcome.finished_ms,
            graph_path: GRAPH_FILE.to_string(),
            event_log_path: EVENTS_FILE.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report types always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes the report, event log and graph export into `out_dir`.
pub fn write_run_artifacts(
    out_dir: &Path,
    target: &str,
    config: &ExplorerConfig,
    outcome: &RunOutcome,
) -> Result<RunReport, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let report = RunReport::from_outcome(target, config, outcome);
    write_atomic(&out_dir.join(EVENTS_FILE), event_log_tsv(&outcome.events).as_bytes())?;
    write_atomic(&out_dir.join(GRAPH_FILE), outcome.graph.to_tsv().as_bytes())?;
    write_atomic(&out_dir.join(REPORT_FILE), report.to_json().as_bytes())?;
    Ok(report)
}
