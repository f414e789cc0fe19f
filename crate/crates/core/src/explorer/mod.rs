//! The executor loop and the recursive screen analyzer.

mod analyzer;
pub mod heuristics;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::action::Action;
use crate::budget::{allocate_budget, assess_complexity, BudgetError, BudgetPlan, ComplexityAssessment};
use crate::device::{CrashEvent, DeviceAdapter, DeviceError};
use crate::hierarchy::StateId;
use crate::manifest::catalog::{lookup_broadcast_spec, BroadcastCatalog};
use crate::manifest::{build_launch_intent, ComponentDecl, ComponentKind};
use crate::report::{sample_coverage, CoverageSample};
use crate::state::{ExplorationGraph, TransitionRecord, UiStack, VisitCounter};
use crate::vlm::{VlmClient, DEFAULT_MODEL};

pub use analyzer::{verify_text_accepted, wait_for_progress, ProgressOutcome, ProgressResult, VerifyError};
pub use heuristics::{classify_sentiment, group_tap_actions, order_tap_actions, Sentiment, TapOrder};

/// Simulated seconds between coverage samples.
/// Hard cap on analyzer nesting so a huge tau cannot blow the stack.
pub const MAX_DEPTH: u32 = 40;

pub const COVERAGE_INTERVAL_MS: u64 = 60_000;

#[derive(Debug, Error)]
pub enum ExplorerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    pub tau: u32,
    pub idle_wait_ms: u64,
    pub progress_timeout_ms: u64,
    pub total_budget_secs: u64,
    pub rng_seed: u64,
    pub non_ignore_components: Vec<String>,
    pub vlm_enabled: bool,
    pub vlm_timeout_ms: u64,
    pub model_hint: String,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        ExplorerConfig {
            tau: 2,
            idle_wait_ms: 1500,
            progress_timeout_ms: 60_000,
            total_budget_secs: 600,
            rng_seed: 0,
            non_ignore_components: Vec::new(),
            vlm_enabled: true,
            vlm_timeout_ms: 60_000,
            model_hint: DEFAULT_MODEL.to_string(),
        }
    }
}

impl ExplorerConfig {
    pub fn validate(&self) -> Result<(), ExplorerError> {
        if self.tau < 1 {
            return Err(ExplorerError::Config("tau must be at least 1".into()));
        }
        if self.progress_timeout_ms < self.idle_wait_ms {
            return Err(ExplorerError::Config("progress timeout must not be shorter than the idle wait".into()));
        }
        if self.total_budget_secs == 0 {
            return Err(ExplorerError::Config("total budget must be positive".into()));
        }
        Ok(())
    }
}

/// One issued action, as written to the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub mono_ms: u64,
    /// Component in the foreground when the action was issued.
    pub component: String,
    pub action: Action,
    pub result: StateId,
    /// Launch episode the action belongs to (0 for assessment-free system events).
    pub episode: u32,
    /// Analyzer invocation that issued it, if any.
    pub analysis: Option<u32>,
    /// Screen the action was planned on.
    pub screen: Option<StateId>,
    /// Display text of the targeted widget.
    pub target_text: Option<String>,
    pub replayed: bool,
    /// For text input: whether the widget kept the sent text.
    pub accepted: Option<bool>,
}

impl EventRecord {
    pub fn tsv_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.mono_ms, self.component, self.action, self.result)
    }
}

pub fn event_log_tsv(events: &[EventRecord]) -> String {
    let mut out = String::new();
    for e in events {
        let _ = writeln!(out, "{}", e.tsv_line());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashObservation {
    pub event: CrashEvent,
    /// Component being explored when the crash surfaced.
    pub component: String,
    /// Action after which it was drained.
    pub after_action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressWait {
    pub component: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub outcome: ProgressOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisionCall {
    pub component: String,
    pub analysis: u32,
    pub screen: StateId,
    pub steps: usize,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refusal {
    OverVisitLimit,
    UnchangedOnStack,
    OutsideApp,
    /// Nesting hit [`MAX_DEPTH`].
    TooDeep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    /// Sequence number; refused invocations get none.
    pub id: Option<u32>,
    pub component: String,
    pub screen: StateId,
    pub mono_ms: u64,
    pub depth: u32,
    pub refused: Option<Refusal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentExit {
    /// The analyzer had nothing left to do at the component's entry.
    Exhausted,
    BudgetSpent,
    NotScheduled,
    Delivered,
    DeviceError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentRun {
    pub component: String,
    pub kind: ComponentKind,
    pub planned_ms: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub launches: u32,
    pub exit: ComponentExit,
    pub error: Option<String>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub graph: ExplorationGraph,
    pub events: Vec<EventRecord>,
    pub crashes: Vec<CrashObservation>,
    pub progress_waits: Vec<ProgressWait>,
    pub vision_calls: Vec<VisionCall>,
    pub analyses: Vec<AnalysisRecord>,
    pub visits: VisitCounter,
    pub assessments: Vec<ComplexityAssessment>,
    pub plan: BudgetPlan,
    pub component_runs: Vec<ComponentRun>,
    pub coverage: Vec<CoverageSample>,
    pub started_ms: u64,
    pub finished_ms: u64,
}

impl RunOutcome {
    /// Analyzer invocations that went past the gates, per component.
    pub fn analyzed_count(&self, component: &str) -> usize {
        self.analyses.iter().filter(|a| a.refused.is_none() && a.component == component).count()
    }
}

/// Why the current episode stopped early.
#[derive(Debug)]
pub(crate) enum Stop {
    Budget,
    Device(DeviceError),
}

impl From<DeviceError> for Stop {
    fn from(e: DeviceError) -> Self {
        Stop::Device(e)
    }
}

pub(crate) type Flow<T> = Result<T, Stop>;

pub(crate) struct Explorer<'a> {
    pub(crate) device: &'a mut dyn DeviceAdapter,
    pub(crate) vlm: Option<&'a mut dyn VlmClient>,
    pub(crate) config: ExplorerConfig,
    pub(crate) rng: ChaCha8Rng,
    aut_package: String,
    aut_components: BTreeSet<String>,
    pub(crate) graph: ExplorationGraph,
    pub(crate) events: Vec<EventRecord>,
    pub(crate) crashes: Vec<CrashObservation>,
    pub(crate) progress_waits: Vec<ProgressWait>,
    pub(crate) vision_calls: Vec<VisionCall>,
    pub(crate) analyses: Vec<AnalysisRecord>,
    pub(crate) visits: VisitCounter,
    coverage: Vec<CoverageSample>,
    next_sample_ms: u64,
    launched: BTreeSet<String>,
    // per component
    current: String,
    pub(crate) deadline_ms: u64,
    // per launch episode
    pub(crate) episode: u32,
    pub(crate) record: TransitionRecord,
    pub(crate) stack: UiStack,
    pub(crate) app_switched: bool,
    pub(crate) depth: u32,
    next_analysis: u32,
}

/// Runs the whole exploration: assessment, budget split, then every component
/// in declaration order.
pub fn run_executor<'a>(
    device: &'a mut dyn DeviceAdapter,
    vlm: Option<&'a mut dyn VlmClient>,
    aut_package: &str,
    components: &[ComponentDecl],
    config: &ExplorerConfig,
) -> Result<RunOutcome, ExplorerError> {
    config.validate()?;
    let started_ms = device.now_ms();
    let mut ex = Explorer {
        device,
        vlm,
        config: config.clone(),
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        aut_package: aut_package.to_string(),
        aut_components: components.iter().map(|c| c.name.clone()).collect(),
        graph: ExplorationGraph::new(),
        events: Vec::new(),
        crashes: Vec::new(),
        progress_waits: Vec::new(),
        vision_calls: Vec::new(),
        analyses: Vec::new(),
        visits: VisitCounter::default(),
        coverage: Vec::new(),
        next_sample_ms: started_ms,
        launched: BTreeSet::new(),
        current: String::new(),
        deadline_ms: u64::MAX,
        episode: 0,
        record: TransitionRecord::new(Default::default()),
        stack: UiStack::new(),
        app_switched: false,
        depth: 0,
        next_analysis: 0,
    };
    ex.sample_coverage();

    let assessments = assess_complexity(ex.device, components, config.idle_wait_ms);
    ex.collect_crashes(None);
    // a tenth of the budget is set aside for assessment and setup
    let explore_secs = config.total_budget_secs - config.total_budget_secs / 10;
    let plan = allocate_budget(&assessments, explore_secs.max(1))?;
    info!(?plan, "budget allocated");

    let catalog = BroadcastCatalog::shipped();
    let mut component_runs = Vec::new();
    for decl in components {
        let planned_ms = plan.get(&decl.name) * 1000;
        let start_ms = ex.device.now_ms();
        let mut run = ComponentRun {
            component: decl.name.clone(),
            kind: decl.kind,
            planned_ms,
            start_ms,
            end_ms: start_ms,
            launches: 0,
            exit: ComponentExit::NotScheduled,
            error: None,
        };
        if planned_ms == 0 {
            component_runs.push(run);
            continue;
        }
        ex.current = decl.name.clone();
        ex.deadline_ms = start_ms + planned_ms;
        let result = match decl.kind {
            ComponentKind::Receiver => ex.deliver_broadcasts(decl, &catalog).map(|_| ComponentExit::Delivered),
            ComponentKind::Service => ex.start_service(decl).map(|_| ComponentExit::Delivered),
            ComponentKind::Activity => ex.explore_activity(decl, &mut run.launches),
        };
        match result {
            Ok(exit) => run.exit = exit,
            Err(Stop::Budget) => run.exit = ComponentExit::BudgetSpent,
            Err(Stop::Device(e)) => {
                warn!(component = %decl.name, error = %e, "device error, moving to the next component");
                run.exit = ComponentExit::DeviceError;
                run.error = Some(e.to_string());
            }
        }
        ex.collect_crashes(None);
        run.end_ms = ex.device.now_ms();
        component_runs.push(run);
    }
    ex.sample_coverage();
    let finished_ms = ex.device.now_ms();
    Ok(RunOutcome {
        graph: ex.graph,
        events: ex.events,
        crashes: ex.crashes,
        progress_waits: ex.progress_waits,
        vision_calls: ex.vision_calls,
        analyses: ex.analyses,
        visits: ex.visits,
        assessments,
        plan,
        component_runs,
        coverage: ex.coverage,
        started_ms,
        finished_ms,
    })
}

impl<'a> Explorer<'a> {
    pub(crate) fn is_aut(&self, component: &str) -> bool {
        self.aut_components.contains(component)
            || component.strip_prefix(&self.aut_package).is_some_and(|rest| rest.starts_with('.'))
    }

    pub(crate) fn ignores(&self, component: &str) -> bool {
        !self.is_aut(component) && !self.config.non_ignore_components.iter().any(|c| c == component)
    }

    pub(crate) fn check_budget(&self) -> Flow<()> {
        if self.device.now_ms() >= self.deadline_ms {
            Err(Stop::Budget)
        } else {
            Ok(())
        }
    }

    pub(crate) fn next_analysis_id(&mut self) -> u32 {
        self.next_analysis += 1;
        self.next_analysis
    }

    pub(crate) fn collect_crashes(&mut self, after_action: Option<&Action>) {
        match self.device.drain_crash_events() {
            Ok(events) => {
                for event in events {
                    info!(kind = %event.exception_type, frame = %event.stack_top_frame, "crash observed");
                    self.crashes.push(CrashObservation {
                        event,
                        component: self.current.clone(),
                        after_action: after_action.map(|a| a.to_string()),
                    });
                }
            }
            Err(e) => warn!(error = %e, "could not read crash events"),
        }
    }

    pub(crate) fn sample_coverage(&mut self) {
        let now = self.device.now_ms();
        if self.coverage.is_empty() {
            self.coverage.push(sample_coverage(&self.graph, self.launched.len(), now));
            self.next_sample_ms = now + COVERAGE_INTERVAL_MS;
            return;
        }
        while now >= self.next_sample_ms {
            let sample = sample_coverage(&self.graph, self.launched.len(), self.next_sample_ms);
            self.coverage.push(sample);
            self.next_sample_ms += COVERAGE_INTERVAL_MS;
        }
    }

    fn note_launched(&mut self, component: &str) {
        self.launched.insert(component.to_string());
    }

    fn deliver_broadcasts(&mut self, decl: &ComponentDecl, catalog: &BroadcastCatalog) -> Flow<()> {
        let mut seen = BTreeSet::new();
        for action in decl.intent_filters.iter().flat_map(|f| f.actions.iter()) {
            if !seen.insert(action.clone()) {
                continue;
            }
            self.check_budget()?;
            let intent = lookup_broadcast_spec(action, catalog).intent;
            self.system_event(Action::Broadcast { intent })?;
        }
        self.note_launched(&decl.name);
        Ok(())
    }

    fn start_service(&mut self, decl: &ComponentDecl) -> Flow<()> {
        self.check_budget()?;
        let intent = build_launch_intent(decl, &mut self.rng);
        self.system_event(Action::Launch { intent })?;
        self.note_launched(&decl.name);
        Ok(())
    }

    /// Issues an action that is not part of any screen episode.
    fn system_event(&mut self, action: Action) -> Flow<()> {
        let component = self.device.current_component()?;
        let mono_ms = self.device.now_ms();
        crate::device::execute(self.device, &action, &crate::hierarchy::UiSnapshot {
            component: component.clone(),
            widgets: Vec::new(),
            overlay: false,
            rotation: 0,
            screenshot: None,
            captured_at: mono_ms,
        })?;
        self.device.wait_ms(self.config.idle_wait_ms);
        let after = crate::device::snapshot(self.device)?;
        let to = crate::state::UiState::from_snapshot(&after);
        self.graph.add_state(&to);
        self.collect_crashes(Some(&action));
        self.events.push(EventRecord {
            mono_ms,
            component,
            action,
            result: to.id,
            episode: self.episode,
            analysis: None,
            screen: None,
            target_text: None,
            replayed: false,
            accepted: None,
        });
        self.sample_coverage();
        Ok(())
    }

    fn explore_activity(&mut self, decl: &ComponentDecl, launches: &mut u32) -> Flow<ComponentExit> {
        loop {
            self.check_budget()?;
            let intent = build_launch_intent(decl, &mut self.rng);
            self.episode += 1;
            self.record = TransitionRecord::new(intent.clone());
            self.stack = UiStack::new();
            self.app_switched = false;
            self.depth = 0;
            *launches += 1;
            self.launch(intent)?;
            self.note_launched(&decl.name);
            if !self.ui_analyzer()? {
                return Ok(ComponentExit::Exhausted);
            }
        }
    }
}

/// Default per-request model timeout.
pub fn vlm_timeout(config: &ExplorerConfig) -> Duration {
    Duration::from_millis(config.vlm_timeout_ms)
}
