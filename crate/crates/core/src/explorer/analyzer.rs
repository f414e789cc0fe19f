//! The recursive screen analyzer and the two action performers.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use super::heuristics::group_tap_actions;
use super::{vlm_timeout, AnalysisRecord, EventRecord, Explorer, Flow, ProgressWait, Refusal, Stop, VisionCall};
use crate::action::{Action, Direction, Distance, Orientation};
use crate::device::{self, DeviceAdapter, DeviceError};
use crate::hierarchy::{
    detect_progress_indicator, has_text_editor, interactive_widgets, label_widgets, state_signature, Screenshot,
    StateId, UiSnapshot, Widget,
};
use crate::manifest::Intent;
use crate::state::{replay_observed, ui_items_changed, StateError, UiState};
use crate::vlm::{build_prompt, parse_response, predict_text_input, random_fallback_input, widget_attrs, InputKind, VlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressOutcome {
    Changed,
    TimedOut,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressResult {
    pub outcome: ProgressOutcome,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Last snapshot taken.
    pub snapshot: UiSnapshot,
}

/// If `current` shows a progress indicator, polls every `idle_wait_ms` until
/// the screen changes or `timeout_ms` has passed since the first poll.
pub fn wait_for_progress(
    device: &mut dyn DeviceAdapter,
    current: UiSnapshot,
    idle_wait_ms: u64,
    timeout_ms: u64,
) -> Result<ProgressResult, DeviceError> {
    let start_ms = device.now_ms();
    if !detect_progress_indicator(&current) {
        return Ok(ProgressResult { outcome: ProgressOutcome::NotApplicable, start_ms, end_ms: start_ms, snapshot: current });
    }
    let initial = state_signature(&current);
    let mut snapshot = current;
    loop {
        let elapsed = device.now_ms() - start_ms;
        if elapsed >= timeout_ms {
            let end_ms = device.now_ms();
            return Ok(ProgressResult { outcome: ProgressOutcome::TimedOut, start_ms, end_ms, snapshot });
        }
        // last poll is clamped so the timeout lands exactly
        device.wait_ms(idle_wait_ms.max(1).min(timeout_ms - elapsed));
        snapshot = device::snapshot(device)?;
        if state_signature(&snapshot) != initial {
            let end_ms = device.now_ms();
            return Ok(ProgressResult { outcome: ProgressOutcome::Changed, start_ms, end_ms, snapshot });
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("widget is gone after text input")]
    WidgetVanished,
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// Re-reads the screen and checks whether `widget` (found by resource id and
/// bounds) now holds exactly `sent`.
pub fn verify_text_accepted(device: &mut dyn DeviceAdapter, widget: &Widget, sent: &str) -> Result<bool, VerifyError> {
    let snap = device::snapshot(device)?;
    let found = snap
        .widgets
        .iter()
        .find(|w| w.resource_id == widget.resource_id && w.bounds == widget.bounds)
        .ok_or(VerifyError::WidgetVanished)?;
    Ok(found.text == sent)
}

pub(crate) struct StepResult {
    after: UiSnapshot,
    after_id: StateId,
    /// False when a progress wait timed out on the result.
    settled: bool,
}

/// One analyzer invocation's view of its screen.
struct Screen {
    snap: UiSnapshot,
    id: StateId,
    widgets: Vec<Widget>,
    analysis: u32,
    /// Record length when the screen was reached.
    base: usize,
    covered: BTreeSet<u32>,
    abandoned: bool,
}

enum Planned {
    Input(u32),
    Act(Action),
}

impl<'a> Explorer<'a> {
    fn observe(&mut self) -> Flow<UiSnapshot> {
        Ok(device::snapshot(self.device)?)
    }

    /// Waits out a progress indicator on `after`. Returns the settled snapshot
    /// and whether it may be analyzed.
    fn settle_progress(&mut self, after: UiSnapshot) -> Flow<(UiSnapshot, bool)> {
        if !detect_progress_indicator(&after) {
            return Ok((after, true));
        }
        let r = wait_for_progress(self.device, after, self.config.idle_wait_ms, self.config.progress_timeout_ms)?;
        self.progress_waits.push(ProgressWait {
            component: r.snapshot.component.clone(),
            start_ms: r.start_ms,
            end_ms: r.end_ms,
            outcome: r.outcome,
        });
        debug!(outcome = ?r.outcome, waited = r.end_ms - r.start_ms, "progress wait");
        self.collect_crashes(None);
        let changed = r.outcome == ProgressOutcome::Changed;
        if changed {
            self.graph.add_state(&UiState::from_snapshot(&r.snapshot));
        }
        Ok((r.snapshot, changed))
    }

    pub(super) fn launch(&mut self, intent: Intent) -> Flow<()> {
        let action = Action::Launch { intent };
        let component = self.device.current_component()?;
        let mono_ms = self.device.now_ms();
        let Action::Launch { intent } = &action else { unreachable!() };
        self.device.launch(intent)?;
        self.device.wait_ms(self.config.idle_wait_ms);
        let after = self.observe()?;
        self.collect_crashes(Some(&action));
        let to = UiState::from_snapshot(&after);
        self.graph.add_state(&to);
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
        self.settle_progress(after)?;
        self.sample_coverage();
        Ok(())
    }

    /// Executes one action on `on`, records it and waits for the UI to settle.
    fn issue(&mut self, on: &UiSnapshot, action: Action, analysis: Option<u32>, target: Option<&Widget>) -> Flow<StepResult> {
        self.check_budget()?;
        let from = UiState::from_snapshot(on);
        self.record.push(from.clone(), action.clone());
        let mono_ms = self.device.now_ms();
        device::execute(self.device, &action, on)?;
        self.device.wait_ms(self.config.idle_wait_ms);
        let after = self.observe()?;
        self.collect_crashes(Some(&action));
        let to = UiState::from_snapshot(&after);
        self.graph.add_transition(&from, &action, &to);
        self.events.push(EventRecord {
            mono_ms,
            component: on.component.clone(),
            action,
            result: to.id,
            episode: self.episode,
            analysis,
            screen: Some(from.id),
            target_text: target.map(|w| w.display_text().to_string()),
            replayed: false,
            accepted: None,
        });
        let (after, settled) = self.settle_progress(after)?;
        self.sample_coverage();
        let after_id = state_signature(&after);
        Ok(StepResult { after, after_id, settled })
    }

    /// Analyzes whatever is on screen. Returns false when the invocation was
    /// refused at one of the gates.
    pub(super) fn ui_analyzer(&mut self) -> Flow<bool> {
        let snap = self.observe()?;
        let id = state_signature(&snap);
        let component = snap.component.clone();
        let mut entry = AnalysisRecord {
            id: None,
            component: component.clone(),
            screen: id.clone(),
            mono_ms: self.device.now_ms(),
            depth: self.depth,
            refused: None,
        };
        let refusal = if self.visits.get(&component) > self.config.tau {
            Some(Refusal::OverVisitLimit)
        } else if self
            .stack
            .entries()
            .iter()
            .any(|(c, pushed)| c == &component && !ui_items_changed(pushed, &id))
        {
            Some(Refusal::UnchangedOnStack)
        } else if self.ignores(&component) {
            Some(Refusal::OutsideApp)
        } else if self.depth >= super::MAX_DEPTH {
            Some(Refusal::TooDeep)
        } else {
            None
        };
        if let Some(r) = refusal {
            entry.refused = Some(r);
            self.analyses.push(entry);
            if r == Refusal::OutsideApp {
                self.issue(&snap, Action::TapBack, None, None)?;
            }
            return Ok(false);
        }

        let pushed = self.stack.push(&component, id.clone());
        self.visits.increment(&component);
        let analysis = self.next_analysis_id();
        entry.id = Some(analysis);
        self.analyses.push(entry);
        debug!(%component, %id, analysis, depth = self.depth, "analyzing screen");

        let widgets = interactive_widgets(&snap);
        let mut screen = Screen {
            snap,
            id,
            widgets,
            analysis,
            base: self.record.len(),
            covered: BTreeSet::new(),
            abandoned: false,
        };
        self.depth += 1;
        let result = self.analyze_screen(&mut screen);
        self.depth -= 1;
        if pushed {
            self.stack.pop();
        }
        result?;
        Ok(true)
    }

    fn analyze_screen(&mut self, sc: &mut Screen) -> Flow<()> {
        let all: Vec<u32> = (1..=sc.widgets.len() as u32).collect();
        let use_vision = self.config.vlm_enabled && self.vlm.is_some() && has_text_editor(&sc.snap);
        let remainder = if use_vision {
            match self.perform_vision(sc)? {
                Ok(true) => Vec::new(),
                Ok(false) => all.into_iter().filter(|l| !sc.covered.contains(l)).collect(),
                Err(e) => {
                    warn!(error = %e, "vision path failed, using heuristics");
                    all
                }
            }
        } else {
            all
        };
        if !sc.abandoned && !remainder.is_empty() {
            self.perform_non_vision(sc, &remainder)?;
        }
        if !sc.abandoned {
            self.finish_screen(sc)?;
        }
        Ok(())
    }

    /// Makes sure the analyzed screen is showing, replaying the record if not.
    fn ensure_on(&mut self, sc: &mut Screen) -> Flow<bool> {
        if sc.abandoned {
            return Ok(false);
        }
        let live = self.observe()?;
        if state_signature(&live) == sc.id {
            return Ok(true);
        }
        self.restore(sc)
    }

    fn restore(&mut self, sc: &mut Screen) -> Flow<bool> {
        self.check_budget()?;
        let k = match self.record.steps[sc.base..].iter().rposition(|s| s.state.id == sc.id) {
            Some(i) => sc.base + i,
            None => {
                // nothing was issued from this screen yet: target the state
                // reached by the whole record
                self.record.truncate(sc.base);
                self.record.push(UiState::from_snapshot(&sc.snap), Action::TapBack);
                sc.base
            }
        };
        let prefix = self.record.prefix(k);
        let mut seen = Vec::new();
        let deadline = self.deadline_ms;
        let result = replay_observed(&prefix, self.device, self.config.idle_wait_ms, &mut |r| {
            seen.push((
                r.action.clone(),
                r.issued_at,
                r.before_component.to_string(),
                r.before.map(UiState::from_snapshot),
                UiState::from_snapshot(r.after),
            ));
            if r.issued_at >= deadline {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        for (action, mono_ms, component, before, after) in seen {
            match &before {
                Some(b) => {
                    self.graph.add_transition(b, &action, &after);
                }
                None => {
                    self.graph.add_state(&after);
                }
            }
            self.events.push(EventRecord {
                mono_ms,
                component,
                action,
                result: after.id,
                episode: self.episode,
                analysis: Some(sc.analysis),
                screen: before.map(|b| b.id),
                target_text: None,
                replayed: true,
                accepted: None,
            });
        }
        self.collect_crashes(None);
        self.record.truncate(k);
        let ok = match result {
            Ok(ok) => ok,
            Err(StateError::Device(e)) => return Err(Stop::Device(e)),
            Err(StateError::EmptyRecord) => false,
        };
        if !ok {
            self.check_budget()?;
            warn!(screen = %sc.id, "could not replay back to the screen, abandoning it");
            sc.abandoned = true;
        }
        Ok(ok)
    }

    /// Guarded single action. Returns false when the screen could not be
    /// restored.
    fn perform(&mut self, sc: &mut Screen, action: Action, fallback_allowed: bool) -> Flow<bool> {
        if !self.ensure_on(sc)? {
            return Ok(false);
        }
        let target = action.label().and_then(|l| sc.widgets.get(l as usize - 1)).cloned();
        let r = self.issue(&sc.snap, action.clone(), Some(sc.analysis), target.as_ref())?;
        if let Some(l) = action.label() {
            sc.covered.insert(l);
        }
        let mut rejected = false;
        if let (Action::Input { text, .. }, Some(w)) = (&action, &target) {
            match verify_text_accepted(self.device, w, text) {
                Ok(accepted) => {
                    rejected = !accepted;
                    if let Some(e) = self.events.last_mut() {
                        e.accepted = Some(accepted);
                    }
                }
                Err(VerifyError::WidgetVanished) => debug!("input target vanished"),
                Err(VerifyError::Device(e)) => return Err(e.into()),
            }
        }
        if r.settled && r.after_id != sc.id {
            self.ui_analyzer()?;
        }
        if rejected && fallback_allowed {
            let label = action.label().expect("input actions carry a label");
            let text = random_fallback_input(InputKind::Numeric, &mut self.rng);
            debug!(label, %text, "input rejected, sending a numeric value");
            return self.perform(sc, Action::Input { label, text }, false);
        }
        Ok(true)
    }

    fn perform_vision(&mut self, sc: &mut Screen) -> Flow<Result<bool, VlmError>> {
        let png = self.device.screenshot()?;
        let mut shot = sc.snap.clone();
        shot.screenshot = Some(Screenshot(png));
        let labeled = match label_widgets(&shot) {
            Ok(l) => l,
            Err(e) => return Ok(Err(VlmError::BadResponse(e.to_string()))),
        };
        let request = build_prompt(&labeled, &sc.snap.component, &self.config.model_hint, vlm_timeout(&self.config));
        let client = self.vlm.as_deref_mut().expect("vision path needs a client");
        let parsed = client.send(&request).and_then(|raw| parse_response(&raw));
        let mut call = VisionCall {
            component: sc.snap.component.clone(),
            analysis: sc.analysis,
            screen: sc.id.clone(),
            steps: 0,
            warnings: Vec::new(),
            error: None,
        };
        let response = match parsed {
            Ok(r) => r,
            Err(e) => {
                call.error = Some(e.to_string());
                self.vision_calls.push(call);
                return Ok(Err(e));
            }
        };
        call.steps = response.steps.len();
        call.warnings = response.warnings.clone();
        self.vision_calls.push(call);
        for action in response.steps {
            if let Some(l) = action.label() {
                if !labeled.label_map.contains_key(&l) {
                    warn!(label = l, "model referenced an unknown label, skipping");
                    continue;
                }
            }
            if !self.perform(sc, action, true)? {
                return Ok(Ok(false));
            }
        }
        Ok(Ok((1..=sc.widgets.len() as u32).all(|l| sc.covered.contains(&l))))
    }

    fn input_text_for(&mut self, widget: &Widget) -> String {
        match self.vlm.as_deref_mut() {
            Some(client) if self.config.vlm_enabled => predict_text_input(client, &widget_attrs(widget), &mut self.rng),
            _ => random_fallback_input(InputKind::Text, &mut self.rng),
        }
    }

    fn perform_non_vision(&mut self, sc: &mut Screen, labels: &[u32]) -> Flow<()> {
        let mut editors = Vec::new();
        let mut taps = Vec::new();
        let mut scrolls = Vec::new();
        for &l in labels {
            let w = &sc.widgets[l as usize - 1];
            let f = &w.flags;
            if f.editable || Widget::is_editor_class(&w.class_name) {
                editors.push(l);
            } else if f.clickable || f.long_clickable || w.inherited_interactive {
                taps.push(l);
            } else if f.scrollable {
                scrolls.push(l);
            }
        }
        let tap_widgets: Vec<Widget> = taps.iter().map(|&l| sc.widgets[l as usize - 1].clone()).collect();
        let order = group_tap_actions(&tap_widgets, sc.snap.screen().height(), &mut self.rng);
        let tap = |i: usize| {
            let w = &tap_widgets[i];
            let label = taps[i];
            if w.flags.clickable || w.inherited_interactive {
                Planned::Act(Action::Tap { label })
            } else {
                Planned::Act(Action::LongPress { label })
            }
        };
        let mut plan: Vec<Planned> = editors.into_iter().map(Planned::Input).collect();
        plan.extend(order.neutral.iter().map(|&i| tap(i)));
        plan.extend(
            scrolls
                .into_iter()
                .map(|label| Planned::Act(Action::Swipe { label, direction: Direction::Up, distance: Distance::Medium })),
        );
        plan.extend(order.positive.iter().map(|&i| tap(i)));
        plan.extend(order.negative.iter().map(|&i| tap(i)));
        plan.extend(order.same_row.iter().map(|&i| tap(i)));

        for item in plan {
            let action = match item {
                Planned::Act(a) => a,
                Planned::Input(label) => {
                    let w = sc.widgets[label as usize - 1].clone();
                    Action::Input { label, text: self.input_text_for(&w) }
                }
            };
            if !self.perform(sc, action, true)? {
                return Ok(());
            }
        }
        Ok(())
    }

    /// MENU, one app switch per launch, then rotate and restore.
    fn finish_screen(&mut self, sc: &mut Screen) -> Flow<()> {
        if !self.perform(sc, Action::TapMenu, false)? {
            return Ok(());
        }
        if !self.app_switched && self.is_aut(&sc.snap.component) {
            self.app_switched = true;
            if !self.pair(sc, Action::TapHome, Action::Resume)? {
                return Ok(());
            }
        }
        self.pair(
            sc,
            Action::Rotate { orientation: Orientation::Landscape },
            Action::Rotate { orientation: Orientation::Portrait },
        )?;
        Ok(())
    }

    /// Two back-to-back actions; a nested analyzer runs if the screen differs
    /// afterwards.
    fn pair(&mut self, sc: &mut Screen, first: Action, second: Action) -> Flow<bool> {
        if !self.ensure_on(sc)? {
            return Ok(false);
        }
        let r1 = self.issue(&sc.snap, first, Some(sc.analysis), None)?;
        let r2 = self.issue(&r1.after, second, Some(sc.analysis), None)?;
        if r2.settled && r2.after_id != sc.id {
            self.ui_analyzer()?;
        }
        Ok(true)
    }
}
