//! UI states, transitions, the per-episode transition record and replay.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::device::{self, DeviceAdapter, DeviceError};
use crate::hierarchy::{state_signature, StateId, UiSnapshot, Widget};
use crate::manifest::Intent;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("cannot replay an empty transition record")]
    EmptyRecord,
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// A screen as seen by the explorer: its widgets and their attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct UiState {
    pub id: StateId,
    pub component: String,
    pub widgets: Vec<Widget>,
    /// Attribute map per widget, aligned with `widgets`.
    pub properties: Vec<BTreeMap<String, String>>,
    pub overlay: bool,
}

impl UiState {
    pub fn from_snapshot(snapshot: &UiSnapshot) -> Self {
        let properties = snapshot
            .widgets
            .iter()
            .map(|w| {
                let mut p = BTreeMap::new();
                p.insert("class".to_string(), w.class_name.clone());
                p.insert("resource-id".to_string(), w.resource_id.clone());
                p.insert("text".to_string(), w.text.clone());
                p.insert("content-desc".to_string(), w.content_desc.clone());
                p.insert("bounds".to_string(), w.bounds.to_string());
                p.insert("checked".to_string(), w.checked.to_string());
                p.insert("clickable".to_string(), w.flags.clickable.to_string());
                p.insert("editable".to_string(), w.flags.editable.to_string());
                p
            })
            .collect();
        UiState {
            id: state_signature(snapshot),
            component: snapshot.component.clone(),
            widgets: snapshot.widgets.clone(),
            properties,
            overlay: snapshot.overlay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateId,
    pub action: Action,
    pub to: StateId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// State before `action` was issued.
    pub state: UiState,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub origin: Intent,
    pub steps: Vec<Step>,
}

impl TransitionRecord {
    pub fn new(origin: Intent) -> Self {
        TransitionRecord { origin, steps: Vec::new() }
    }

    pub fn push(&mut self, state: UiState, action: Action) {
        self.steps.push(Step { state, action });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Prefix ending with step `last` (inclusive).
    pub fn prefix(&self, last: usize) -> TransitionRecord {
        TransitionRecord { origin: self.origin.clone(), steps: self.steps[..=last.min(self.steps.len() - 1)].to_vec() }
    }

    pub fn truncate(&mut self, len: usize) {
        self.steps.truncate(len);
    }
}

pub fn record_step(mut record: TransitionRecord, state: UiState, action: Action) -> TransitionRecord {
    record.push(state, action);
    record
}

/// One action re-issued during a replay, including the relaunch itself.
pub struct ReplayedAction<'a> {
    pub action: &'a Action,
    pub issued_at: u64,
    pub before_component: &'a str,
    pub before: Option<&'a UiSnapshot>,
    pub after: &'a UiSnapshot,
}

/// Relaunches the origin intent, re-issues every step but the last, and
/// reports whether the live screen matches the last step's state.
pub fn replay(record: &TransitionRecord, device: &mut dyn DeviceAdapter) -> Result<bool, StateError> {
    replay_observed(record, device, 0, &mut |_| ControlFlow::Continue(()))
}

/// [`replay`] with a settle wait after every action and a callback for each
/// re-issued action. A `Break` from the callback stops the replay early and
/// counts as not reached.
pub fn replay_observed(
    record: &TransitionRecord,
    device: &mut dyn DeviceAdapter,
    settle_ms: u64,
    observe: &mut dyn FnMut(ReplayedAction<'_>) -> ControlFlow<()>,
) -> Result<bool, StateError> {
    let (target, prior) = record.steps.split_last().ok_or(StateError::EmptyRecord)?;
    let launch = Action::Launch { intent: record.origin.clone() };
    let before_component = device.current_component()?;
    let issued_at = device.now_ms();
    device.launch(&record.origin)?;
    device.wait_ms(settle_ms);
    let mut live = device::snapshot(device)?;
    if observe(ReplayedAction { action: &launch, issued_at, before_component: &before_component, before: None, after: &live })
        .is_break()
    {
        return Ok(false);
    }
    for step in prior {
        let issued_at = device.now_ms();
        device::execute(device, &step.action, &live)?;
        device.wait_ms(settle_ms);
        let after = device::snapshot(device)?;
        let flow = observe(ReplayedAction {
            action: &step.action,
            issued_at,
            before_component: &live.component,
            before: Some(&live),
            after: &after,
        });
        if flow.is_break() {
            return Ok(false);
        }
        live = after;
    }
    Ok(state_signature(&live) == target.state.id)
}

pub fn ui_items_changed(prev: &StateId, cur: &StateId) -> bool {
    prev != cur
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateChange {
    None,
    SameComponentNewWidgets,
    PopupOverlay,
    ComponentSwitch,
}

/// Classifies the effect of an action. `cur_overlay` is whether the new
/// screen is an overlay window, either tagged by the device or inferred with
/// [`looks_like_overlay`].
pub fn classify_state_change(
    prev_component: &str,
    prev: &StateId,
    cur_component: &str,
    cur: &StateId,
    cur_overlay: bool,
) -> StateChange {
    if prev_component != cur_component {
        StateChange::ComponentSwitch
    } else if prev == cur {
        StateChange::None
    } else if cur_overlay {
        StateChange::PopupOverlay
    } else {
        StateChange::SameComponentNewWidgets
    }
}

/// Overlay inference for devices that do not tag overlay windows: the new
/// root does not cover the screen, or the app's own screen lost widgets
/// while the activity stayed the same.
pub fn looks_like_overlay(prev: &UiSnapshot, cur: &UiSnapshot, aut_package: &str, screen: &crate::hierarchy::Bounds) -> bool {
    let root = cur.screen();
    if root.has_area() && (root.width() < screen.width() || root.height() < screen.height()) {
        return true;
    }
    if prev.component != cur.component {
        return false;
    }
    let same_app = cur.roots().next().is_some_and(|r| r.package == aut_package);
    if !same_app {
        return false;
    }
    let key = |w: &Widget| (w.class_name.clone(), w.resource_id.clone(), w.bounds);
    let mut have: BTreeMap<_, usize> = BTreeMap::new();
    for w in &cur.widgets {
        *have.entry(key(w)).or_default() += 1;
    }
    for w in &prev.widgets {
        match have.get_mut(&key(w)) {
            Some(n) if *n > 0 => *n -= 1,
            _ => return true,
        }
    }
    false
}

/// Components whose analysis is in progress, each with its state at push
/// time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UiStack {
    entries: Vec<(String, StateId)>,
}

impl UiStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, component: &str) -> bool {
        self.entries.iter().any(|(c, _)| c == component)
    }

    /// Pushes unless the component is already present.
    pub fn push(&mut self, component: &str, state: StateId) -> bool {
        if self.contains(component) {
            return false;
        }
        self.entries.push((component.to_string(), state));
        true
    }

    pub fn pop(&mut self) -> Option<(String, StateId)> {
        self.entries.pop()
    }

    pub fn top(&self) -> Option<(&str, &StateId)> {
        self.entries.last().map(|(c, s)| (c.as_str(), s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, StateId)] {
        &self.entries
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitCounter {
    counts: BTreeMap<String, u32>,
}

impl VisitCounter {
    pub fn get(&self, component: &str) -> u32 {
        self.counts.get(component).copied().unwrap_or(0)
    }

    pub fn increment(&mut self, component: &str) -> u32 {
        let c = self.counts.entry(component.to_string()).or_default();
        *c += 1;
        *c
    }

    pub fn counts(&self) -> &BTreeMap<String, u32> {
        &self.counts
    }
}

/// Summary row kept per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateInfo {
    pub component: String,
    pub widget_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplorationGraph {
    states: BTreeMap<StateId, StateInfo>,
    transitions: Vec<Transition>,
    seen: HashSet<Transition>,
}

impl ExplorationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state(&mut self, state: &UiState) -> bool {
        if self.states.contains_key(&state.id) {
            return false;
        }
        self.states.insert(
            state.id.clone(),
            StateInfo { component: state.component.clone(), widget_count: state.widgets.len() },
        );
        true
    }

    /// Adds both endpoints and the edge; duplicate edges are ignored.
    pub fn add_transition(&mut self, from: &UiState, action: &Action, to: &UiState) -> bool {
        self.add_state(from);
        self.add_state(to);
        let t = Transition { from: from.id.clone(), action: action.clone(), to: to.id.clone() };
        if !self.seen.insert(t.clone()) {
            return false;
        }
        self.transitions.push(t);
        true
    }

    pub fn states(&self) -> &BTreeMap<StateId, StateInfo> {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_ids_for(&self, component: &str) -> BTreeSet<StateId> {
        self.states.iter().filter(|(_, i)| i.component == component).map(|(id, _)| id.clone()).collect()
    }

    /// One `S` line per state and one `T` line per transition, tab-separated.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, info) in &self.states {
            let _ = writeln!(out, "S\t{id}\t{}\t{}", info.component, info.widget_count);
        }
        for t in &self.transitions {
            let _ = writeln!(out, "T\t{}\t{}\t{}", t.from, t.action, t.to);
        }
        out
    }
}
