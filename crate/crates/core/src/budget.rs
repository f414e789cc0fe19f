//! Per-component complexity probing and time budget allocation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::device::{self, DeviceAdapter, DeviceError};
use crate::hierarchy::{interactive_widgets, state_signature, Bounds, UiSnapshot};
use crate::manifest::{ComponentDecl, ComponentKind, Intent};

/// Lower bound on any launchable component's share, in seconds.
pub const MIN_FLOOR_SECS: u64 = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BudgetError {
    #[error("no component could be launched")]
    NoLaunchableComponents,
    #[error("total budget must be positive")]
    ZeroBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityAssessment {
    pub component: String,
    pub interactive_count: u32,
    pub menu_item_count: u32,
    pub launch_failed: bool,
}

impl ComplexityAssessment {
    pub fn weight(&self) -> u64 {
        if self.launch_failed {
            0
        } else {
            self.interactive_count as u64 + self.menu_item_count as u64
        }
    }

    fn failed(component: &str) -> Self {
        ComplexityAssessment {
            component: component.to_string(),
            interactive_count: 0,
            menu_item_count: 0,
            launch_failed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub per_component: BTreeMap<String, u64>,
    pub total: u64,
}

impl BudgetPlan {
    pub fn get(&self, component: &str) -> u64 {
        self.per_component.get(component).copied().unwrap_or(0)
    }

    pub fn allocated(&self) -> u64 {
        self.per_component.values().sum()
    }
}

type WidgetKey = (String, String, Bounds);

fn distinct_interactive(snapshot: &UiSnapshot) -> BTreeSet<WidgetKey> {
    interactive_widgets(snapshot)
        .into_iter()
        .map(|w| (w.class_name, w.resource_id, w.bounds))
        .collect()
}

/// Intent used to start a component for probing: its first filter action, or
/// MAIN when it declares none.
pub fn probe_intent(component: &ComponentDecl) -> Intent {
    let mut intent = Intent::explicit(&component.name, "android.intent.action.MAIN");
    if let Some(f) = component.intent_filters.first() {
        if let Some(a) = f.actions.first() {
            intent.action = a.clone();
        }
        intent.categories = f.categories.first().cloned().into_iter().collect();
    }
    intent
}

fn assess_activity(
    device: &mut dyn DeviceAdapter,
    component: &ComponentDecl,
    idle_wait_ms: u64,
) -> Result<ComplexityAssessment, DeviceError> {
    device.launch(&probe_intent(component))?;
    device.wait_ms(idle_wait_ms);
    let main = device::snapshot(device)?;
    if main.component != component.name {
        debug!(component = %component.name, landed = %main.component, "launch did not reach the component");
        return Ok(ComplexityAssessment::failed(&component.name));
    }
    let widgets = distinct_interactive(&main);
    device.press_menu()?;
    device.wait_ms(idle_wait_ms);
    let menu = device::snapshot(device)?;
    let menu_items = if state_signature(&menu) != state_signature(&main) {
        device.press_back()?;
        distinct_interactive(&menu).difference(&widgets).count()
    } else {
        0
    };
    Ok(ComplexityAssessment {
        component: component.name.clone(),
        interactive_count: widgets.len() as u32,
        menu_item_count: menu_items as u32,
        launch_failed: false,
    })
}

/// Launches every activity once and counts its interactive widgets and menu
/// items. Services and receivers have no UI and score zero.
pub fn assess_complexity(
    device: &mut dyn DeviceAdapter,
    components: &[ComponentDecl],
    idle_wait_ms: u64,
) -> Vec<ComplexityAssessment> {
    components
        .iter()
        .map(|c| match c.kind {
            ComponentKind::Activity => assess_activity(device, c, idle_wait_ms).unwrap_or_else(|e| {
                warn!(component = %c.name, error = %e, "assessment failed");
                ComplexityAssessment::failed(&c.name)
            }),
            _ => ComplexityAssessment {
                component: c.name.clone(),
                interactive_count: 0,
                menu_item_count: 0,
                launch_failed: false,
            },
        })
        .collect()
}

/// Splits `total_seconds` in proportion to weight.
///
/// Every launchable component gets at least
/// `min(max(30, total / (10 n)), total / n)` seconds. Components whose
/// proportional share would fall below that floor are pinned to it and the
/// rest is re-split among the others. Rounding leftovers go to the
/// highest-weight components in equal parts; an indivisible remainder stays
/// unspent so equal weights always get equal time.
pub fn allocate_budget(assessments: &[ComplexityAssessment], total_seconds: u64) -> Result<BudgetPlan, BudgetError> {
    if total_seconds == 0 {
        return Err(BudgetError::ZeroBudget);
    }
    let launchable: Vec<usize> = (0..assessments.len()).filter(|&i| !assessments[i].launch_failed).collect();
    if launchable.is_empty() {
        return Err(BudgetError::NoLaunchableComponents);
    }
    let n = launchable.len() as u64;
    let floor = (total_seconds / (10 * n)).max(MIN_FLOOR_SECS).min(total_seconds / n);

    let mut share = vec![0u64; assessments.len()];
    let mut pinned: BTreeSet<usize> = launchable.iter().copied().filter(|&i| assessments[i].weight() == 0).collect();
    loop {
        let remaining = total_seconds - floor * pinned.len() as u64;
        let active: Vec<usize> = launchable.iter().copied().filter(|i| !pinned.contains(i)).collect();
        let weight_sum: u128 = active.iter().map(|&i| assessments[i].weight() as u128).sum();
        let mut newly_pinned = false;
        for &i in &active {
            let s = (remaining as u128 * assessments[i].weight() as u128 / weight_sum) as u64;
            if s < floor {
                pinned.insert(i);
                newly_pinned = true;
            }
            share[i] = s;
        }
        if !newly_pinned {
            break;
        }
    }
    for &i in &pinned {
        share[i] = floor;
    }

    let spent: u64 = share.iter().sum();
    let max_weight = launchable.iter().map(|&i| assessments[i].weight()).max().unwrap_or(0);
    let top: Vec<usize> = launchable.iter().copied().filter(|&i| assessments[i].weight() == max_weight).collect();
    let bonus = (total_seconds - spent) / top.len() as u64;
    for &i in &top {
        share[i] += bonus;
    }

    let per_component = assessments.iter().zip(share).map(|(a, s)| (a.component.clone(), s)).collect();
    Ok(BudgetPlan { per_component, total: total_seconds })
}
