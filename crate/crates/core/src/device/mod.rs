//! The adapter contract between the explorer and a target device, plus the two
//! backends: a deterministic simulated app and a thin ADB shim.

pub mod adb;
pub mod logcat;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Direction, Distance, Orientation};
use crate::hierarchy::{self, interactive_widgets, HierarchyError, UiSnapshot, Widget};
use crate::manifest::Intent;

pub use adb::{AdbDevice, AdbError};
pub use sim::{SimApp, SimAppSpec, SpecError};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error(transparent)]
    Adb(#[from] AdbError),
    #[error("hierarchy dump unusable: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("launch of {0} was refused")]
    LaunchRefused(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashEvent {
    pub exception_type: String,
    pub message: String,
    pub stack_top_frame: String,
    pub fatal: bool,
    pub mono_ms: u64,
}

/// Everything the explorer needs from a target.
///
/// Time is part of the contract: the simulated backend runs on a logical
/// clock, so waits and timeouts cost nothing in tests.
pub trait DeviceAdapter {
    fn launch(&mut self, intent: &Intent) -> Result<(), DeviceError>;
    fn broadcast(&mut self, intent: &Intent) -> Result<(), DeviceError>;
    fn tap(&mut self, widget: &Widget) -> Result<(), DeviceError>;
    fn long_press(&mut self, widget: &Widget) -> Result<(), DeviceError>;
    fn swipe(&mut self, widget: &Widget, direction: Direction, distance: Distance) -> Result<(), DeviceError>;
    fn input_text(&mut self, widget: &Widget, text: &str) -> Result<(), DeviceError>;
    fn press_back(&mut self) -> Result<(), DeviceError>;
    fn press_enter(&mut self) -> Result<(), DeviceError>;
    fn press_menu(&mut self) -> Result<(), DeviceError>;
    fn press_home(&mut self) -> Result<(), DeviceError>;
    /// Brings the app under test back to the foreground without resetting it.
    fn resume_app(&mut self) -> Result<(), DeviceError>;
    fn rotate(&mut self, orientation: Orientation) -> Result<(), DeviceError>;
    fn scroll(&mut self, direction: Direction) -> Result<(), DeviceError>;
    fn dump_hierarchy(&mut self) -> Result<String, DeviceError>;
    fn screenshot(&mut self) -> Result<Vec<u8>, DeviceError>;
    fn current_component(&mut self) -> Result<String, DeviceError>;
    fn drain_crash_events(&mut self) -> Result<Vec<CrashEvent>, DeviceError>;
    fn now_ms(&self) -> u64;
    fn wait_ms(&mut self, ms: u64);
    /// Whether dumps mark overlay windows explicitly.
    fn tags_overlays(&self) -> bool {
        false
    }
}

/// Dump, parse and timestamp the current screen.
pub fn snapshot(device: &mut dyn DeviceAdapter) -> Result<UiSnapshot, DeviceError> {
    let component = device.current_component()?;
    let xml = device.dump_hierarchy()?;
    let mut snap = hierarchy::parse_hierarchy(&xml, &component)?;
    snap.captured_at = device.now_ms();
    Ok(snap)
}

/// Same as [`snapshot`] with the screenshot attached.
pub fn snapshot_with_screenshot(device: &mut dyn DeviceAdapter) -> Result<UiSnapshot, DeviceError> {
    let mut snap = snapshot(device)?;
    snap.screenshot = Some(hierarchy::Screenshot(device.screenshot()?));
    Ok(snap)
}

/// Resolves a 1-based label against the interactive widgets of `snapshot`.
pub fn widget_for_label(snapshot: &UiSnapshot, label: u32) -> Option<Widget> {
    let idx = (label as usize).checked_sub(1)?;
    interactive_widgets(snapshot).into_iter().nth(idx)
}

/// Sends `action` to the device. Label-addressed actions are resolved against
/// `on`; an unresolvable label is a no-op and yields `Ok(false)`.
pub fn execute(device: &mut dyn DeviceAdapter, action: &Action, on: &UiSnapshot) -> Result<bool, DeviceError> {
    let widget = match action.label() {
        Some(label) => match widget_for_label(on, label) {
            Some(w) => Some(w),
            None => return Ok(false),
        },
        None => None,
    };
    match (action, widget) {
        (Action::Tap { .. }, Some(w)) => device.tap(&w)?,
        (Action::LongPress { .. }, Some(w)) => device.long_press(&w)?,
        (Action::Swipe { direction, distance, .. }, Some(w)) => device.swipe(&w, *direction, *distance)?,
        (Action::Input { text, .. }, Some(w)) => device.input_text(&w, text)?,
        (Action::TapBack, _) => device.press_back()?,
        (Action::TapEnter, _) => device.press_enter()?,
        (Action::TapMenu, _) => device.press_menu()?,
        (Action::TapHome, _) => device.press_home()?,
        (Action::Resume, _) => device.resume_app()?,
        (Action::ScrollUp, _) => device.scroll(Direction::Up)?,
        (Action::ScrollDown, _) => device.scroll(Direction::Down)?,
        (Action::Rotate { orientation }, _) => device.rotate(*orientation)?,
        (Action::Launch { intent }, _) => device.launch(intent)?,
        (Action::Broadcast { intent }, _) => device.broadcast(intent)?,
        _ => return Ok(false),
    }
    Ok(true)
}
