//! Declarative description of a simulated app.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::Widget;
use crate::manifest::{ComponentDecl, ComponentKind, IntentFilter};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("sim spec is not valid JSON: {0}")]
    Syntax(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> SpecError {
    SpecError::Invalid { path: path.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashSpec {
    pub exception_type: String,
    #[serde(default)]
    pub message: String,
    /// Top stack frame reported with the crash. Defaults to the component's
    /// click handler.
    #[serde(default)]
    pub frame: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Behavior {
    Navigate { screen: String },
    Popup { screen: String },
    AppendListItem {
        #[serde(default = "default_row_text")]
        text: String,
    },
    Toggle,
    Input {
        #[serde(default)]
        validator: Option<String>,
    },
    Crash(CrashSpec),
    ShowProgress {
        /// `None` keeps the indicator up forever.
        #[serde(default)]
        duration_ms: Option<u64>,
        then: String,
    },
    /// Removes `target` from its screen for the rest of the app's lifetime,
    /// surviving relaunches.
    Delete { target: String },
    /// Dismisses the current window, like the system BACK key.
    Back,
    #[default]
    None,
}

fn default_row_text() -> String {
    "Item".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimWidget {
    pub id: String,
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub content_desc: String,
    #[serde(default)]
    pub hint: String,
    pub bounds: [i32; 4],
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub long_clickable: bool,
    #[serde(default)]
    pub scrollable: bool,
    #[serde(default)]
    pub editable: bool,
    /// Hidden until the screen is turned to landscape.
    #[serde(default)]
    pub reveal_on_rotate: bool,
    #[serde(default)]
    pub behavior: Behavior,
}

impl SimWidget {
    pub fn is_editable(&self) -> bool {
        self.editable || Widget::is_editor_class(&self.class_name)
    }

    pub fn is_interactive(&self) -> bool {
        self.clickable || self.long_clickable || self.scrollable || self.is_editable()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimScreen {
    pub name: String,
    #[serde(default)]
    pub overlay: bool,
    /// Window bounds for overlays; full-screen windows ignore this.
    #[serde(default)]
    pub bounds: Option<[i32; 4]>,
    /// Overlay screen shown when MENU is pressed.
    #[serde(default)]
    pub menu: Option<String>,
    #[serde(default)]
    pub crash_on_rotate: Option<CrashSpec>,
    /// Shows a progress indicator whenever the screen opens, then turns into
    /// another screen.
    #[serde(default)]
    pub progress: Option<ProgressSpec>,
    #[serde(default)]
    pub widgets: Vec<SimWidget>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSpec {
    /// `None` keeps the indicator up forever.
    #[serde(default)]
    pub duration_ms: Option<u64>,
    pub then: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimComponent {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: ComponentKind,
    #[serde(default = "default_true")]
    pub exported: bool,
    /// Component belongs to another package (system dialogs and the like) and
    /// is left out of the app's manifest.
    #[serde(default)]
    pub external: bool,
    #[serde(default)]
    pub package: Option<String>,
    #[serde(default)]
    pub intent_filters: Vec<IntentFilter>,
    #[serde(default)]
    pub entry: Option<String>,
    #[serde(default)]
    pub crash_on_launch: Option<CrashSpec>,
    #[serde(default)]
    pub screens: Vec<SimScreen>,
}

fn default_kind() -> ComponentKind {
    ComponentKind::Activity
}

fn default_true() -> bool {
    true
}

fn default_screen_size() -> [i32; 2] {
    [1080, 1920]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimAppSpec {
    pub package: String,
    #[serde(default = "default_screen_size")]
    pub screen_size: [i32; 2],
    pub components: Vec<SimComponent>,
}

impl SimAppSpec {
    /// Parses and validates a spec document.
    pub fn load(text: &str) -> Result<Self, SpecError> {
        let spec: SimAppSpec =
            serde_json::from_str(text).map_err(|e| SpecError::Syntax(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.package.is_empty() {
            return Err(invalid("package", "must not be empty"));
        }
        if self.components.is_empty() {
            return Err(invalid("components", "at least one component is required"));
        }
        let mut component_names = HashSet::new();
        let mut screens: HashMap<&str, (&SimScreen, usize)> = HashMap::new();
        for (ci, c) in self.components.iter().enumerate() {
            let path = format!("components[{ci}]");
            if c.name.is_empty() {
                return Err(invalid(format!("{path}.name"), "must not be empty"));
            }
            if !component_names.insert(c.name.as_str()) {
                return Err(invalid(format!("{path}.name"), format!("duplicate component {}", c.name)));
            }
            for (si, s) in c.screens.iter().enumerate() {
                if screens.insert(s.name.as_str(), (s, ci)).is_some() {
                    return Err(invalid(
                        format!("{path}.screens[{si}].name"),
                        format!("duplicate screen name {}", s.name),
                    ));
                }
            }
            match c.kind {
                ComponentKind::Activity => {
                    let entry = c
                        .entry
                        .as_deref()
                        .ok_or_else(|| invalid(format!("{path}.entry"), "activities need an entry screen"))?;
                    match c.screens.iter().find(|s| s.name == entry) {
                        None => {
                            return Err(invalid(
                                format!("{path}.entry"),
                                format!("entry screen {entry} is not one of this component's screens"),
                            ))
                        }
                        Some(s) if s.overlay => {
                            return Err(invalid(format!("{path}.entry"), "entry screen cannot be an overlay"))
                        }
                        Some(_) => {}
                    }
                }
                ComponentKind::Service | ComponentKind::Receiver => {
                    if !c.screens.is_empty() {
                        return Err(invalid(format!("{path}.screens"), "only activities have screens"));
                    }
                }
            }
            for (fi, f) in c.intent_filters.iter().enumerate() {
                if f.actions.is_empty() {
                    return Err(invalid(format!("{path}.intent_filters[{fi}].actions"), "at least one action"));
                }
            }
        }

        let screen_ref = |path: String, name: &str, want_overlay: Option<bool>| -> Result<(), SpecError> {
            match screens.get(name) {
                None => Err(invalid(path, format!("unknown screen {name}"))),
                Some((s, _)) => match want_overlay {
                    Some(true) if !s.overlay => Err(invalid(path, format!("screen {name} is not an overlay"))),
                    Some(false) if s.overlay => Err(invalid(path, format!("screen {name} is an overlay"))),
                    _ => Ok(()),
                },
            }
        };

        for (ci, c) in self.components.iter().enumerate() {
            for (si, s) in c.screens.iter().enumerate() {
                let spath = format!("components[{ci}].screens[{si}]");
                if let Some(menu) = &s.menu {
                    screen_ref(format!("{spath}.menu"), menu, Some(true))?;
                }
                if let Some(p) = &s.progress {
                    screen_ref(format!("{spath}.progress.then"), &p.then, Some(false))?;
                    if p.then == s.name {
                        return Err(invalid(format!("{spath}.progress.then"), "a screen cannot load into itself"));
                    }
                }
                if let Some(b) = s.bounds {
                    check_bounds(&format!("{spath}.bounds"), b)?;
                }
                let mut ids = HashSet::new();
                for (wi, w) in s.widgets.iter().enumerate() {
                    let wpath = format!("{spath}.widgets[{wi}]");
                    if w.id.is_empty() || w.id.contains(char::is_whitespace) {
                        return Err(invalid(format!("{wpath}.id"), "ids must be non-empty without spaces"));
                    }
                    if !ids.insert(w.id.as_str()) {
                        return Err(invalid(format!("{wpath}.id"), format!("duplicate widget id {}", w.id)));
                    }
                    check_bounds(&format!("{wpath}.bounds"), w.bounds)?;
                    let bpath = format!("{wpath}.behavior");
                    match &w.behavior {
                        Behavior::Navigate { screen } => screen_ref(format!("{bpath}.screen"), screen, Some(false))?,
                        Behavior::Popup { screen } => screen_ref(format!("{bpath}.screen"), screen, Some(true))?,
                        Behavior::ShowProgress { then, .. } => screen_ref(format!("{bpath}.then"), then, Some(false))?,
                        Behavior::Input { validator } => {
                            if !w.is_editable() {
                                return Err(invalid(bpath, "input behavior requires an editable widget"));
                            }
                            if let Some(v) = validator {
                                regex::Regex::new(&format!("^(?:{v})$"))
                                    .map_err(|e| invalid(format!("{bpath}.validator"), e.to_string()))?;
                            }
                        }
                        Behavior::Delete { target }
                            if !s.widgets.iter().any(|o| &o.id == target) => {
                                return Err(invalid(
                                    format!("{bpath}.target"),
                                    format!("no widget {target} on screen {}", s.name),
                                ));
                            }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Manifest-equivalent view of the app: every non-external component.
    pub fn component_decls(&self) -> Vec<ComponentDecl> {
        self.components
            .iter()
            .filter(|c| !c.external)
            .map(|c| ComponentDecl {
                name: c.name.clone(),
                kind: c.kind,
                exported: c.exported,
                intent_filters: c.intent_filters.clone(),
            })
            .collect()
    }
}

fn check_bounds(path: &str, b: [i32; 4]) -> Result<(), SpecError> {
    if b[0] > b[2] || b[1] > b[3] {
        return Err(invalid(path, "bounds must satisfy x1<=x2 and y1<=y2"));
    }
    Ok(())
}
