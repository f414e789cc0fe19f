//! Deterministic in-process app used as a device backend in tests and demos.
//!
//! The app is described by a [`SimAppSpec`]. Time is a logical clock that only
//! moves when an action is issued or a wait is requested.

mod spec;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use regex::Regex;

pub use spec::{Behavior, CrashSpec, ProgressSpec, SimAppSpec, SimComponent, SimScreen, SimWidget, SpecError};

use super::{CrashEvent, DeviceAdapter, DeviceError};
use crate::action::{Direction, Distance, Orientation};
use crate::hierarchy::{draw::render_snapshot, serialize_hierarchy, Bounds, UiSnapshot, Widget, WidgetFlags};
use crate::manifest::{ComponentDecl, ComponentKind, Intent};

pub const LAUNCHER_COMPONENT: &str = "com.android.launcher3.Launcher";
const LAUNCHER_PACKAGE: &str = "com.android.launcher3";

/// Logical cost of one input event.
pub const ACTION_MS: u64 = 100;
/// Logical cost of starting an activity or service.
pub const LAUNCH_MS: u64 = 400;

const ROW_HEIGHT: i32 = 100;
const DEFAULT_OVERLAY: [i32; 4] = [90, 600, 990, 1320];

#[derive(Debug, Clone)]
struct Loading {
    until: Option<u64>,
    then: String,
}

/// One live window on the back stack.
#[derive(Debug, Clone)]
struct Instance {
    component: usize,
    screen: usize,
    texts: BTreeMap<String, String>,
    checked: BTreeSet<String>,
    rows: Vec<String>,
    revealed: bool,
    loading: Option<Loading>,
}

#[derive(Debug, Clone)]
pub struct SimApp {
    spec: Arc<SimAppSpec>,
    clock: u64,
    stack: Vec<Instance>,
    in_foreground: bool,
    rotation: Orientation,
    crashes: Vec<CrashEvent>,
    /// Widgets removed by a delete behavior, as (screen, widget id).
    deleted: BTreeSet<(String, String)>,
    validators: Arc<BTreeMap<String, Regex>>,
    pub received_broadcasts: Vec<Intent>,
    pub started_services: Vec<String>,
    pub launches: Vec<Intent>,
}

impl SimApp {
    pub fn new(spec: SimAppSpec) -> Result<Self, SpecError> {
        spec.validate()?;
        let mut validators = BTreeMap::new();
        for c in &spec.components {
            for s in &c.screens {
                for w in &s.widgets {
                    if let Behavior::Input { validator: Some(v) } = &w.behavior {
                        let re = Regex::new(&format!("^(?:{v})$")).expect("validated above");
                        validators.insert(format!("{}/{}", s.name, w.id), re);
                    }
                }
            }
        }
        Ok(SimApp {
            spec: Arc::new(spec),
            clock: 0,
            stack: Vec::new(),
            in_foreground: false,
            rotation: Orientation::Portrait,
            crashes: Vec::new(),
            deleted: BTreeSet::new(),
            validators: Arc::new(validators),
            received_broadcasts: Vec::new(),
            started_services: Vec::new(),
            launches: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        Self::new(SimAppSpec::load(text)?)
    }

    pub fn spec(&self) -> &SimAppSpec {
        &self.spec
    }

    pub fn package(&self) -> &str {
        &self.spec.package
    }

    /// Manifest-equivalent component list.
    pub fn manifest(&self) -> Vec<ComponentDecl> {
        self.spec.component_decls()
    }

    /// Name of the screen in the foreground, `None` on the launcher.
    pub fn current_screen(&self) -> Option<&str> {
        self.top().map(|i| self.screen_of(i).name.as_str())
    }

    /// Everything that determines future behavior except the clock and the
    /// logs. Two apps with equal keys react identically to the same input.
    pub fn state_key(&self) -> String {
        let stack: Vec<String> = self
            .stack
            .iter()
            .map(|i| {
                let loading = i.loading.as_ref().map(|l| (l.until.map(|u| u.saturating_sub(self.clock)), &l.then));
                format!("{}/{}/{:?}/{:?}/{:?}/{}/{:?}", i.component, i.screen, i.texts, i.checked, i.rows, i.revealed, loading)
            })
            .collect();
        format!("{stack:?}|{}|{:?}|{:?}", self.in_foreground, self.rotation, self.deleted)
    }

    pub fn is_loading(&self) -> bool {
        self.top().is_some_and(|i| i.loading.is_some())
    }

    fn top(&self) -> Option<&Instance> {
        if self.in_foreground {
            self.stack.last()
        } else {
            None
        }
    }

    fn screen_of(&self, inst: &Instance) -> &SimScreen {
        &self.spec.components[inst.component].screens[inst.screen]
    }

    fn find_screen(&self, name: &str) -> Option<(usize, usize)> {
        self.spec.components.iter().enumerate().find_map(|(ci, c)| {
            c.screens.iter().position(|s| s.name == name).map(|si| (ci, si))
        })
    }

    fn instance(&self, name: &str) -> Instance {
        let (component, screen) = self.find_screen(name).expect("screen references are validated");
        let loading = self.spec.components[component].screens[screen]
            .progress
            .as_ref()
            .map(|p| Loading { until: p.duration_ms.map(|d| self.clock + d), then: p.then.clone() });
        Instance {
            component,
            screen,
            texts: BTreeMap::new(),
            checked: BTreeSet::new(),
            rows: Vec::new(),
            revealed: false,
            loading,
        }
    }

    fn component_index(&self, name: &str) -> Option<usize> {
        self.spec.components.iter().position(|c| c.name == name)
    }

    fn package_of(&self, ci: usize) -> &str {
        self.spec.components[ci].package.as_deref().unwrap_or(&self.spec.package)
    }

    /// Resolves a finished progress window into its follow-up screen.
    fn settle(&mut self) {
        let clock = self.clock;
        while let Some(Loading { until: Some(until), then }) = self.stack.last().and_then(|t| t.loading.clone()) {
            if clock < until {
                break;
            }
            let next = self.instance(&then);
            *self.stack.last_mut().expect("non-empty") = next;
        }
    }

    fn crash(&mut self, component: usize, spec: &CrashSpec) {
        let cname = self.spec.components[component].name.clone();
        self.crashes.push(CrashEvent {
            exception_type: spec.exception_type.clone(),
            message: spec.message.clone(),
            stack_top_frame: spec.frame.clone().unwrap_or_else(|| format!("{cname}.onClick")),
            fatal: true,
            mono_ms: self.clock,
        });
        if self.spec.components[component].kind != ComponentKind::Activity {
            return;
        }
        // the process dies; the system restarts the bottom activity of the task
        match self.stack.first().map(|i| i.component) {
            Some(bottom) if self.spec.components[bottom].kind == ComponentKind::Activity => {
                let entry = self.spec.components[bottom].entry.clone().expect("activities have entries");
                self.stack = vec![self.instance(&entry)];
            }
            _ => {
                self.stack.clear();
                self.in_foreground = false;
            }
        }
    }

    fn visible_widgets<'a>(&'a self, inst: &'a Instance) -> impl Iterator<Item = &'a SimWidget> + 'a {
        let screen = self.screen_of(inst);
        screen.widgets.iter().filter(move |w| {
            !self.deleted.contains(&(screen.name.clone(), w.id.clone())) && (!w.reveal_on_rotate || inst.revealed)
        })
    }

    fn resource_id(&self, ci: usize, id: &str) -> String {
        format!("{}:id/{}", self.package_of(ci), id)
    }

    fn render(&self) -> UiSnapshot {
        let [sw, sh] = self.spec.screen_size;
        let Some(inst) = self.top() else {
            return launcher_snapshot(sw, sh, self.rotation);
        };
        let screen = self.screen_of(inst);
        let package = self.package_of(inst.component).to_string();
        let root_bounds = match (screen.overlay, screen.bounds) {
            (true, Some(b)) => b,
            (true, None) => DEFAULT_OVERLAY,
            (false, _) => [0, 0, sw, sh],
        };
        let mut widgets = vec![Widget {
            index: 0,
            class_name: "android.widget.FrameLayout".into(),
            text: String::new(),
            resource_id: String::new(),
            content_desc: String::new(),
            package: package.clone(),
            hint: String::new(),
            bounds: Bounds::new(root_bounds[0], root_bounds[1], root_bounds[2], root_bounds[3]),
            flags: WidgetFlags { enabled: true, ..Default::default() },
            checked: false,
            inherited_interactive: false,
            parent: None,
            children: Vec::new(),
        }];
        let push = |widgets: &mut Vec<Widget>, mut w: Widget| {
            let me = widgets.len();
            w.index = widgets[0].children.len() as u32;
            w.parent = Some(0);
            widgets[0].children.push(me);
            widgets.push(w);
        };
        if inst.loading.is_some() {
            let (cx, cy) = (sw / 2, sh / 2);
            let bar = Widget {
                class_name: "android.widget.ProgressBar".into(),
                bounds: Bounds::new(cx - 60, cy - 60, cx + 60, cy + 60),
                ..widgets[0].clone()
            };
            let label = Widget {
                class_name: "android.widget.TextView".into(),
                text: "Loading...".into(),
                bounds: Bounds::new(0, cy + 80, sw, cy + 160),
                ..widgets[0].clone()
            };
            push(&mut widgets, clear_links(bar));
            push(&mut widgets, clear_links(label));
        } else {
            let mut bottom = root_bounds[1];
            for sw_ in self.visible_widgets(inst) {
                bottom = bottom.max(sw_.bounds[3]);
                let text = inst.texts.get(&sw_.id).cloned().unwrap_or_else(|| sw_.text.clone());
                push(
                    &mut widgets,
                    Widget {
                        index: 0,
                        class_name: sw_.class_name.clone(),
                        text,
                        resource_id: self.resource_id(inst.component, &sw_.id),
                        content_desc: sw_.content_desc.clone(),
                        package: package.clone(),
                        hint: sw_.hint.clone(),
                        bounds: Bounds::new(sw_.bounds[0], sw_.bounds[1], sw_.bounds[2], sw_.bounds[3]),
                        flags: WidgetFlags {
                            clickable: sw_.clickable,
                            long_clickable: sw_.long_clickable,
                            scrollable: sw_.scrollable,
                            focusable: sw_.clickable || sw_.is_editable(),
                            enabled: true,
                            editable: sw_.is_editable(),
                        },
                        checked: inst.checked.contains(&sw_.id),
                        inherited_interactive: false,
                        parent: None,
                        children: Vec::new(),
                    },
                );
            }
            for (i, row) in inst.rows.iter().enumerate() {
                let y = bottom + i as i32 * ROW_HEIGHT;
                let w = Widget {
                    class_name: "android.widget.TextView".into(),
                    text: row.clone(),
                    resource_id: self.resource_id(inst.component, "row"),
                    bounds: Bounds::new(root_bounds[0], y, root_bounds[2], y + ROW_HEIGHT),
                    ..widgets[0].clone()
                };
                push(&mut widgets, clear_links(w));
            }
        }
        UiSnapshot {
            component: self.spec.components[inst.component].name.clone(),
            widgets,
            overlay: screen.overlay,
            rotation: rotation_code(self.rotation),
            screenshot: None,
            captured_at: self.clock,
        }
    }

    /// Finds the spec widget addressed by a dumped widget: by resource id
    /// first, then by hit-testing its center.
    fn resolve(&self, target: &Widget) -> Option<SimWidget> {
        let inst = self.top()?;
        if inst.loading.is_some() {
            return None;
        }
        let prefix = format!("{}:id/", self.package_of(inst.component));
        if let Some(id) = target.resource_id.strip_prefix(&prefix) {
            if let Some(w) = self.visible_widgets(inst).find(|w| w.id == id) {
                return Some(w.clone());
            }
        }
        let (x, y) = target.bounds.center();
        self.visible_widgets(inst)
            .filter(|w| w.is_interactive() && w.bounds[0] <= x && x <= w.bounds[2] && w.bounds[1] <= y && y <= w.bounds[3])
            .last()
            .cloned()
    }

    fn fire(&mut self, widget: &SimWidget) {
        let Some(inst) = self.top() else { return };
        let component = inst.component;
        let screen_name = self.screen_of(inst).name.clone();
        match widget.behavior.clone() {
            Behavior::Navigate { screen } | Behavior::Popup { screen } => {
                let next = self.instance(&screen);
                self.stack.push(next);
            }
            Behavior::AppendListItem { text } => {
                let top = self.stack.last_mut().expect("foreground");
                let n = top.rows.len() + 1;
                top.rows.push(format!("{text} {n}"));
            }
            Behavior::Toggle => {
                let top = self.stack.last_mut().expect("foreground");
                if !top.checked.remove(&widget.id) {
                    top.checked.insert(widget.id.clone());
                }
            }
            Behavior::Crash(spec) => self.crash(component, &spec),
            Behavior::ShowProgress { duration_ms, then } => {
                let mut loading = self.instance(&screen_name);
                loading.loading = Some(Loading { until: duration_ms.map(|d| self.clock + d), then });
                self.stack.push(loading);
            }
            Behavior::Delete { target } => {
                self.deleted.insert((screen_name, target));
            }
            Behavior::Back => self.back(),
            Behavior::Input { .. } | Behavior::None => {}
        }
    }

    fn back(&mut self) {
        if !self.in_foreground {
            return;
        }
        self.stack.pop();
        if self.stack.is_empty() {
            self.in_foreground = false;
        }
    }

    fn act(&mut self) -> Option<()> {
        self.clock += ACTION_MS;
        self.settle();
        self.top().map(|_| ())
    }

    fn start_activity(&mut self, ci: usize, intent: &Intent) -> Result<(), DeviceError> {
        let comp = &self.spec.components[ci];
        if let Some(spec) = comp.crash_on_launch.clone() {
            self.stack.clear();
            self.in_foreground = false;
            self.crash(ci, &spec);
            return Ok(());
        }
        let entry = comp.entry.clone().expect("activities have entries");
        self.stack = vec![self.instance(&entry)];
        self.in_foreground = true;
        self.launches.push(intent.clone());
        Ok(())
    }

    fn launcher_activity(&self) -> Option<usize> {
        let activities = || {
            self.spec
                .components
                .iter()
                .enumerate()
                .filter(|(_, c)| c.kind == ComponentKind::Activity && !c.external)
        };
        activities()
            .find(|(_, c)| {
                c.intent_filters.iter().any(|f| f.categories.iter().any(|k| k == "android.intent.category.LAUNCHER"))
            })
            .or_else(|| activities().next())
            .map(|(i, _)| i)
    }
}

fn clear_links(mut w: Widget) -> Widget {
    w.parent = None;
    w.children = Vec::new();
    w
}

fn rotation_code(o: Orientation) -> u8 {
    match o {
        Orientation::Portrait => 0,
        Orientation::Landscape => 1,
    }
}

fn launcher_snapshot(sw: i32, sh: i32, rotation: Orientation) -> UiSnapshot {
    let root = Widget {
        index: 0,
        class_name: "android.widget.FrameLayout".into(),
        text: String::new(),
        resource_id: String::new(),
        content_desc: String::new(),
        package: LAUNCHER_PACKAGE.into(),
        hint: String::new(),
        bounds: Bounds::new(0, 0, sw, sh),
        flags: WidgetFlags { enabled: true, ..Default::default() },
        checked: false,
        inherited_interactive: false,
        parent: None,
        children: vec![1],
    };
    let label = Widget {
        text: "Home".into(),
        class_name: "android.widget.TextView".into(),
        bounds: Bounds::new(0, sh / 2, sw, sh / 2 + 100),
        parent: Some(0),
        children: Vec::new(),
        ..root.clone()
    };
    UiSnapshot {
        component: LAUNCHER_COMPONENT.into(),
        widgets: vec![root, label],
        overlay: false,
        rotation: rotation_code(rotation),
        screenshot: None,
        captured_at: 0,
    }
}

impl DeviceAdapter for SimApp {
    fn launch(&mut self, intent: &Intent) -> Result<(), DeviceError> {
        self.clock += LAUNCH_MS;
        let ci = match &intent.target {
            Some(t) => self.component_index(t).ok_or_else(|| DeviceError::UnknownComponent(t.clone()))?,
            None => self
                .spec
                .components
                .iter()
                .position(|c| c.kind == ComponentKind::Activity && c.intent_filters.iter().any(|f| intent.satisfies(f)))
                .ok_or_else(|| DeviceError::UnknownComponent(intent.action.clone()))?,
        };
        let comp = &self.spec.components[ci];
        if !comp.exported {
            return Err(DeviceError::LaunchRefused(comp.name.clone()));
        }
        match comp.kind {
            ComponentKind::Activity => self.start_activity(ci, intent),
            ComponentKind::Service => {
                self.started_services.push(comp.name.clone());
                if let Some(spec) = comp.crash_on_launch.clone() {
                    self.crash(ci, &spec);
                }
                Ok(())
            }
            ComponentKind::Receiver => self.broadcast(intent),
        }
    }

    fn broadcast(&mut self, intent: &Intent) -> Result<(), DeviceError> {
        self.clock += ACTION_MS;
        self.received_broadcasts.push(intent.clone());
        let targets: Vec<usize> = self
            .spec
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ComponentKind::Receiver && c.intent_filters.iter().any(|f| f.actions.contains(&intent.action)))
            .map(|(i, _)| i)
            .collect();
        for ci in targets {
            if let Some(spec) = self.spec.components[ci].crash_on_launch.clone() {
                self.crash(ci, &spec);
            }
        }
        Ok(())
    }

    fn tap(&mut self, widget: &Widget) -> Result<(), DeviceError> {
        if self.act().is_some() {
            if let Some(w) = self.resolve(widget).filter(|w| w.clickable) {
                self.fire(&w);
            }
        }
        Ok(())
    }

    fn long_press(&mut self, widget: &Widget) -> Result<(), DeviceError> {
        if self.act().is_some() {
            if let Some(w) = self.resolve(widget).filter(|w| w.long_clickable) {
                self.fire(&w);
            }
        }
        Ok(())
    }

    fn swipe(&mut self, widget: &Widget, _direction: Direction, _distance: Distance) -> Result<(), DeviceError> {
        if self.act().is_some() {
            if let Some(w) = self.resolve(widget).filter(|w| w.scrollable) {
                self.fire(&w);
            }
        }
        Ok(())
    }

    fn input_text(&mut self, widget: &Widget, text: &str) -> Result<(), DeviceError> {
        if self.act().is_none() {
            return Ok(());
        }
        let Some(w) = self.resolve(widget).filter(|w| w.is_editable()) else {
            return Ok(());
        };
        let screen = self.current_screen().expect("foreground").to_string();
        let accepted = self
            .validators
            .get(&format!("{screen}/{}", w.id))
            .is_none_or(|re| re.is_match(text));
        if accepted {
            let top = self.stack.last_mut().expect("foreground");
            top.texts.insert(w.id.clone(), text.to_string());
        }
        Ok(())
    }

    fn press_back(&mut self) -> Result<(), DeviceError> {
        self.act();
        self.back();
        Ok(())
    }

    fn press_enter(&mut self) -> Result<(), DeviceError> {
        self.act();
        Ok(())
    }

    fn press_menu(&mut self) -> Result<(), DeviceError> {
        if self.act().is_some() {
            let top = self.top().expect("foreground");
            if top.loading.is_none() {
                if let Some(menu) = self.screen_of(top).menu.clone() {
                    let inst = self.instance(&menu);
                    self.stack.push(inst);
                }
            }
        }
        Ok(())
    }

    fn press_home(&mut self) -> Result<(), DeviceError> {
        self.act();
        self.in_foreground = false;
        Ok(())
    }

    fn resume_app(&mut self) -> Result<(), DeviceError> {
        self.clock += ACTION_MS;
        if !self.stack.is_empty() {
            self.in_foreground = true;
            self.settle();
            return Ok(());
        }
        match self.launcher_activity() {
            Some(ci) => {
                let name = self.spec.components[ci].name.clone();
                self.start_activity(ci, &Intent::explicit(&name, "android.intent.action.MAIN"))
            }
            None => Ok(()),
        }
    }

    fn rotate(&mut self, orientation: Orientation) -> Result<(), DeviceError> {
        self.act();
        if self.rotation == orientation {
            return Ok(());
        }
        self.rotation = orientation;
        if orientation != Orientation::Landscape || self.top().is_none() {
            return Ok(());
        }
        let top = self.stack.last_mut().expect("foreground");
        top.revealed = true;
        let (ci, si) = (top.component, top.screen);
        if let Some(spec) = self.spec.components[ci].screens[si].crash_on_rotate.clone() {
            self.crash(ci, &spec);
        }
        Ok(())
    }

    fn scroll(&mut self, _direction: Direction) -> Result<(), DeviceError> {
        if self.act().is_some() {
            let inst = self.top().expect("foreground");
            let target = match inst.loading {
                None => self.visible_widgets(inst).find(|w| w.scrollable).cloned(),
                Some(_) => None,
            };
            if let Some(w) = target {
                self.fire(&w);
            }
        }
        Ok(())
    }

    fn dump_hierarchy(&mut self) -> Result<String, DeviceError> {
        self.settle();
        Ok(serialize_hierarchy(&self.render()))
    }

    fn screenshot(&mut self) -> Result<Vec<u8>, DeviceError> {
        self.settle();
        Ok(render_snapshot(&self.render()))
    }

    fn current_component(&mut self) -> Result<String, DeviceError> {
        self.settle();
        Ok(self.render().component)
    }

    fn drain_crash_events(&mut self) -> Result<Vec<CrashEvent>, DeviceError> {
        Ok(std::mem::take(&mut self.crashes))
    }

    fn now_ms(&self) -> u64 {
        self.clock
    }

    fn wait_ms(&mut self, ms: u64) {
        self.clock += ms;
        self.settle();
    }

    fn tags_overlays(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests;
