//! UIAutomator-style hierarchy dumps: parsing, widget extraction and state
//! signatures.

pub mod draw;
mod label;

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use label::{label_widgets, LabeledScreenshot};

/// Class-name suffixes that denote a text-entry widget.
pub const EDITOR_SUFFIXES: [&str; 3] = ["EditText", "AutoCompleteTextView", "MultiAutoCompleteTextView"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("malformed hierarchy: {0}")]
    MalformedHierarchy(String),
    #[error("hierarchy contains no nodes")]
    EmptyHierarchy,
    #[error("snapshot has no screenshot")]
    NoScreenshot,
    #[error("screenshot could not be decoded: {0}")]
    BadScreenshot(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bounds {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl Bounds {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Self {
        Bounds { x1: x1.min(x2), y1: y1.min(y2), x2: x1.max(x2), y2: y1.max(y2) }
    }

    pub fn width(&self) -> i32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i32 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn has_area(&self) -> bool {
        self.width() > 0 && self.height() > 0
    }

    pub fn intersects(&self, other: &Bounds) -> bool {
        self.x1 < other.x2 && other.x1 < self.x2 && self.y1 < other.y2 && other.y1 < self.y2
    }

    /// Parses the bit-exact `[x1,y1][x2,y2]` form.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let rest = s.strip_prefix('[')?;
        let (first, rest) = rest.split_once("][")?;
        let second = rest.strip_suffix(']')?;
        let pair = |p: &str| -> Option<(i32, i32)> {
            let (a, b) = p.split_once(',')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        };
        let (x1, y1) = pair(first)?;
        let (x2, y2) = pair(second)?;
        Some(Bounds::new(x1, y1, x2, y2))
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}][{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WidgetFlags {
    pub clickable: bool,
    pub long_clickable: bool,
    pub scrollable: bool,
    pub focusable: bool,
    pub enabled: bool,
    pub editable: bool,
}

impl WidgetFlags {
    fn bits(&self) -> u8 {
        (self.clickable as u8)
            | (self.long_clickable as u8) << 1
            | (self.scrollable as u8) << 2
            | (self.focusable as u8) << 3
            | (self.enabled as u8) << 4
            | (self.editable as u8) << 5
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widget {
    pub index: u32,
    pub class_name: String,
    pub text: String,
    pub resource_id: String,
    pub content_desc: String,
    pub package: String,
    /// Placeholder text, when the dumper reports one.
    #[serde(default)]
    pub hint: String,
    pub bounds: Bounds,
    pub flags: WidgetFlags,
    #[serde(default)]
    pub checked: bool,
    #[serde(default)]
    pub inherited_interactive: bool,
    /// Position of the parent in the snapshot's flattened list.
    #[serde(default)]
    pub parent: Option<usize>,
    #[serde(default)]
    pub children: Vec<usize>,
}

impl Widget {
    pub fn is_editor_class(class_name: &str) -> bool {
        EDITOR_SUFFIXES.iter().any(|s| class_name.ends_with(s))
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Own interactivity, ignoring ancestors.
    pub fn is_self_interactive(&self) -> bool {
        let f = &self.flags;
        f.clickable || f.long_clickable || f.scrollable || f.editable
    }

    /// Text used to describe the widget to humans and heuristics.
    pub fn display_text(&self) -> &str {
        if !self.text.trim().is_empty() {
            &self.text
        } else {
            &self.content_desc
        }
    }

    fn fingerprint(&self) -> String {
        let text = if self.flags.editable { "\u{0}EDITABLE" } else { self.text.as_str() };
        format!(
            "{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}",
            self.class_name,
            self.resource_id,
            self.bounds,
            self.flags.bits(),
            text
        )
    }
}

/// Opaque PNG bytes of a device screen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screenshot(pub Vec<u8>);

impl Screenshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UiSnapshot {
    pub component: String,
    /// Pre-order flattened tree; entries without a parent are roots.
    pub widgets: Vec<Widget>,
    /// The dump marked the window as an overlay (popup, menu, dialog).
    pub overlay: bool,
    pub rotation: u8,
    pub screenshot: Option<Screenshot>,
    pub captured_at: u64,
}

impl UiSnapshot {
    pub fn roots(&self) -> impl Iterator<Item = &Widget> {
        self.widgets.iter().filter(|w| w.parent.is_none())
    }

    /// Screen rectangle, taken as the union of the root nodes' bounds.
    pub fn screen(&self) -> Bounds {
        let mut roots = self.roots().map(|w| w.bounds);
        let Some(first) = roots.next() else {
            return Bounds::default();
        };
        roots.fold(first, |acc, b| {
            Bounds::new(acc.x1.min(b.x1), acc.y1.min(b.y1), acc.x2.max(b.x2), acc.y2.max(b.y2))
        })
    }
}

/// Fixed-width digest of a snapshot's normalized signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(String);

impl StateId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        (s.len() == 16 && s.chars().all(|c| c.is_ascii_hexdigit()))
            .then(|| StateId(s.to_ascii_lowercase()))
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn attr_bool(node: &roxmltree::Node, name: &str) -> bool {
    node.attribute(name) == Some("true")
}

fn attr_str(node: &roxmltree::Node, name: &str) -> String {
    node.attribute(name).unwrap_or("").to_string()
}

fn collect(
    node: roxmltree::Node,
    parent: Option<usize>,
    out: &mut Vec<Widget>,
) -> Result<(), HierarchyError> {
    let bounds = match node.attribute("bounds") {
        Some(b) => Bounds::parse(b)
            .ok_or_else(|| HierarchyError::MalformedHierarchy(format!("bad bounds `{b}`")))?,
        None => Bounds::default(),
    };
    let class_name = attr_str(&node, "class");
    let editable = attr_bool(&node, "editable") || Widget::is_editor_class(&class_name);
    let widget = Widget {
        index: node.attribute("index").and_then(|i| i.parse().ok()).unwrap_or(0),
        text: attr_str(&node, "text"),
        resource_id: attr_str(&node, "resource-id"),
        content_desc: attr_str(&node, "content-desc"),
        package: attr_str(&node, "package"),
        hint: attr_str(&node, "hint"),
        bounds,
        flags: WidgetFlags {
            clickable: attr_bool(&node, "clickable"),
            long_clickable: attr_bool(&node, "long-clickable"),
            scrollable: attr_bool(&node, "scrollable"),
            focusable: attr_bool(&node, "focusable"),
            // uiautomator omits nothing here, but hand-written dumps may
            enabled: node.attribute("enabled").map(|v| v == "true").unwrap_or(true),
            editable,
        },
        checked: attr_bool(&node, "checked"),
        class_name,
        inherited_interactive: false,
        parent,
        children: Vec::new(),
    };
    let me = out.len();
    out.push(widget);
    if let Some(p) = parent {
        out[p].children.push(me);
    }
    for child in node.children().filter(|c| c.is_element() && c.has_tag_name("node")) {
        collect(child, Some(me), out)?;
    }
    Ok(())
}

/// Parses a UIAutomator-compatible dump. Missing attributes default to empty
/// strings and `false`.
pub fn parse_hierarchy(xml: &str, component: &str) -> Result<UiSnapshot, HierarchyError> {
    let doc = roxmltree::Document::parse(xml)
        .map_err(|e| HierarchyError::MalformedHierarchy(e.to_string()))?;
    let root = doc.root_element();
    let mut widgets = Vec::new();
    let (overlay, rotation) = if root.has_tag_name("hierarchy") {
        for node in root.children().filter(|c| c.is_element() && c.has_tag_name("node")) {
            collect(node, None, &mut widgets)?;
        }
        (
            attr_bool(&root, "overlay"),
            root.attribute("rotation").and_then(|r| r.parse().ok()).unwrap_or(0),
        )
    } else if root.has_tag_name("node") {
        collect(root, None, &mut widgets)?;
        (false, 0)
    } else {
        return Err(HierarchyError::MalformedHierarchy(format!(
            "unexpected root element <{}>",
            root.tag_name().name()
        )));
    };
    if widgets.is_empty() {
        return Err(HierarchyError::EmptyHierarchy);
    }
    Ok(UiSnapshot {
        component: component.to_string(),
        widgets,
        overlay,
        rotation,
        screenshot: None,
        captured_at: 0,
    })
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            _ => out.push(c),
        }
    }
    out
}

fn write_node(out: &mut String, widgets: &[Widget], i: usize, depth: usize) {
    let w = &widgets[i];
    let pad = "  ".repeat(depth);
    let _ = write!(
        out,
        "{pad}<node index=\"{}\" text=\"{}\" resource-id=\"{}\" class=\"{}\" package=\"{}\" content-desc=\"{}\" ",
        w.index,
        escape_attr(&w.text),
        escape_attr(&w.resource_id),
        escape_attr(&w.class_name),
        escape_attr(&w.package),
        escape_attr(&w.content_desc),
    );
    if !w.hint.is_empty() {
        let _ = write!(out, "hint=\"{}\" ", escape_attr(&w.hint));
    }
    let _ = write!(
        out,
        "checkable=\"false\" checked=\"{}\" clickable=\"{}\" enabled=\"{}\" focusable=\"{}\" focused=\"false\" scrollable=\"{}\" long-clickable=\"{}\" password=\"false\" selected=\"false\" ",
        w.checked, w.flags.clickable, w.flags.enabled, w.flags.focusable, w.flags.scrollable, w.flags.long_clickable,
    );
    if w.flags.editable && !Widget::is_editor_class(&w.class_name) {
        out.push_str("editable=\"true\" ");
    }
    let _ = write!(out, "bounds=\"{}\"", w.bounds);
    if w.children.is_empty() {
        out.push_str(" />\n");
    } else {
        out.push_str(">\n");
        for &c in &w.children {
            write_node(out, widgets, c, depth + 1);
        }
        let _ = writeln!(out, "{pad}</node>");
    }
}

/// Renders a snapshot back into the dump format accepted by
/// [`parse_hierarchy`].
pub fn serialize_hierarchy(snapshot: &UiSnapshot) -> String {
    let mut out = String::from("<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>\n");
    let _ = write!(out, "<hierarchy rotation=\"{}\"", snapshot.rotation);
    if snapshot.overlay {
        out.push_str(" overlay=\"true\"");
    }
    out.push_str(">\n");
    for (i, w) in snapshot.widgets.iter().enumerate() {
        if w.parent.is_none() {
            write_node(&mut out, &snapshot.widgets, i, 1);
        }
    }
    out.push_str("</hierarchy>\n");
    out
}

fn has_clickable_ancestor(widgets: &[Widget], mut i: usize) -> bool {
    while let Some(p) = widgets[i].parent {
        if widgets[p].flags.clickable {
            return true;
        }
        i = p;
    }
    false
}

/// Widgets that accept interaction, in pre-order. Leaves below a clickable
/// ancestor are included with `inherited_interactive` set.
pub fn interactive_widgets(snapshot: &UiSnapshot) -> Vec<Widget> {
    interactive_indices(snapshot)
        .into_iter()
        .map(|(i, inherited)| {
            let mut w = snapshot.widgets[i].clone();
            w.inherited_interactive = inherited;
            w
        })
        .collect()
}

/// Positions (into `snapshot.widgets`) of the interactive widgets, with the
/// inherited flag.
pub fn interactive_indices(snapshot: &UiSnapshot) -> Vec<(usize, bool)> {
    let widgets = &snapshot.widgets;
    (0..widgets.len())
        .filter_map(|i| {
            let w = &widgets[i];
            if w.is_self_interactive() {
                Some((i, false))
            } else if w.is_leaf() && has_clickable_ancestor(widgets, i) {
                Some((i, true))
            } else {
                None
            }
        })
        .collect()
}

pub fn has_text_editor(snapshot: &UiSnapshot) -> bool {
    snapshot
        .widgets
        .iter()
        .any(|w| w.flags.editable || Widget::is_editor_class(&w.class_name))
}

/// Whether the widget can be seen: positive area inside the screen.
pub fn is_visible(widget: &Widget, screen: &Bounds) -> bool {
    widget.bounds.has_area() && widget.bounds.intersects(screen)
}

pub fn detect_progress_indicator(snapshot: &UiSnapshot) -> bool {
    let screen = snapshot.screen();
    snapshot.widgets.iter().any(|w| {
        is_visible(w, &screen)
            && (w.class_name.contains("ProgressBar")
                || w.text.to_lowercase().contains("loading")
                || w.content_desc.to_lowercase().contains("loading"))
    })
}

/// Digest over the component and the multiset of widget fingerprints. The text
/// of editable widgets is masked, so typing alone never changes the id.
pub fn state_signature(snapshot: &UiSnapshot) -> StateId {
    let mut prints: Vec<String> = snapshot.widgets.iter().map(Widget::fingerprint).collect();
    prints.sort_unstable();
    let mut hasher = Sha256::new();
    hasher.update(snapshot.component.as_bytes());
    hasher.update([0u8]);
    for p in &prints {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    StateId(hex::encode(&digest[..8]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DUMP: &str = r#"<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>
<hierarchy rotation="0">
  <node index="0" text="" resource-id="" class="android.widget.FrameLayout" package="com.x" content-desc="" checkable="false" checked="false" clickable="false" enabled="true" focusable="false" focused="false" scrollable="false" long-clickable="false" password="false" selected="false" bounds="[0,0][1080,1920]">
    <node index="0" text="" resource-id="com.x:id/list" class="android.widget.ListView" package="com.x" content-desc="" checkable="false" checked="false" clickable="false" enabled="true" focusable="true" focused="false" scrollable="true" long-clickable="false" password="false" selected="false" bounds="[0,63][1080,1731]">
      <node index="0" text="" resource-id="com.x:id/row" class="android.widget.LinearLayout" package="com.x" content-desc="" checkable="false" checked="false" clickable="true" enabled="true" focusable="true" focused="false" scrollable="false" long-clickable="false" password="false" selected="false" bounds="[0,63][1080,200]">
        <node index="0" text="Item 1" resource-id="" class="android.widget.TextView" package="com.x" content-desc="" clickable="false" bounds="[20,80][500,180]" />
      </node>
    </node>
    <node index="1" class="android.widget.EditText" package="com.x" clickable="false" bounds="[0,1731][800,1900]" />
    <node index="2" text="Go" resource-id="com.x:id/go" class="android.widget.Button" clickable="true" bounds="[800,1731][1080,1900]" />
  </node>
</hierarchy>"#;

    fn snap() -> UiSnapshot {
        parse_hierarchy(DUMP, "com.x.Main").unwrap()
    }

    #[test]
    fn parses_bounds_and_flags() {
        let s = snap();
        assert_eq!(s.widgets.len(), 6);
        let list = &s.widgets[1];
        assert_eq!(list.bounds, Bounds { x1: 0, y1: 63, x2: 1080, y2: 1731 });
        assert!(list.flags.scrollable);
        assert!(s.widgets[2].flags.clickable);
        assert_eq!(s.widgets[3].parent, Some(2));
        assert_eq!(s.widgets[0].children, vec![1, 4, 5]);
    }

    #[test]
    fn missing_text_and_resource_id_default_empty() {
        let s = snap();
        let editor = &s.widgets[4];
        assert_eq!(editor.text, "");
        assert_eq!(editor.resource_id, "");
        assert_eq!(editor.content_desc, "");
        assert!(editor.flags.editable);
    }

    #[test]
    fn empty_hierarchy_is_an_error() {
        assert_eq!(parse_hierarchy("<hierarchy/>", "c"), Err(HierarchyError::EmptyHierarchy));
        assert!(matches!(
            parse_hierarchy("<hierarchy><node", "c"),
            Err(HierarchyError::MalformedHierarchy(_))
        ));
        assert!(matches!(
            parse_hierarchy(r#"<hierarchy><node bounds="[0,0]" /></hierarchy>"#, "c"),
            Err(HierarchyError::MalformedHierarchy(_))
        ));
    }

    #[test]
    fn interactive_includes_inherited_leaf_and_editor() {
        let s = snap();
        let found: Vec<(String, bool)> = interactive_widgets(&s)
            .into_iter()
            .map(|w| (w.class_name, w.inherited_interactive))
            .collect();
        assert_eq!(
            found,
            vec![
                ("android.widget.ListView".to_string(), false),
                ("android.widget.LinearLayout".to_string(), false),
                ("android.widget.TextView".to_string(), true),
                ("android.widget.EditText".to_string(), false),
                ("android.widget.Button".to_string(), false),
            ]
        );
    }

    #[test]
    fn nothing_interactive_gives_empty_list() {
        let xml = r#"<hierarchy><node class="a.B" bounds="[0,0][10,10]"><node class="a.C" bounds="[0,0][5,5]"/></node></hierarchy>"#;
        assert!(interactive_widgets(&parse_hierarchy(xml, "c").unwrap()).is_empty());
    }

    #[test]
    fn editor_detection_uses_suffix() {
        assert!(has_text_editor(&snap()));
        let custom = r#"<hierarchy><node class="com.x.MyEditText" bounds="[0,0][10,10]"/></hierarchy>"#;
        assert!(has_text_editor(&parse_hierarchy(custom, "c").unwrap()));
        let buttons = r#"<hierarchy><node class="android.widget.Button" clickable="true" bounds="[0,0][10,10]"/></hierarchy>"#;
        assert!(!has_text_editor(&parse_hierarchy(buttons, "c").unwrap()));
    }

    #[test]
    fn progress_detection() {
        let bar = r#"<hierarchy><node class="android.widget.FrameLayout" bounds="[0,0][1080,1920]"><node class="android.widget.ProgressBar" bounds="[400,800][680,1000]"/></node></hierarchy>"#;
        assert!(detect_progress_indicator(&parse_hierarchy(bar, "c").unwrap()));
        let text = r#"<hierarchy><node class="android.widget.FrameLayout" bounds="[0,0][1080,1920]"><node class="android.widget.TextView" text="Loading books…" bounds="[0,800][1080,900]"/></node></hierarchy>"#;
        assert!(detect_progress_indicator(&parse_hierarchy(text, "c").unwrap()));
        let hidden = r#"<hierarchy><node class="android.widget.FrameLayout" bounds="[0,0][1080,1920]"><node class="android.widget.ProgressBar" bounds="[0,0][0,0]"/></node></hierarchy>"#;
        assert!(!detect_progress_indicator(&parse_hierarchy(hidden, "c").unwrap()));
        assert!(!detect_progress_indicator(&snap()));
    }

    #[test]
    fn signature_masks_editor_text_only() {
        let a = snap();
        let mut typed = a.clone();
        typed.widgets[4].text = "hello".into();
        assert_eq!(state_signature(&a), state_signature(&typed));

        let mut relabeled = a.clone();
        relabeled.widgets[5].text = "Stop".into();
        assert_ne!(state_signature(&a), state_signature(&relabeled));

        let mut other_component = a.clone();
        other_component.component = "com.x.Other".into();
        assert_ne!(state_signature(&a), state_signature(&other_component));
    }

    #[test]
    fn extra_row_changes_signature() {
        let a = snap();
        let mut b = a.clone();
        let mut row = b.widgets[3].clone();
        row.text = "Item 2".into();
        row.bounds = Bounds::new(20, 210, 500, 300);
        row.parent = Some(1);
        b.widgets.push(row);
        assert_ne!(state_signature(&a), state_signature(&b));
    }

    #[test]
    fn serialize_round_trips() {
        let a = snap();
        let again = parse_hierarchy(&serialize_hierarchy(&a), "com.x.Main").unwrap();
        assert_eq!(a.widgets, again.widgets);
        assert_eq!(state_signature(&a), state_signature(&again));
    }
}
