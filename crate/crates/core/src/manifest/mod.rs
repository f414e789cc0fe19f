//! App components, intent-filters and intent construction.

mod aapt;
pub mod catalog;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub use catalog::{lookup_broadcast_spec, BroadcastCatalog, BroadcastIntentSpec, BroadcastLookup};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("manifest declares no components")]
    EmptyManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
}

impl ComponentKind {
    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "activity" => Some(ComponentKind::Activity),
            "service" => Some(ComponentKind::Service),
            "receiver" => Some(ComponentKind::Receiver),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentFilter {
    pub actions: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub data_schemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDecl {
    pub name: String,
    pub kind: ComponentKind,
    pub exported: bool,
    pub intent_filters: Vec<IntentFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ExtraValue {
    Str(String),
    Int(i64),
    Bool(bool),
}

/// An explicit intent carries a `target` component; a broadcast carries only
/// an action.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Intent {
    pub target: Option<String>,
    pub action: String,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub data_uri: Option<String>,
    #[serde(default)]
    pub extras: BTreeMap<String, ExtraValue>,
}

impl Intent {
    pub fn explicit(target: &str, action: &str) -> Self {
        Intent {
            target: Some(target.to_string()),
            action: action.to_string(),
            ..Default::default()
        }
    }

    pub fn broadcast(action: &str) -> Self {
        Intent { action: action.to_string(), ..Default::default() }
    }

    pub fn is_broadcast(&self) -> bool {
        self.target.is_none()
    }

    /// Whether this intent would be delivered through `filter`.
    pub fn satisfies(&self, filter: &IntentFilter) -> bool {
        if !filter.actions.iter().any(|a| a == &self.action) {
            return false;
        }
        if !self.categories.iter().all(|c| filter.categories.contains(c)) {
            return false;
        }
        match (&self.data_uri, filter.data_schemes.is_empty()) {
            (None, true) => true,
            (None, false) => false,
            (Some(_), true) => false,
            (Some(uri), false) => filter
                .data_schemes
                .iter()
                .any(|s| uri.starts_with(&format!("{s}://"))),
        }
    }
}

/// Synthetic data URI for a declared scheme.
pub fn synth_data_uri(scheme: &str) -> String {
    format!("{scheme}://fuzz.example/path")
}

/// Generic element tree shared by both manifest input formats.
#[derive(Debug, Default)]
pub(crate) struct Element {
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn from_xml(text: &str) -> Result<Element, ManifestError> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| ManifestError::MalformedManifest(e.to_string()))?;
    fn convert(node: roxmltree::Node) -> Element {
        Element {
            tag: node.tag_name().name().to_string(),
            attrs: node
                .attributes()
                .map(|a| (a.name().to_string(), a.value().to_string()))
                .collect(),
            children: node.children().filter(|c| c.is_element()).map(convert).collect(),
        }
    }
    Ok(convert(doc.root_element()))
}

fn qualify(package: &str, name: &str) -> String {
    if let Some(rest) = name.strip_prefix('.') {
        format!("{package}.{rest}")
    } else if !name.contains('.') && !package.is_empty() {
        format!("{package}.{name}")
    } else {
        name.to_string()
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value.trim() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn collect_filter(el: &Element, owner: &str) -> Option<IntentFilter> {
    let mut filter = IntentFilter::default();
    for child in &el.children {
        match child.tag.as_str() {
            "action" => filter.actions.extend(child.attr("name").map(str::to_string)),
            "category" => filter.categories.extend(child.attr("name").map(str::to_string)),
            "data" => {
                if let Some(s) = child.attr("scheme") {
                    if !filter.data_schemes.iter().any(|x| x == s) {
                        filter.data_schemes.push(s.to_string());
                    }
                }
            }
            _ => {}
        }
    }
    if filter.actions.is_empty() {
        warn!(component = owner, "skipping intent-filter without an action");
        return None;
    }
    Some(filter)
}

fn collect_components(
    el: &Element,
    package: &str,
    out: &mut Vec<ComponentDecl>,
) -> Result<(), ManifestError> {
    for child in &el.children {
        if let Some(kind) = ComponentKind::from_tag(&child.tag) {
            let raw = child
                .attr("name")
                .filter(|n| !n.is_empty())
                .ok_or_else(|| {
                    ManifestError::MalformedManifest(format!("<{}> without a name", child.tag))
                })?;
            let name = qualify(package, raw);
            let intent_filters: Vec<IntentFilter> = child
                .children
                .iter()
                .filter(|c| c.tag == "intent-filter")
                .filter_map(|c| collect_filter(c, &name))
                .collect();
            let exported = child
                .attr("exported")
                .and_then(parse_bool)
                .unwrap_or(!intent_filters.is_empty());
            out.push(ComponentDecl { name, kind, exported, intent_filters });
        } else {
            collect_components(child, package, out)?;
        }
    }
    Ok(())
}

/// Parses raw manifest XML or an AAPT `dump xmltree` text dump. The format is
/// picked from the first non-blank character.
pub fn parse_manifest(manifest_dump: &str) -> Result<Vec<ComponentDecl>, ManifestError> {
    let trimmed = manifest_dump.trim_start();
    if trimmed.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    let root = if trimmed.starts_with('<') {
        from_xml(trimmed)?
    } else {
        aapt::parse_tree(trimmed)?
    };
    let manifest = if root.tag == "manifest" {
        &root
    } else {
        root.children
            .iter()
            .find(|c| c.tag == "manifest")
            .ok_or_else(|| ManifestError::MalformedManifest("no <manifest> element".into()))?
    };
    let package = manifest.attr("package").unwrap_or("").to_string();
    let mut components = Vec::new();
    collect_components(manifest, &package, &mut components)?;
    if components.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    let mut seen = HashSet::new();
    for c in &components {
        if !seen.insert(c.name.as_str()) {
            return Err(ManifestError::MalformedManifest(format!(
                "component {} declared twice",
                c.name
            )));
        }
    }
    Ok(components)
}

/// Package attribute of a manifest dump, when present.
pub fn manifest_package(manifest_dump: &str) -> Option<String> {
    let trimmed = manifest_dump.trim_start();
    let root = if trimmed.starts_with('<') {
        from_xml(trimmed).ok()?
    } else {
        aapt::parse_tree(trimmed).ok()?
    };
    let manifest = if root.tag == "manifest" {
        &root
    } else {
        root.children.iter().find(|c| c.tag == "manifest")?
    };
    manifest.attr("package").map(str::to_string)
}

/// Explicit launch intent for `component`. One filter is picked uniformly at
/// random; its first action, first category and (if declared) one of its data
/// schemes are used.
pub fn build_launch_intent<R: Rng + ?Sized>(component: &ComponentDecl, rng: &mut R) -> Intent {
    let mut intent = Intent::explicit(&component.name, "");
    if component.intent_filters.is_empty() {
        return intent;
    }
    let filter = &component.intent_filters[rng.gen_range(0..component.intent_filters.len())];
    intent.action = filter.actions[0].clone();
    intent.categories = filter.categories.first().cloned().into_iter().collect();
    if !filter.data_schemes.is_empty() {
        let scheme = &filter.data_schemes[rng.gen_range(0..filter.data_schemes.len())];
        intent.data_uri = Some(synth_data_uri(scheme));
    }
    intent
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ONE_ACTIVITY: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.x">
  <application>
    <activity android:name="com.x.Main">
      <intent-filter>
        <action android:name="android.intent.action.MAIN"/>
        <category android:name="android.intent.category.LAUNCHER"/>
      </intent-filter>
    </activity>
  </application>
</manifest>"#;

    #[test]
    fn single_activity_maps_directly() {
        let comps = parse_manifest(ONE_ACTIVITY).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].name, "com.x.Main");
        assert_eq!(comps[0].kind, ComponentKind::Activity);
        assert!(comps[0].exported);
        assert_eq!(comps[0].intent_filters[0].actions, vec!["android.intent.action.MAIN"]);
    }

    #[test]
    fn receiver_with_timezone_action() {
        let xml = r#"<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.x">
  <application>
    <receiver android:name=".TzReceiver" android:exported="true">
      <intent-filter><action android:name="android.intent.action.TIMEZONE_CHANGED"/></intent-filter>
    </receiver>
  </application>
</manifest>"#;
        let comps = parse_manifest(xml).unwrap();
        assert_eq!(comps[0].name, "com.x.TzReceiver");
        assert_eq!(comps[0].kind, ComponentKind::Receiver);
        assert_eq!(
            comps[0].intent_filters[0].actions,
            vec!["android.intent.action.TIMEZONE_CHANGED"]
        );
    }

    #[test]
    fn empty_document_is_rejected() {
        assert_eq!(parse_manifest(""), Err(ManifestError::EmptyManifest));
        assert_eq!(parse_manifest("   \n"), Err(ManifestError::EmptyManifest));
        let no_components = r#"<manifest package="com.x"><application/></manifest>"#;
        assert_eq!(parse_manifest(no_components), Err(ManifestError::EmptyManifest));
    }

    #[test]
    fn malformed_xml_is_rejected() {
        assert!(matches!(
            parse_manifest("<manifest><application>"),
            Err(ManifestError::MalformedManifest(_))
        ));
    }

    #[test]
    fn filters_without_action_are_skipped() {
        let xml = r#"<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.x">
  <application>
    <activity android:name=".A">
      <intent-filter><category android:name="android.intent.category.DEFAULT"/></intent-filter>
    </activity>
    <service android:name=".S"/>
  </application>
</manifest>"#;
        let comps = parse_manifest(xml).unwrap();
        assert!(comps[0].intent_filters.is_empty());
        assert!(!comps[0].exported);
        assert_eq!(comps[1].kind, ComponentKind::Service);
    }

    #[test]
    fn duplicate_component_is_malformed() {
        let xml = r#"<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.x">
  <application><activity android:name=".A"/><activity android:name="com.x.A"/></application>
</manifest>"#;
        assert!(matches!(parse_manifest(xml), Err(ManifestError::MalformedManifest(_))));
    }

    fn decl(filters: Vec<IntentFilter>) -> ComponentDecl {
        ComponentDecl {
            name: "com.x.Main".into(),
            kind: ComponentKind::Activity,
            exported: true,
            intent_filters: filters,
        }
    }

    #[test]
    fn no_filter_gives_bare_explicit_intent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let intent = build_launch_intent(&decl(vec![]), &mut rng);
        assert_eq!(intent.target.as_deref(), Some("com.x.Main"));
        assert_eq!(intent.action, "");
        assert!(intent.data_uri.is_none());
    }

    #[test]
    fn seeded_choice_is_reproducible() {
        let filters = vec![
            IntentFilter { actions: vec!["a.ONE".into()], ..Default::default() },
            IntentFilter { actions: vec!["a.TWO".into()], ..Default::default() },
        ];
        let component = decl(filters);
        for seed in 0..20 {
            let first = build_launch_intent(&component, &mut ChaCha8Rng::seed_from_u64(seed));
            let again = build_launch_intent(&component, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(first, again);
        }
    }

    #[test]
    fn scheme_yields_matching_data_uri() {
        let filters = vec![IntentFilter {
            actions: vec!["android.intent.action.VIEW".into()],
            categories: vec!["android.intent.category.DEFAULT".into()],
            data_schemes: vec!["http".into()],
        }];
        let component = decl(filters.clone());
        let intent = build_launch_intent(&component, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(intent.data_uri.as_deref().unwrap().starts_with("http://"));
        assert!(intent.satisfies(&filters[0]));
    }
}
