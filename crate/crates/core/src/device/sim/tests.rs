use super::*;
use crate::device::{snapshot, widget_for_label};
use crate::hierarchy::{detect_progress_indicator, interactive_widgets, state_signature};

const APP: &str = r#"{
  "package": "com.ex",
  "components": [
    {"name": "com.ex.Main", "entry": "home",
     "intent_filters": [{"actions": ["android.intent.action.MAIN"], "categories": ["android.intent.category.LAUNCHER"]}],
     "screens": [
       {"name": "home", "menu": "home_menu", "widgets": [
         {"id": "go", "class": "android.widget.Button", "text": "Next", "bounds": [0,100,540,200], "clickable": true,
          "behavior": {"type": "navigate", "screen": "detail"}},
         {"id": "add", "class": "android.widget.Button", "text": "Add", "bounds": [540,100,1080,200], "clickable": true,
          "behavior": {"type": "append_list_item", "text": "Row"}},
         {"id": "age", "class": "android.widget.EditText", "bounds": [0,300,1080,400],
          "behavior": {"type": "input", "validator": "[0-9]+"}},
         {"id": "boom", "class": "android.widget.Button", "text": "Crash", "bounds": [0,500,540,600], "clickable": true,
          "behavior": {"type": "crash", "exception_type": "java.lang.IllegalStateException", "message": "bad"}},
         {"id": "load", "class": "android.widget.Button", "text": "Load", "bounds": [540,500,1080,600], "clickable": true,
          "behavior": {"type": "show_progress", "duration_ms": 5000, "then": "detail"}},
         {"id": "secret", "class": "android.widget.Button", "text": "Wide", "bounds": [0,700,1080,800], "clickable": true,
          "reveal_on_rotate": true}
       ]},
       {"name": "home_menu", "overlay": true, "widgets": [
         {"id": "settings", "class": "android.widget.TextView", "text": "Settings", "bounds": [100,650,900,750], "clickable": true}
       ]},
       {"name": "detail", "widgets": [
         {"id": "title", "class": "android.widget.TextView", "text": "Detail", "bounds": [0,0,1080,100]},
         {"id": "close", "class": "android.widget.Button", "text": "Close", "bounds": [0,200,1080,300], "clickable": true,
          "behavior": {"type": "back"}}
       ]}
     ]},
    {"name": "com.ex.Hidden", "exported": false, "entry": "hidden",
     "screens": [{"name": "hidden", "widgets": []}]},
    {"name": "com.ex.TzReceiver", "kind": "receiver",
     "intent_filters": [{"actions": ["android.intent.action.TIMEZONE_CHANGED"]}]}
  ]
}"#;

fn app() -> SimApp {
    SimApp::from_json(APP).unwrap()
}

fn launch(app: &mut SimApp) -> UiSnapshot {
    app.launch(&Intent::explicit("com.ex.Main", "android.intent.action.MAIN")).unwrap();
    snapshot(app).unwrap()
}

fn by_text(s: &UiSnapshot, text: &str) -> Widget {
    interactive_widgets(s).into_iter().find(|w| w.text == text).unwrap()
}

#[test]
fn starts_on_the_launcher() {
    let mut a = app();
    assert_eq!(a.current_component().unwrap(), LAUNCHER_COMPONENT);
    assert_eq!(a.current_screen(), None);
}

#[test]
fn launch_shows_entry_and_dump_round_trips() {
    let mut a = app();
    let s = launch(&mut a);
    assert_eq!(s.component, "com.ex.Main");
    assert_eq!(a.current_screen(), Some("home"));
    let labels: Vec<_> = interactive_widgets(&s).iter().map(|w| w.resource_id.clone()).collect();
    assert_eq!(labels, ["com.ex:id/go", "com.ex:id/add", "com.ex:id/age", "com.ex:id/boom", "com.ex:id/load"]);
    assert_eq!(a.now_ms(), LAUNCH_MS);
}

#[test]
fn navigate_and_back() {
    let mut a = app();
    let s = launch(&mut a);
    a.tap(&by_text(&s, "Next")).unwrap();
    assert_eq!(a.current_screen(), Some("detail"));
    a.press_back().unwrap();
    assert_eq!(a.current_screen(), Some("home"));
    a.press_back().unwrap();
    assert_eq!(a.current_component().unwrap(), LAUNCHER_COMPONENT);
}

#[test]
fn back_behavior_pops() {
    let mut a = app();
    let s = launch(&mut a);
    a.tap(&by_text(&s, "Next")).unwrap();
    let d = snapshot(&mut a).unwrap();
    a.tap(&by_text(&d, "Close")).unwrap();
    assert_eq!(a.current_screen(), Some("home"));
}

#[test]
fn list_growth_changes_the_signature_each_time() {
    let mut a = app();
    let s = launch(&mut a);
    let add = by_text(&s, "Add");
    let mut seen = vec![state_signature(&s)];
    for _ in 0..3 {
        a.tap(&add).unwrap();
        let id = state_signature(&snapshot(&mut a).unwrap());
        assert!(!seen.contains(&id));
        seen.push(id);
    }
}

#[test]
fn validator_rejects_non_matching_text() {
    let mut a = app();
    let s = launch(&mut a);
    let age = widget_for_label(&s, 3).unwrap();
    a.input_text(&age, "abc").unwrap();
    assert_eq!(by_id(&mut a, "age").text, "");
    a.input_text(&age, "42").unwrap();
    assert_eq!(by_id(&mut a, "age").text, "42");
}

fn by_id(a: &mut SimApp, id: &str) -> Widget {
    let s = snapshot(a).unwrap();
    s.widgets.into_iter().find(|w| w.resource_id.ends_with(&format!("/{id}"))).unwrap()
}

#[test]
fn crash_is_reported_and_app_restarts_at_entry() {
    let mut a = app();
    let s = launch(&mut a);
    a.tap(&by_text(&s, "Next")).unwrap();
    a.press_back().unwrap();
    a.tap(&by_text(&s, "Crash")).unwrap();
    let crashes = a.drain_crash_events().unwrap();
    assert_eq!(crashes.len(), 1);
    assert_eq!(crashes[0].exception_type, "java.lang.IllegalStateException");
    assert_eq!(crashes[0].stack_top_frame, "com.ex.Main.onClick");
    assert!(a.drain_crash_events().unwrap().is_empty());
    assert_eq!(a.current_screen(), Some("home"));
}

#[test]
fn progress_clears_after_its_duration() {
    let mut a = app();
    let s = launch(&mut a);
    a.tap(&by_text(&s, "Load")).unwrap();
    assert!(detect_progress_indicator(&snapshot(&mut a).unwrap()));
    a.wait_ms(4000);
    assert!(a.is_loading());
    a.wait_ms(1000);
    assert!(!detect_progress_indicator(&snapshot(&mut a).unwrap()));
    assert_eq!(a.current_screen(), Some("detail"));
}

#[test]
fn menu_pushes_an_overlay() {
    let mut a = app();
    launch(&mut a);
    a.press_menu().unwrap();
    let s = snapshot(&mut a).unwrap();
    assert!(s.overlay);
    assert_eq!(a.current_screen(), Some("home_menu"));
    a.press_back().unwrap();
    assert_eq!(a.current_screen(), Some("home"));
}

#[test]
fn rotation_reveals_hidden_widgets() {
    let mut a = app();
    let before = state_signature(&launch(&mut a));
    a.rotate(Orientation::Landscape).unwrap();
    a.rotate(Orientation::Portrait).unwrap();
    let s = snapshot(&mut a).unwrap();
    assert_ne!(state_signature(&s), before);
    assert!(interactive_widgets(&s).iter().any(|w| w.text == "Wide"));
}

#[test]
fn home_and_resume_keep_the_stack() {
    let mut a = app();
    let s = launch(&mut a);
    a.tap(&by_text(&s, "Next")).unwrap();
    a.press_home().unwrap();
    assert_eq!(a.current_component().unwrap(), LAUNCHER_COMPONENT);
    a.resume_app().unwrap();
    assert_eq!(a.current_screen(), Some("detail"));
}

#[test]
fn unexported_launch_is_refused() {
    let mut a = app();
    let err = a.launch(&Intent::explicit("com.ex.Hidden", "android.intent.action.MAIN")).unwrap_err();
    assert!(matches!(err, DeviceError::LaunchRefused(_)));
    assert!(matches!(
        a.launch(&Intent::explicit("com.ex.Nope", "x")).unwrap_err(),
        DeviceError::UnknownComponent(_)
    ));
}

#[test]
fn broadcasts_are_recorded() {
    let mut a = app();
    a.broadcast(&Intent::broadcast("android.intent.action.TIMEZONE_CHANGED")).unwrap();
    assert_eq!(a.received_broadcasts.len(), 1);
}

#[test]
fn clones_evolve_independently() {
    let mut a = app();
    let s = launch(&mut a);
    let mut b = a.clone();
    b.tap(&by_text(&s, "Next")).unwrap();
    assert_eq!(a.current_screen(), Some("home"));
    assert_eq!(b.current_screen(), Some("detail"));
}

#[test]
fn spec_validation_reports_paths() {
    let bad = APP.replace(r#""screen": "detail"}"#, r#""screen": "nowhere"}"#);
    match SimApp::from_json(&bad).unwrap_err() {
        SpecError::Invalid { path, .. } => assert_eq!(path, "components[0].screens[0].widgets[0].behavior.screen"),
        e => panic!("{e:?}"),
    }
    let popup_to_full = APP.replace(r#""menu": "home_menu""#, r#""menu": "detail""#);
    assert!(matches!(SimApp::from_json(&popup_to_full), Err(SpecError::Invalid { .. })));
    assert!(matches!(SimApp::from_json("{"), Err(SpecError::Syntax(_))));
}

#[test]
fn input_behavior_needs_an_editable_widget() {
    let bad = APP.replace(r#""class": "android.widget.EditText""#, r#""class": "android.widget.TextView""#);
    assert!(matches!(SimApp::from_json(&bad), Err(SpecError::Invalid { .. })));
}
