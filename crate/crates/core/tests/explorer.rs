mod common;

use std::time::Instant;

use common::*;
use regex::Regex;
use vlmfuzz::action::Action;
use vlmfuzz::device::{self, DeviceAdapter, SimApp};
use vlmfuzz::explorer::{ComponentExit, ProgressOutcome, Refusal};
use vlmfuzz::hierarchy::{state_signature, StateId};
use vlmfuzz::manifest::{ExtraValue, Intent};
use vlmfuzz::report::dedup_crashes;
use vlmfuzz::vlm::mock::{MockScript, MockVlmClient};

fn screen_id(app: &SimApp, component: &str) -> StateId {
    let mut a = app.clone();
    a.launch(&Intent::explicit(component, "android.intent.action.MAIN")).unwrap();
    state_signature(&device::snapshot(&mut a).unwrap())
}

#[test]
fn benign_apps_match_the_bfs_oracle() {
    for name in BENIGN {
        let json = fixture(name);
        let oracle = bfs_reachable(&json);
        let mut app = SimApp::from_json(&json).unwrap();
        let t = Instant::now();
        let outcome = explore(&mut app, None, &config(3));
        assert!(t.elapsed().as_secs_f64() < 10.0, "{name} too slow");
        assert_eq!(aut_states(&app, &outcome), oracle, "{name}");
    }
}

#[test]
fn growing_list_halts_at_tau_plus_one() {
    let mut app = sim("growing_list.json");
    let outcome = explore(&mut app, None, &config(1));
    assert_eq!(outcome.analyzed_count("com.ex.grow.Main"), 3);
    assert_eq!(outcome.component_runs[0].exit, ComponentExit::Exhausted);
    assert!(outcome.analyses.iter().any(|a| a.refused == Some(Refusal::OverVisitLimit)));
}

#[test]
fn tau_bounds_analyses_everywhere() {
    for name in BENIGN.iter().chain(&["growing_list.json", "book_search.json", "mixed_sentiment.json"]) {
        for tau in 1..=3 {
            let mut app = sim(name);
            let cfg = vlmfuzz::explorer::ExplorerConfig { tau, ..config(tau as u64) };
            let outcome = explore(&mut app, None, &cfg);
            for (component, n) in outcome.visits.counts() {
                assert!(*n <= tau + 1, "{name}: {component} analyzed {n} times with tau {tau}");
                assert_eq!(outcome.analyzed_count(component), *n as usize);
            }
        }
    }
}

#[test]
fn vision_sequence_is_executed_in_order() {
    let mut app = sim("book_search.json");
    let mut vlm = mock("book_search.mock.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { vlm_enabled: true, ..config(5) };
    let outcome = explore(&mut app, Some(&mut vlm), &cfg);
    let form = screen_id(&app, "com.ex.books.SearchActivity");
    let first = outcome.events.iter().find(|e| e.screen.as_ref() == Some(&form)).unwrap().analysis;
    let actions: Vec<String> = outcome
        .events
        .iter()
        .filter(|e| e.analysis == first && !e.replayed && e.screen.as_ref() == Some(&form))
        .take(6)
        .map(|e| e.action.to_string())
        .collect();
    assert_eq!(actions, ["tap(3)", "input(3, \"Java Series\")", "tap(4)", "input(4, \"1\")", "tap(5)", "tap(7)"]);
    let call = &outcome.vision_calls[0];
    assert_eq!((call.analysis, call.steps, &call.screen), (first.unwrap(), 6, &form));
}

#[test]
fn replay_returns_after_the_disruptive_tap() {
    let mut app = sim("book_search.json");
    let mut vlm = mock("book_search.mock.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { vlm_enabled: true, ..config(5) };
    let outcome = explore(&mut app, Some(&mut vlm), &cfg);
    let form = screen_id(&app, "com.ex.books.SearchActivity");
    let ev = &outcome.events;
    let t7 = ev.iter().position(|e| e.action == Action::Tap { label: 7 } && !e.replayed).unwrap();
    assert_ne!(ev[t7].result, form);
    let clear = ev.iter().position(|e| e.action == Action::Tap { label: 8 } && !e.replayed).unwrap();
    assert!(clear > t7);
    let last_replayed = (t7..clear).rev().find(|&i| ev[i].replayed).expect("a replay happened in between");
    assert_eq!(ev[last_replayed].result, form);
    assert_eq!(ev[clear].screen.as_ref(), Some(&form));
    // the replay skipped the tap that left the screen
    assert!(!ev[t7..clear].iter().any(|e| e.replayed && e.action == Action::Tap { label: 7 }));
}

#[test]
fn every_widget_is_covered_after_an_incomplete_vision_pass() {
    let mut app = sim("book_search.json");
    let mut vlm = mock("book_search.mock.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { vlm_enabled: true, ..config(9) };
    let outcome = explore(&mut app, Some(&mut vlm), &cfg);
    let form = screen_id(&app, "com.ex.books.SearchActivity");
    let first = outcome.events.iter().find(|e| e.screen.as_ref() == Some(&form)).unwrap().analysis;
    let labels: std::collections::BTreeSet<u32> = outcome
        .events
        .iter()
        .filter(|e| e.analysis == first && !e.replayed && e.screen.as_ref() == Some(&form))
        .filter_map(|e| e.action.label())
        .collect();
    assert_eq!(labels, (1..=8).collect());
}

#[test]
fn rejected_text_gets_a_numeric_retry() {
    let mut app = sim("book_search.json");
    let mut vlm = mock("book_search_reject.mock.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { vlm_enabled: true, ..config(2) };
    let outcome = explore(&mut app, Some(&mut vlm), &cfg);
    let ev = &outcome.events;
    let bad = ev.iter().position(|e| matches!(&e.action, Action::Input { label: 4, text } if text == "one")).unwrap();
    assert_eq!(ev[bad].accepted, Some(false));
    let retry = ev[bad + 1..].iter().find(|e| matches!(e.action, Action::Input { label: 4, .. }) && !e.replayed).unwrap();
    let Action::Input { text, .. } = &retry.action else { unreachable!() };
    assert!(Regex::new("^[0-9]+$").unwrap().is_match(text));
    assert_eq!(retry.accepted, Some(true));
    assert_eq!(retry.episode, ev[bad].episode);
}

#[test]
fn editors_get_predicted_or_random_text() {
    let script = MockScript::parse(r#"{"text": [{"match": "Series", "response": "Java Series"}, {"match": "Volume", "response": "2"}]}"#)
        .unwrap();
    let mut vlm = MockVlmClient::new(script);
    let mut app = sim("book_search.json");
    // no vision records: the vision call fails and the heuristic path runs
    let cfg = vlmfuzz::explorer::ExplorerConfig { vlm_enabled: true, ..config(4) };
    let outcome = explore(&mut app, Some(&mut vlm), &cfg);
    let inputs: Vec<&Action> = outcome.events.iter().filter(|e| matches!(e.action, Action::Input { .. })).map(|e| &e.action).collect();
    assert_eq!(inputs[0], &Action::Input { label: 3, text: "Java Series".into() });
    assert_eq!(inputs[1], &Action::Input { label: 4, text: "2".into() });
    assert!(outcome.vision_calls[0].error.is_some());

    let mut app = sim("book_search.json");
    let outcome = explore(&mut app, None, &config(4));
    let random = Regex::new("^[a-z]{8}$").unwrap();
    let Action::Input { text, .. } = &outcome.events.iter().find(|e| matches!(e.action, Action::Input { label: 3, .. })).unwrap().action
    else {
        unreachable!()
    };
    assert!(random.is_match(text), "{text}");
}

fn group_of(text: &str) -> u8 {
    match text {
        "Alpha" | "Beta" | "Gamma" => 0,
        "" => 1, // the list
        "Save" | "Open" => 2,
        "Cancel" | "Exit" => 3,
        "Yes" | "No" | "Later" => 4,
        other => panic!("unexpected target {other:?}"),
    }
}

#[test]
fn tap_order_follows_sentiment_groups() {
    let app0 = sim("mixed_sentiment.json");
    let home = screen_id(&app0, "com.ex.mixed.Main");
    for seed in 0..20 {
        let mut app = app0.clone();
        let outcome = explore(&mut app, None, &config(seed));
        let texts = taps_of_first_analysis(&outcome, &home);
        assert_eq!(texts.len(), 11, "seed {seed}: {texts:?}");
        let groups: Vec<u8> = texts.iter().map(|t| group_of(t)).collect();
        assert!(groups.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {texts:?}");
        assert_eq!(&texts[8..], ["Yes", "No", "Later"]);
    }
}

#[test]
fn loading_screen_is_waited_out() {
    let mut app = sim("loading.json");
    let outcome = explore(&mut app, None, &config(1));
    let w = &outcome.progress_waits;
    assert!(!w.is_empty());
    assert!(w.iter().all(|p| p.outcome == ProgressOutcome::Changed));
    assert!(w.iter().all(|p| p.end_ms - p.start_ms <= 10_000));
    let explored_start = outcome.events.iter().any(|e| e.target_text.as_deref() == Some("Start"));
    assert!(explored_start);
}

#[test]
fn endless_loading_times_out_after_sixty_seconds() {
    let mut app = sim("loading_forever.json");
    let outcome = explore(&mut app, None, &config(1));
    let w = &outcome.progress_waits;
    assert!(!w.is_empty());
    for p in w {
        assert_eq!(p.outcome, ProgressOutcome::TimedOut);
        assert_eq!(p.end_ms - p.start_ms, 60_000);
    }
    // exploration resumed on the loading screen
    assert!(outcome.events.iter().any(|e| e.mono_ms >= w[0].end_ms && e.action == Action::TapMenu));
}

#[test]
fn external_screens_are_left_unless_listed() {
    let ext = "com.android.permissioncontroller.GrantPermissionsActivity";
    let mut app = sim("permission.json");
    let outcome = explore(&mut app, None, &config(1));
    let refused: Vec<_> = outcome.analyses.iter().filter(|a| a.component == ext).collect();
    assert!(!refused.is_empty());
    assert!(refused.iter().all(|a| a.refused == Some(Refusal::OutsideApp)));
    let i = outcome.events.iter().position(|e| e.component == ext).unwrap();
    assert_eq!(outcome.events[i].action, Action::TapBack);

    let mut app = sim("permission.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { non_ignore_components: vec![ext.into()], ..config(1) };
    let outcome = explore(&mut app, None, &cfg);
    assert!(outcome.analyses.iter().any(|a| a.component == ext && a.refused.is_none()));
    assert!(outcome.events.iter().any(|e| e.component == ext && e.target_text.as_deref() == Some("Allow")));
}

#[test]
fn timezone_receiver_gets_catalog_extras() {
    let mut app = sim("timezone.json");
    explore(&mut app, None, &config(1));
    let got: Vec<_> = app.received_broadcasts.iter().filter(|i| i.action == "android.intent.action.TIMEZONE_CHANGED").collect();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].extras.get("TIMEZONE"), Some(&ExtraValue::Str("Europe/Rome".into())));
    assert_eq!(got[0].extras.get("TIME_PREF"), Some(&ExtraValue::Int(1)));
}

#[test]
fn receiver_crashes_dedup_into_two_records() {
    let mut app = sim("crash.json");
    let outcome = explore(&mut app, None, &config(1));
    assert_eq!(outcome.crashes.len(), 5);
    let records = dedup_crashes(&outcome.crashes);
    let counts: Vec<_> = records.iter().map(|r| (r.exception_type.as_str(), r.occurrence_count)).collect();
    assert_eq!(counts, [("java.lang.NullPointerException", 3), ("java.lang.IllegalStateException", 2)]);
}

#[test]
fn unlaunchable_components_are_skipped() {
    let json = r#"{"package": "com.ex.p", "components": [
        {"name": "com.ex.p.Main", "entry": "home", "screens": [{"name": "home", "widgets": []}]},
        {"name": "com.ex.p.Private", "exported": false, "entry": "private", "screens": [{"name": "private", "widgets": []}]}
    ]}"#;
    let mut app = SimApp::from_json(json).unwrap();
    let outcome = explore(&mut app, None, &config(1));
    assert!(outcome.assessments[1].launch_failed);
    assert_eq!(outcome.plan.get("com.ex.p.Private"), 0);
    assert_eq!(outcome.component_runs[1].exit, ComponentExit::NotScheduled);
    assert!(!outcome.events.iter().any(|e| e.action.to_string() == "launch(com.ex.p.Private)"));
}

#[test]
fn rotation_crash_is_recorded() {
    let json = r#"{"package": "com.ex.r", "components": [
        {"name": "com.ex.r.Main", "entry": "home", "screens": [{"name": "home",
          "crash_on_rotate": {"exception_type": "java.lang.IllegalStateException", "frame": "com.ex.r.Main.onConfigurationChanged"},
          "widgets": [{"id": "b", "class": "android.widget.Button", "text": "B", "bounds": [0,0,1080,100], "clickable": true}]}]}
    ]}"#;
    let mut app = SimApp::from_json(json).unwrap();
    let outcome = explore(&mut app, None, &config(1));
    assert!(!outcome.crashes.is_empty());
    assert!(outcome.crashes.iter().all(|c| c.event.stack_top_frame == "com.ex.r.Main.onConfigurationChanged"));
    assert_eq!(outcome.crashes[0].after_action.as_deref(), Some("rotate(LANDSCAPE)"));
}

#[test]
fn rotation_reveal_spawns_one_nested_analysis() {
    let mut app = sim("benign_rotate.json");
    let outcome = explore(&mut app, None, &config(1));
    assert!(outcome.events.iter().any(|e| e.target_text.as_deref() == Some("Extra") && !e.replayed));
}

#[test]
fn budget_caps_an_endless_component() {
    let mut app = sim("growing_list.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { tau: 10_000, total_budget_secs: 100, ..config(1) };
    let outcome = explore(&mut app, None, &cfg);
    let run = &outcome.component_runs[0];
    assert_eq!(run.exit, ComponentExit::BudgetSpent);
    let spent = run.end_ms - run.start_ms;
    // overshoot is at most one action and its settle wait
    assert!(spent >= run.planned_ms && spent <= run.planned_ms + 2 * cfg.idle_wait_ms, "{spent} vs {}", run.planned_ms);
}

#[test]
fn same_seed_same_events() {
    let run = |seed| {
        let mut app = sim("mixed_sentiment.json");
        explore(&mut app, None, &config(seed)).events
    };
    assert_eq!(run(11), run(11));
    assert_ne!(
        run(11).iter().map(|e| e.action.clone()).collect::<Vec<_>>(),
        run(12).iter().map(|e| e.action.clone()).collect::<Vec<_>>()
    );
}

#[test]
fn coverage_samples_are_monotone_and_end_at_totals() {
    let mut app = sim("growing_list.json");
    let cfg = vlmfuzz::explorer::ExplorerConfig { tau: 10_000, total_budget_secs: 400, ..config(1) };
    let outcome = explore(&mut app, None, &cfg);
    let c = &outcome.coverage;
    assert!(c.len() >= 5);
    for w in c.windows(2) {
        assert!(w[1].mono_ms > w[0].mono_ms);
        assert!(w[1].states_discovered >= w[0].states_discovered);
        assert!(w[1].transitions_discovered >= w[0].transitions_discovered);
        assert!(w[1].components_launched >= w[0].components_launched);
    }
    let last = c.last().unwrap();
    assert_eq!(last.states_discovered, outcome.graph.states().len());
    assert_eq!(last.transitions_discovered, outcome.graph.transitions().len());
}

#[test]
fn bad_config_is_rejected() {
    let mut app = sim("benign_hub.json");
    let package = app.package().to_string();
    let comps = app.manifest();
    for cfg in [
        vlmfuzz::explorer::ExplorerConfig { tau: 0, ..config(1) },
        vlmfuzz::explorer::ExplorerConfig { progress_timeout_ms: 10, ..config(1) },
    ] {
        assert!(vlmfuzz::explorer::run_executor(&mut app, None, &package, &comps, &cfg).is_err());
    }
}

#[test]
fn components_that_never_run_dry_use_their_whole_share() {
    let component = |name: &str, buttons: usize| {
        let widgets: Vec<String> = (0..buttons)
            .map(|i| {
                format!(
                    r#"{{"id": "b{i}", "class": "android.widget.Button", "text": "Add {i}", "bounds": [0, {}, 1080, {}], "clickable": true,
                        "behavior": {{"type": "append_list_item", "text": "Row"}}}}"#,
                    i * 100,
                    i * 100 + 90
                )
            })
            .collect();
        format!(r#"{{"name": "com.ex.three.{name}", "entry": "{name}", "screens": [{{"name": "{name}", "widgets": [{}]}}]}}"#, widgets.join(","))
    };
    let json = format!(
        r#"{{"package": "com.ex.three", "components": [{}, {}, {}]}}"#,
        component("A", 1),
        component("B", 3),
        component("C", 6)
    );
    let mut app = SimApp::from_json(&json).unwrap();
    let cfg = vlmfuzz::explorer::ExplorerConfig { tau: 10_000, total_budget_secs: 90, ..config(1) };
    let outcome = explore(&mut app, None, &cfg);
    assert_eq!(outcome.component_runs.len(), 3);
    for run in &outcome.component_runs {
        assert!(run.launches > 0, "{} never launched", run.component);
        let spent = (run.end_ms - run.start_ms) as f64;
        let planned = run.planned_ms as f64;
        assert!((spent - planned).abs() <= 0.10 * planned, "{}: {spent} vs {planned}", run.component);
    }
}
