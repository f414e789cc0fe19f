#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;

use vlmfuzz::action::{Direction, Orientation};
use vlmfuzz::device::{self, DeviceAdapter, SimApp};
use vlmfuzz::explorer::{run_executor, ExplorerConfig, RunOutcome};
use vlmfuzz::hierarchy::{interactive_widgets, state_signature, StateId};
use vlmfuzz::manifest::{ComponentKind, Intent};
use vlmfuzz::vlm::mock::{MockScript, MockVlmClient};
use vlmfuzz::vlm::VlmClient;

pub const BENIGN: [&str; 5] =
    ["benign_hub.json", "benign_wizard.json", "benign_catalog.json", "benign_rotate.json", "benign_dialogs.json"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn sim(name: &str) -> SimApp {
    SimApp::from_json(&fixture(name)).unwrap()
}

pub fn mock(name: &str) -> MockVlmClient {
    MockVlmClient::new(MockScript::parse(&fixture(name)).unwrap())
}

pub fn config(seed: u64) -> ExplorerConfig {
    ExplorerConfig { rng_seed: seed, total_budget_secs: 3600, vlm_enabled: false, ..Default::default() }
}

pub fn explore<'a>(app: &'a mut SimApp, vlm: Option<&'a mut dyn VlmClient>, config: &ExplorerConfig) -> RunOutcome {
    let package = app.package().to_string();
    let components = app.manifest();
    run_executor(app, vlm, &package, &components, config).unwrap()
}

pub fn is_aut(app: &SimApp, component: &str) -> bool {
    app.manifest().iter().any(|c| c.name == component)
}

/// Discovered states that belong to the app under test.
pub fn aut_states(app: &SimApp, outcome: &RunOutcome) -> BTreeSet<StateId> {
    outcome
        .graph
        .states()
        .iter()
        .filter(|(_, info)| is_aut(app, &info.component))
        .map(|(id, _)| id.clone())
        .collect()
}

/// Breadth-first search over the simulated app. From every reachable app
/// state it tries every widget gesture plus every system key, and collects
/// the signatures of the in-app screens it sees.
pub fn bfs_reachable(spec_json: &str) -> BTreeSet<StateId> {
    const LIMIT: usize = 20_000;
    let base = SimApp::from_json(spec_json).unwrap();
    let mut seen_keys = HashSet::new();
    let mut found = BTreeSet::new();
    let mut queue = VecDeque::new();
    for decl in base.manifest().iter().filter(|c| c.kind == ComponentKind::Activity && c.exported) {
        let mut app = base.clone();
        if app.launch(&Intent::explicit(&decl.name, "android.intent.action.MAIN")).is_ok() {
            queue.push_back(app);
        }
    }
    while let Some(app) = queue.pop_front() {
        if !seen_keys.insert(app.state_key()) {
            continue;
        }
        assert!(seen_keys.len() < LIMIT, "oracle state space exploded");
        let mut probe = app.clone();
        let snap = device::snapshot(&mut probe).unwrap();
        if is_aut(&base, &snap.component) {
            found.insert(state_signature(&snap));
        }
        let widgets = interactive_widgets(&snap);
        let mut moves: Vec<Box<dyn Fn(&mut SimApp)>> = vec![
            Box::new(|a| a.press_back().unwrap()),
            Box::new(|a| a.press_menu().unwrap()),
            Box::new(|a| a.press_enter().unwrap()),
            Box::new(|a| a.press_home().unwrap()),
            Box::new(|a| a.resume_app().unwrap()),
            Box::new(|a| a.rotate(Orientation::Landscape).unwrap()),
            Box::new(|a| a.rotate(Orientation::Portrait).unwrap()),
            Box::new(|a| a.scroll(Direction::Up).unwrap()),
            Box::new(|a| a.scroll(Direction::Down).unwrap()),
        ];
        for w in widgets {
            let (w1, w2, w3, w4) = (w.clone(), w.clone(), w.clone(), w);
            moves.push(Box::new(move |a| a.tap(&w1).unwrap()));
            moves.push(Box::new(move |a| a.long_press(&w2).unwrap()));
            moves.push(Box::new(move |a| {
                a.swipe(&w3, Direction::Up, vlmfuzz::action::Distance::Medium).unwrap()
            }));
            moves.push(Box::new(move |a| a.input_text(&w4, "text").unwrap()));
        }
        for m in moves {
            let mut next = app.clone();
            m(&mut next);
            queue.push_back(next);
        }
    }
    found
}

/// Tap event positions of the first analysis of `screen`, in order, with
/// their target texts.
pub fn taps_of_first_analysis(outcome: &RunOutcome, screen: &StateId) -> Vec<String> {
    let Some(first) = outcome.events.iter().find(|e| !e.replayed && e.screen.as_ref() == Some(screen) && e.analysis.is_some())
    else {
        return Vec::new();
    };
    let analysis = first.analysis;
    outcome
        .events
        .iter()
        .filter(|e| !e.replayed && e.analysis == analysis && e.screen.as_ref() == Some(screen))
        .filter(|e| e.action.label().is_some())
        .filter_map(|e| e.target_text.clone())
        .collect()
}
