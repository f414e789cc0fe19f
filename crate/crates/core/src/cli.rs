//! Command-line front end.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::action::parse_action;
use crate::budget::{allocate_budget, assess_complexity};
use crate::device::adb::{adb_exec, SystemAdb};
use crate::device::{self, AdbDevice, DeviceAdapter, DeviceError, SimApp};
use crate::explorer::{run_executor, ExplorerConfig, ExplorerError};
use crate::hierarchy::{interactive_widgets, parse_hierarchy, state_signature};
use crate::manifest::{manifest_package, parse_manifest, ComponentDecl};
use crate::report::write_run_artifacts;
use crate::vlm::http::HttpVlmClient;
use crate::vlm::mock::{MockScript, MockVlmClient};
use crate::vlm::VlmClient;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEVICE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vlmfuzz", version, about = "Recursive GUI exploration for Android apps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explore a target and write a run report.
    Fuzz(FuzzArgs),
    /// Assess component complexity and print the budget plan.
    Assess(TargetArgs),
    /// Parse a UI hierarchy dump and list its interactive widgets.
    ParseHierarchy {
        file: PathBuf,
        #[arg(long, default_value = "unknown")]
        component: String,
    },
    /// Re-execute an event log against a simulated app.
    ReplayLog {
        #[arg(long)]
        sim: PathBuf,
        log: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Simulated app spec (JSON).
    #[arg(long, conflicts_with = "adb")]
    pub sim: Option<PathBuf>,
    /// Device serial for a live run.
    #[arg(long)]
    pub adb: Option<String>,
    /// APK, or a manifest dump, for a live run.
    #[arg(long)]
    pub apk: Option<PathBuf>,
    /// Total budget, e.g. 90s, 10m, 1h.
    #[arg(long, default_value = "600s", value_parser = parse_duration)]
    pub budget: Duration,
    /// Milliseconds to wait after each action.
    #[arg(long, default_value_t = 1500)]
    pub idle_ms: u64,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long, default_value_t = 2)]
    pub tau: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// mock:PATH, live or off.
    #[arg(long, default_value = "off")]
    pub vlm: String,
    #[arg(long, default_value = "vlmfuzz-out")]
    pub out: PathBuf,
    /// External components to explore instead of leaving.
    #[arg(long, value_delimiter = ',')]
    pub non_ignore: Vec<String>,
}

/// Accepts `90`, `90s`, `15m`, `2h`.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    let (num, mult) = match s.char_indices().last() {
        Some((i, 's')) => (&s[..i], 1),
        Some((i, 'm')) => (&s[..i], 60),
        Some((i, 'h')) => (&s[..i], 3600),
        _ => (s, 1),
    };
    let n: u64 = num.trim().parse().map_err(|_| format!("bad duration {s:?}"))?;
    Ok(Duration::from_secs(n * mult))
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

impl From<ExplorerError> for CliError {
    fn from(e: ExplorerError) -> Self {
        match e {
            ExplorerError::Device(d) => CliError::Device(d),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

struct Target {
    name: String,
    package: String,
    components: Vec<ComponentDecl>,
    device: Box<dyn DeviceAdapter>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn open_target(args: &TargetArgs) -> Result<Target, CliError> {
    if let Some(path) = &args.sim {
        let app = SimApp::from_json(&read(path)?).map_err(config_err)?;
        return Ok(Target {
            name: path.display().to_string(),
            package: app.package().to_string(),
            components: app.manifest(),
            device: Box::new(app),
        });
    }
    let Some(serial) = &args.adb else {
        return Err(CliError::Config("one of --sim or --adb is required".into()));
    };
    let apk = args.apk.as_ref().ok_or_else(|| CliError::Config("--adb needs --apk".into()))?;
    let dump = if matches!(apk.extension().and_then(|e| e.to_str()), Some("xml" | "txt")) {
        read(apk)?
    } else {
        let args = ["dump".to_string(), "xmltree".into(), apk.display().to_string(), "AndroidManifest.xml".into()];
        let out = adb_exec("aapt", &args, Duration::from_secs(60)).map_err(config_err)?;
        String::from_utf8_lossy(&out).into_owned()
    };
    let components = parse_manifest(&dump).map_err(config_err)?;
    let package = manifest_package(&dump).ok_or_else(|| CliError::Config("manifest has no package".into()))?;
    let runner = SystemAdb { serial: Some(serial.clone()), ..Default::default() };
    Ok(Target {
        name: apk.display().to_string(),
        device: Box::new(AdbDevice::new(Box::new(runner), &package, &components)),
        package,
        components,
    })
}

fn open_vlm(spec: &str) -> Result<Option<Box<dyn VlmClient>>, CliError> {
    match spec {
        "off" => Ok(None),
        "live" => Ok(Some(Box::new(HttpVlmClient::from_env().map_err(config_err)?))),
        other => {
            let path = other
                .strip_prefix("mock:")
                .ok_or_else(|| CliError::Config(format!("--vlm must be mock:PATH, live or off, not {other:?}")))?;
            let script = MockScript::parse(&read(Path::new(path))?).map_err(config_err)?;
            Ok(Some(Box::new(MockVlmClient::new(script))))
        }
    }
}

fn fuzz(args: FuzzArgs) -> Result<(), CliError> {
    let mut target = open_target(&args.target)?;
    let mut vlm = open_vlm(&args.vlm)?;
    let config = ExplorerConfig {
        tau: args.tau,
        idle_wait_ms: args.target.idle_ms,
        total_budget_secs: args.target.budget.as_secs(),
        rng_seed: args.seed,
        non_ignore_components: args.non_ignore,
        vlm_enabled: vlm.is_some(),
        ..Default::default()
    };
    config.validate()?;
    let outcome = run_executor(
        target.device.as_mut(),
        vlm.as_deref_mut().map(|v| v as &mut dyn VlmClient),
        &target.package,
        &target.components,
        &config,
    )?;
    let report = write_run_artifacts(&args.out, &target.name, &config, &outcome).map_err(config_err)?;
    println!(
        "{} states, {} transitions, {} events, {} unique crashes; report in {}",
        report.states,
        report.transitions,
        report.events,
        report.crashes.len(),
        args.out.display()
    );
    Ok(())
}

fn assess(args: TargetArgs) -> Result<(), CliError> {
    let mut target = open_target(&args)?;
    let assessments = assess_complexity(target.device.as_mut(), &target.components, args.idle_ms);
    let secs = args.budget.as_secs();
    let plan = allocate_budget(&assessments, secs - secs / 10).map_err(config_err)?;
    for a in &assessments {
        println!(
            "{}\t{}\t{}\t{}\t{}s",
            a.component,
            a.interactive_count,
            a.menu_item_count,
            if a.launch_failed { "failed" } else { "ok" },
            plan.get(&a.component)
        );
    }
    Ok(())
}

fn parse_hierarchy_cmd(file: &Path, component: &str) -> Result<(), CliError> {
    let snap = parse_hierarchy(&read(file)?, component).map_err(config_err)?;
    println!("state {}", state_signature(&snap));
    for (i, w) in interactive_widgets(&snap).iter().enumerate() {
        println!("{}\t{}\t{}\t{}\t{}", i + 1, w.class_name, w.resource_id, w.bounds, w.display_text());
    }
    Ok(())
}

/// Re-issues every logged action and returns the distinct logged and reached
/// state counts.
pub fn replay_event_log(app: &mut SimApp, log: &str, settle_ms: u64) -> Result<(usize, usize), String> {
    let mut logged = BTreeSet::new();
    let mut reached = BTreeSet::new();
    for (n, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [_, _, action, result] = fields[..] else {
            return Err(format!("line {}: expected 4 tab-separated fields", n + 1));
        };
        let action = parse_action(action).ok_or_else(|| format!("line {}: bad action {action:?}", n + 1))?;
        logged.insert(result.to_string());
        let live = device::snapshot(app).map_err(|e| e.to_string())?;
        if let Err(e) = device::execute(app, &action, &live) {
            tracing::warn!(line = n + 1, error = %e, "action failed during replay");
        }
        app.wait_ms(settle_ms);
        let after = device::snapshot(app).map_err(|e| e.to_string())?;
        reached.insert(state_signature(&after).to_string());
    }
    Ok((logged.len(), reached.len()))
}

fn replay_log(sim: &Path, log: &Path) -> Result<(), CliError> {
    let mut app = SimApp::from_json(&read(sim)?).map_err(config_err)?;
    let (logged, reached) = replay_event_log(&mut app, &read(log)?, ExplorerConfig::default().idle_wait_ms)
        .map_err(CliError::Config)?;
    println!("{logged} states logged, {reached} states reached");
    Ok(())
}

/// Parses `argv` and runs the command. Never panics on bad input.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Fuzz(a) => fuzz(a),
        Command::Assess(a) => assess(a),
        Command::ParseHierarchy { file, component } => parse_hierarchy_cmd(&file, &component),
        Command::ReplayLog { sim, log } => replay_log(&sim, &log),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Device(e)) => {
            eprintln!("device error: {e}");
            EXIT_DEVICE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration("90").unwrap(), Duration::from_secs(90));
        assert_eq!(parse_duration("90s").unwrap(), Duration::from_secs(90));
        assert_eq!(parse_duration("15m").unwrap(), Duration::from_secs(900));
        assert_eq!(parse_duration("2h").unwrap(), Duration::from_secs(7200));
        assert!(parse_duration("soon").is_err());
    }

    #[test]
    fn config_errors_exit_2() {
        assert_eq!(run(["vlmfuzz", "fuzz", "--sim", "/nonexistent/app.json"]), EXIT_CONFIG);
        assert_eq!(run(["vlmfuzz", "fuzz"]), EXIT_CONFIG);
        assert_eq!(run(["vlmfuzz", "bogus"]), EXIT_CONFIG);
    }
}
