//! Device adapter over the `adb` command-line tool.

use std::collections::BTreeSet;
use std::io::Read;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use thiserror::Error;
use tracing::debug;

use super::{logcat, CrashEvent, DeviceAdapter, DeviceError};
use crate::action::{Direction, Distance, Orientation};
use crate::hierarchy::{Bounds, Widget};
use crate::manifest::{ComponentDecl, ComponentKind, ExtraValue, Intent};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdbError {
    #[error("adb is not available: {0}")]
    AdbUnavailable(String),
    #[error("`{command}` did not finish within {timeout_ms} ms")]
    CommandTimeout { command: String, timeout_ms: u64 },
    #[error("`{command}` failed with status {status}: {stderr}")]
    CommandFailed { command: String, status: i32, stderr: String },
    #[error("unexpected adb output: {0}")]
    UnexpectedOutput(String),
}

/// Runs one adb invocation and returns its stdout.
pub trait CommandRunner {
    fn run(&mut self, args: &[String], timeout: Duration) -> Result<Vec<u8>, AdbError>;
}

/// Runs the real `adb` binary.
#[derive(Debug, Clone)]
pub struct SystemAdb {
    pub adb_path: String,
    pub serial: Option<String>,
}

impl Default for SystemAdb {
    fn default() -> Self {
        SystemAdb { adb_path: "adb".into(), serial: None }
    }
}

impl CommandRunner for SystemAdb {
    fn run(&mut self, args: &[String], timeout: Duration) -> Result<Vec<u8>, AdbError> {
        let mut full = Vec::new();
        if let Some(s) = &self.serial {
            full.push("-s".to_string());
            full.push(s.clone());
        }
        full.extend_from_slice(args);
        adb_exec(&self.adb_path, &full, timeout)
    }
}

/// Spawns `program args`, killing it if it outlives `timeout`.
pub fn adb_exec(program: &str, args: &[String], timeout: Duration) -> Result<Vec<u8>, AdbError> {
    let command = format!("{program} {}", args.join(" "));
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| AdbError::AdbUnavailable(e.to_string()))?;
    // drain pipes on helper threads so a chatty child cannot block on a full pipe
    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_t = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_t = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });
    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(AdbError::CommandTimeout { command, timeout_ms: timeout.as_millis() as u64 });
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => return Err(AdbError::AdbUnavailable(e.to_string())),
        }
    };
    let out = out_t.join().unwrap_or_default();
    let err = err_t.join().unwrap_or_default();
    if !status.success() {
        return Err(AdbError::CommandFailed {
            command,
            status: status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&err).trim().to_string(),
        });
    }
    Ok(out)
}

const KEY_HOME: u32 = 3;
const KEY_BACK: u32 = 4;
const KEY_ENTER: u32 = 66;
const KEY_MENU: u32 = 82;
const LONG_PRESS_MS: u32 = 1000;
const DUMP_PATH: &str = "/sdcard/window_dump.xml";

/// Escapes text for `input text`, which runs through the device shell and
/// reads `%s` as a space.
pub fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '(' | ')' | '<' | '>' | '|' | ';' | '&' | '*' | '\\' | '~' | '"' | '\'' | '`' | '$' | '#' | '!' | '?'
            | '[' | ']' | '{' | '}' | '%' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

fn distance_fraction(d: Distance) -> f32 {
    match d {
        Distance::Short => 0.2,
        Distance::Medium => 0.4,
        Distance::Long => 0.8,
    }
}

/// Start and end points of a swipe over `b`. Directions name the finger's
/// motion.
pub fn swipe_points(b: &Bounds, direction: Direction, distance: Distance) -> ((i32, i32), (i32, i32)) {
    let (cx, cy) = b.center();
    let f = distance_fraction(distance);
    let dx = (b.width() as f32 * f / 2.0) as i32;
    let dy = (b.height() as f32 * f / 2.0) as i32;
    match direction {
        Direction::Up => ((cx, cy + dy), (cx, cy - dy)),
        Direction::Down => ((cx, cy - dy), (cx, cy + dy)),
        Direction::Left => ((cx + dx, cy), (cx - dx, cy)),
        Direction::Right => ((cx - dx, cy), (cx + dx, cy)),
    }
}

fn resumed_activity() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:mResumedActivity|topResumedActivity|ResumedActivity):.*?ActivityRecord\{\S+ \S+ ([^/\s]+)/([^\s}]+)")
            .expect("static pattern")
    })
}

/// Extracts the resumed activity from `dumpsys activity activities` output.
pub fn parse_resumed_activity(dumpsys: &str) -> Option<String> {
    let caps = resumed_activity().captures(dumpsys)?;
    let (pkg, comp) = (&caps[1], &caps[2]);
    Some(match comp.strip_prefix('.') {
        Some(rest) => format!("{pkg}.{rest}"),
        None => comp.to_string(),
    })
}

fn intent_args(intent: &Intent) -> Vec<String> {
    let mut args = Vec::new();
    if !intent.action.is_empty() {
        args.extend(["-a".to_string(), intent.action.clone()]);
    }
    for c in &intent.categories {
        args.extend(["-c".to_string(), c.clone()]);
    }
    if let Some(d) = &intent.data_uri {
        args.extend(["-d".to_string(), d.clone()]);
    }
    for (k, v) in &intent.extras {
        let (flag, value) = match v {
            ExtraValue::Str(s) => ("--es", s.clone()),
            ExtraValue::Int(i) => ("--ei", i.to_string()),
            ExtraValue::Bool(b) => ("--ez", b.to_string()),
        };
        args.extend([flag.to_string(), k.clone(), value]);
    }
    args
}

pub struct AdbDevice {
    runner: Box<dyn CommandRunner>,
    package: String,
    services: BTreeSet<String>,
    pub command_timeout: Duration,
    started: Instant,
    screen: Option<Bounds>,
}

impl AdbDevice {
    pub fn new(runner: Box<dyn CommandRunner>, package: &str, components: &[ComponentDecl]) -> Self {
        AdbDevice {
            runner,
            package: package.to_string(),
            services: components
                .iter()
                .filter(|c| c.kind == ComponentKind::Service)
                .map(|c| c.name.clone())
                .collect(),
            command_timeout: Duration::from_secs(30),
            started: Instant::now(),
            screen: None,
        }
    }

    fn adb(&mut self, args: &[&str]) -> Result<String, DeviceError> {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        self.adb_owned(args)
    }

    fn adb_owned(&mut self, args: Vec<String>) -> Result<String, DeviceError> {
        debug!(target: "adb", "{}", args.join(" "));
        let out = self.runner.run(&args, self.command_timeout)?;
        Ok(String::from_utf8_lossy(&out).into_owned())
    }

    fn shell(&mut self, cmd: &[&str]) -> Result<String, DeviceError> {
        let mut args = vec!["shell"];
        args.extend_from_slice(cmd);
        self.adb(&args)
    }

    fn keyevent(&mut self, code: u32) -> Result<(), DeviceError> {
        self.shell(&["input", "keyevent", &code.to_string()]).map(|_| ())
    }

    fn screen_bounds(&mut self) -> Result<Bounds, DeviceError> {
        if let Some(b) = self.screen {
            return Ok(b);
        }
        let out = self.shell(&["wm", "size"])?;
        let size = out
            .lines()
            .filter_map(|l| l.split(':').nth(1))
            .filter_map(|s| s.trim().split_once('x'))
            .filter_map(|(w, h)| Some((w.trim().parse::<i32>().ok()?, h.trim().parse::<i32>().ok()?)))
            .next_back()
            .ok_or_else(|| AdbError::UnexpectedOutput(format!("wm size: {}", out.trim())))?;
        let b = Bounds::new(0, 0, size.0, size.1);
        self.screen = Some(b);
        Ok(b)
    }

    fn drag(&mut self, from: (i32, i32), to: (i32, i32), ms: u32) -> Result<(), DeviceError> {
        let args = [from.0, from.1, to.0, to.1].map(|v| v.to_string());
        let ms = ms.to_string();
        self.shell(&["input", "swipe", &args[0], &args[1], &args[2], &args[3], &ms]).map(|_| ())
    }

    fn qualified(&self, target: &str) -> String {
        format!("{}/{}", self.package, target)
    }
}

impl DeviceAdapter for AdbDevice {
    fn launch(&mut self, intent: &Intent) -> Result<(), DeviceError> {
        let is_service = intent.target.as_ref().is_some_and(|t| self.services.contains(t));
        let mut args = vec!["shell".to_string(), "am".to_string()];
        args.push(if is_service { "startservice" } else { "start" }.to_string());
        if let Some(t) = &intent.target {
            args.extend(["-n".to_string(), self.qualified(t)]);
        }
        args.extend(intent_args(intent));
        let out = self.adb_owned(args)?;
        let name = intent.target.clone().unwrap_or_else(|| intent.action.clone());
        if out.contains("does not exist") || out.contains("Error type 3") {
            return Err(DeviceError::UnknownComponent(name));
        }
        if out.contains("SecurityException") || out.contains("Permission Denial") || out.contains("Error:") {
            return Err(DeviceError::LaunchRefused(name));
        }
        Ok(())
    }

    fn broadcast(&mut self, intent: &Intent) -> Result<(), DeviceError> {
        let mut args = vec!["shell".to_string(), "am".to_string(), "broadcast".to_string()];
        if let Some(t) = &intent.target {
            args.extend(["-n".to_string(), self.qualified(t)]);
        }
        args.extend(intent_args(intent));
        self.adb_owned(args).map(|_| ())
    }

    fn tap(&mut self, widget: &Widget) -> Result<(), DeviceError> {
        let (x, y) = widget.bounds.center();
        self.shell(&["input", "tap", &x.to_string(), &y.to_string()]).map(|_| ())
    }

    fn long_press(&mut self, widget: &Widget) -> Result<(), DeviceError> {
        let c = widget.bounds.center();
        self.drag(c, c, LONG_PRESS_MS)
    }

    fn swipe(&mut self, widget: &Widget, direction: Direction, distance: Distance) -> Result<(), DeviceError> {
        let (from, to) = swipe_points(&widget.bounds, direction, distance);
        self.drag(from, to, 300)
    }

    fn input_text(&mut self, widget: &Widget, text: &str) -> Result<(), DeviceError> {
        self.tap(widget)?;
        let escaped = escape_input_text(text);
        self.shell(&["input", "text", &escaped]).map(|_| ())
    }

    fn press_back(&mut self) -> Result<(), DeviceError> {
        self.keyevent(KEY_BACK)
    }

    fn press_enter(&mut self) -> Result<(), DeviceError> {
        self.keyevent(KEY_ENTER)
    }

    fn press_menu(&mut self) -> Result<(), DeviceError> {
        self.keyevent(KEY_MENU)
    }

    fn press_home(&mut self) -> Result<(), DeviceError> {
        self.keyevent(KEY_HOME)
    }

    fn resume_app(&mut self) -> Result<(), DeviceError> {
        let pkg = self.package.clone();
        self.shell(&["monkey", "-p", &pkg, "-c", "android.intent.category.LAUNCHER", "1"]).map(|_| ())
    }

    fn rotate(&mut self, orientation: Orientation) -> Result<(), DeviceError> {
        let value = match orientation {
            Orientation::Portrait => "0",
            Orientation::Landscape => "1",
        };
        self.shell(&["settings", "put", "system", "accelerometer_rotation", "0"])?;
        self.shell(&["settings", "put", "system", "user_rotation", value]).map(|_| ())
    }

    fn scroll(&mut self, direction: Direction) -> Result<(), DeviceError> {
        let screen = self.screen_bounds()?;
        let (from, to) = swipe_points(&screen, direction, Distance::Medium);
        self.drag(from, to, 300)
    }

    fn dump_hierarchy(&mut self) -> Result<String, DeviceError> {
        self.shell(&["uiautomator", "dump", DUMP_PATH])?;
        self.shell(&["cat", DUMP_PATH])
    }

    fn screenshot(&mut self) -> Result<Vec<u8>, DeviceError> {
        let args = ["exec-out", "screencap", "-p"].map(String::from);
        Ok(self.runner.run(&args, self.command_timeout)?)
    }

    fn current_component(&mut self) -> Result<String, DeviceError> {
        let out = self.shell(&["dumpsys", "activity", "activities"])?;
        parse_resumed_activity(&out)
            .ok_or_else(|| AdbError::UnexpectedOutput("no resumed activity in dumpsys output".into()).into())
    }

    fn drain_crash_events(&mut self) -> Result<Vec<CrashEvent>, DeviceError> {
        let log = self.adb(&["logcat", "-d", "-b", "crash"])?;
        self.adb(&["logcat", "-c", "-b", "crash"])?;
        Ok(logcat::parse_fatal_exceptions(&log, self.now_ms()))
    }

    fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn wait_ms(&mut self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

#[cfg(test)]
mod tests {
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::hierarchy::WidgetFlags;

    #[derive(Clone, Default)]
    struct Fake {
        calls: Arc<Mutex<Vec<String>>>,
        replies: Arc<Mutex<Vec<(String, String)>>>,
    }

    impl Fake {
        fn reply(&self, prefix: &str, out: &str) {
            self.replies.lock().unwrap().push((prefix.into(), out.into()));
        }

        fn calls(&self) -> Vec<String> {
            self.calls.lock().unwrap().clone()
        }
    }

    impl CommandRunner for Fake {
        fn run(&mut self, args: &[String], _timeout: Duration) -> Result<Vec<u8>, AdbError> {
            let line = args.join(" ");
            self.calls.lock().unwrap().push(line.clone());
            let replies = self.replies.lock().unwrap();
            let out = replies.iter().find(|(p, _)| line.starts_with(p.as_str())).map(|(_, o)| o.clone());
            Ok(out.unwrap_or_default().into_bytes())
        }
    }

    fn device(fake: &Fake) -> AdbDevice {
        let comps = vec![ComponentDecl {
            name: "com.ex.Sync".into(),
            kind: ComponentKind::Service,
            exported: true,
            intent_filters: vec![],
        }];
        AdbDevice::new(Box::new(fake.clone()), "com.ex", &comps)
    }

    fn widget(b: Bounds) -> Widget {
        Widget {
            index: 0,
            class_name: "android.widget.Button".into(),
            text: String::new(),
            resource_id: String::new(),
            content_desc: String::new(),
            package: String::new(),
            hint: String::new(),
            bounds: b,
            flags: WidgetFlags::default(),
            checked: false,
            inherited_interactive: false,
            parent: None,
            children: vec![],
        }
    }

    #[test]
    fn input_commands() {
        let fake = Fake::default();
        let mut d = device(&fake);
        let w = widget(Bounds::new(0, 100, 200, 300));
        d.tap(&w).unwrap();
        d.long_press(&w).unwrap();
        d.input_text(&w, "J.K. Rowling's").unwrap();
        d.press_back().unwrap();
        d.press_menu().unwrap();
        assert_eq!(
            fake.calls(),
            [
                "shell input tap 100 200",
                "shell input swipe 100 200 100 200 1000",
                "shell input tap 100 200",
                "shell input text J.K.%sRowling\\'s",
                "shell input keyevent 4",
                "shell input keyevent 82",
            ]
        );
    }

    #[test]
    fn launch_builds_am_arguments() {
        let fake = Fake::default();
        let mut d = device(&fake);
        let mut intent = Intent::explicit("com.ex.Main", "android.intent.action.VIEW");
        intent.data_uri = Some("http://fuzz.example/path".into());
        intent.extras.insert("n".into(), ExtraValue::Int(3));
        d.launch(&intent).unwrap();
        d.launch(&Intent::explicit("com.ex.Sync", "a.B")).unwrap();
        let calls = fake.calls();
        assert_eq!(
            calls[0],
            "shell am start -n com.ex/com.ex.Main -a android.intent.action.VIEW -d http://fuzz.example/path --ei n 3"
        );
        assert!(calls[1].starts_with("shell am startservice -n com.ex/com.ex.Sync"));
    }

    #[test]
    fn launch_errors_are_classified() {
        let fake = Fake::default();
        fake.reply("shell am start", "Error: Activity class {com.ex/com.ex.X} does not exist.");
        let mut d = device(&fake);
        assert!(matches!(d.launch(&Intent::explicit("com.ex.X", "a")), Err(DeviceError::UnknownComponent(_))));
        let fake = Fake::default();
        fake.reply("shell am start", "java.lang.SecurityException: Permission Denial: starting Intent");
        let mut d = device(&fake);
        assert!(matches!(d.launch(&Intent::explicit("com.ex.Y", "a")), Err(DeviceError::LaunchRefused(_))));
    }

    #[test]
    fn resumed_activity_forms() {
        let short = "  mResumedActivity: ActivityRecord{8c1 u0 com.ex/.Main t12}";
        assert_eq!(parse_resumed_activity(short).as_deref(), Some("com.ex.Main"));
        let full = "topResumedActivity=ActivityRecord{1 u0 com.ex/com.other.Page t3}".replace('=', ": ");
        assert_eq!(parse_resumed_activity(&full).as_deref(), Some("com.other.Page"));
        assert_eq!(parse_resumed_activity("nothing"), None);
    }

    #[test]
    fn scroll_uses_the_screen_size() {
        let fake = Fake::default();
        fake.reply("shell wm size", "Physical size: 1080x1920\n");
        let mut d = device(&fake);
        d.scroll(Direction::Up).unwrap();
        d.scroll(Direction::Down).unwrap();
        let calls = fake.calls();
        assert_eq!(calls.iter().filter(|c| c.contains("wm size")).count(), 1);
        assert_eq!(calls[1], "shell input swipe 540 1344 540 576 300");
    }

    #[test]
    fn crash_drain_reads_and_clears() {
        let fake = Fake::default();
        fake.reply(
            "logcat -d",
            "E AndroidRuntime: FATAL EXCEPTION: main\nE AndroidRuntime: java.lang.RuntimeException: x\nE AndroidRuntime: \tat a.B.c(B.java:1)\n",
        );
        let mut d = device(&fake);
        let events = d.drain_crash_events().unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].stack_top_frame, "a.B.c");
        assert_eq!(fake.calls()[1], "logcat -c -b crash");
    }

    #[test]
    fn swipe_geometry() {
        let b = Bounds::new(0, 0, 100, 1000);
        assert_eq!(swipe_points(&b, Direction::Up, Distance::Long), ((50, 900), (50, 100)));
        assert_eq!(swipe_points(&b, Direction::Right, Distance::Short), ((40, 500), (60, 500)));
    }

    #[test]
    fn missing_binary_is_unavailable() {
        let err = adb_exec("definitely-not-a-real-adb-binary", &[], Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, AdbError::AdbUnavailable(_)));
    }

    #[test]
    fn slow_command_times_out() {
        let err = adb_exec("sleep", &["5".to_string()], Duration::from_millis(100)).unwrap_err();
        assert!(matches!(err, AdbError::CommandTimeout { .. }));
    }
}
