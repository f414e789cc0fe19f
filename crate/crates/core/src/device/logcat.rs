//! Extraction of fatal exceptions from `logcat` output.

use std::sync::OnceLock;

use regex::Regex;

use super::CrashEvent;

fn runtime_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"AndroidRuntime(?:\(\s*\d+\))?:\s?(.*)$").expect("static pattern"))
}

/// Parses every `FATAL EXCEPTION` block in `log`. Events are stamped with
/// `mono_ms`, since logcat wall-clock times do not map onto the run clock.
pub fn parse_fatal_exceptions(log: &str, mono_ms: u64) -> Vec<CrashEvent> {
    let body: Vec<&str> = log
        .lines()
        .filter_map(|l| runtime_line().captures(l).map(|c| c.get(1).map_or("", |m| m.as_str())))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < body.len() {
        if !body[i].starts_with("FATAL EXCEPTION") {
            i += 1;
            continue;
        }
        i += 1;
        while i < body.len() && body[i].starts_with("Process:") {
            i += 1;
        }
        let Some(head) = body.get(i) else { break };
        let (exception_type, message) = match head.split_once(": ") {
            Some((t, m)) => (t.trim().to_string(), m.trim().to_string()),
            None => (head.trim().to_string(), String::new()),
        };
        i += 1;
        let mut frame = String::new();
        while i < body.len() && !body[i].starts_with("FATAL EXCEPTION") {
            let line = body[i].trim();
            if frame.is_empty() {
                if let Some(f) = line.strip_prefix("at ") {
                    frame = f.split('(').next().unwrap_or(f).trim().to_string();
                }
            }
            i += 1;
        }
        out.push(CrashEvent { exception_type, message, stack_top_frame: frame, fatal: true, mono_ms });
    }
    out
}
