//! The closed action alphabet and its textual DSL.
//!
//! Every action the explorer can send to a device has a single-line rendering
//! (`tap(3)`, `input(4, "1")`, `swipe(2, up, short)`, ...). The same grammar is
//! used for the vision model's `Steps:` list and for the event log, so an event
//! log can be re-executed later.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::manifest::Intent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Short,
    Medium,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Portrait,
    Landscape,
}

/// One UI or system event. Labels are 1-based indices into the interactive
/// widget list of the screen the action is executed on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Tap { label: u32 },
    LongPress { label: u32 },
    Swipe { label: u32, direction: Direction, distance: Distance },
    Input { label: u32, text: String },
    TapBack,
    TapEnter,
    TapMenu,
    TapHome,
    Resume,
    ScrollUp,
    ScrollDown,
    Rotate { orientation: Orientation },
    Launch { intent: Intent },
    Broadcast { intent: Intent },
}

impl Action {
    /// Widget label targeted by this action, if any.
    pub fn label(&self) -> Option<u32> {
        match self {
            Action::Tap { label }
            | Action::LongPress { label }
            | Action::Swipe { label, .. }
            | Action::Input { label, .. } => Some(*label),
            _ => None,
        }
    }

    /// Actions that belong to the vision model's eight-function vocabulary.
    pub fn is_vision_vocabulary(&self) -> bool {
        matches!(
            self,
            Action::Tap { .. }
                | Action::LongPress { .. }
                | Action::Swipe { .. }
                | Action::Input { .. }
                | Action::TapBack
                | Action::TapEnter
                | Action::ScrollUp
                | Action::ScrollDown
        )
    }
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

impl Distance {
    fn as_str(self) -> &'static str {
        match self {
            Distance::Short => "short",
            Distance::Medium => "medium",
            Distance::Long => "long",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Some(Distance::Short),
            "medium" => Some(Distance::Medium),
            "long" => Some(Distance::Long),
            _ => None,
        }
    }
}

pub(crate) fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tap { label } => write!(f, "tap({label})"),
            Action::LongPress { label } => write!(f, "long_press({label})"),
            Action::Swipe { label, direction, distance } => {
                write!(f, "swipe({label}, {}, {})", direction.as_str(), distance.as_str())
            }
            Action::Input { label, text } => write!(f, "input({label}, {})", quote(text)),
            Action::TapBack => f.write_str("tap(BACK)"),
            Action::TapEnter => f.write_str("tap(ENTER)"),
            Action::TapMenu => f.write_str("tap(MENU)"),
            Action::TapHome => f.write_str("tap(HOME)"),
            Action::Resume => f.write_str("resume()"),
            Action::ScrollUp => f.write_str("scroll(UP)"),
            Action::ScrollDown => f.write_str("scroll(DOWN)"),
            Action::Rotate { orientation } => match orientation {
                Orientation::Portrait => f.write_str("rotate(PORTRAIT)"),
                Orientation::Landscape => f.write_str("rotate(LANDSCAPE)"),
            },
            Action::Launch { intent } => {
                write!(f, "launch({})", intent.target.as_deref().unwrap_or(""))
            }
            Action::Broadcast { intent } => write!(f, "broadcast({})", intent.action),
        }
    }
}

/// Splits a call like `input(3, "a, b")` into its name and raw argument list.
/// Quoted arguments may use `"..."` with backslash escapes, or the `\"...\"`
/// delimiter style some models emit.
fn split_call(src: &str) -> Option<(String, Vec<String>)> {
    let src = src.trim();
    let open = src.find('(')?;
    if !src.ends_with(')') {
        return None;
    }
    let name = src[..open].trim().to_ascii_lowercase();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    let inner = &src[open + 1..src.len() - 1];
    let mut args = Vec::new();
    let mut rest = inner.trim_start();
    if rest.trim().is_empty() {
        return Some((name, args));
    }
    loop {
        rest = rest.trim_start();
        let (arg, remaining) = if let Some(body) = rest.strip_prefix("\\\"") {
            let end = body.find("\\\"")?;
            (body[..end].to_string(), &body[end + 2..])
        } else if let Some(body) = rest.strip_prefix('"') {
            let mut out = String::new();
            let mut chars = body.char_indices();
            let mut end = None;
            while let Some((i, c)) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => out.push('\n'),
                        Some((_, 't')) => out.push('\t'),
                        Some((_, other)) => out.push(other),
                        None => return None,
                    },
                    '"' => {
                        end = Some(i);
                        break;
                    }
                    _ => out.push(c),
                }
            }
            let end = end?;
            (out, &body[end + 1..])
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            (rest[..end].trim().to_string(), &rest[end..])
        };
        args.push(arg);
        let remaining = remaining.trim_start();
        if remaining.is_empty() {
            break;
        }
        rest = remaining.strip_prefix(',')?;
    }
    Some((name, args))
}

fn parse_label(s: &str) -> Option<u32> {
    s.trim().parse().ok()
}

/// Parses one action in the DSL. `launch`/`broadcast` lines only carry the
/// target, so the reconstructed intent is bare.
pub fn parse_action(src: &str) -> Option<Action> {
    let (name, args) = split_call(src)?;
    let arg = |i: usize| args.get(i).map(|s| s.trim());
    match (name.as_str(), args.len()) {
        ("tap", 1) => match arg(0)?.to_ascii_uppercase().as_str() {
            "BACK" => Some(Action::TapBack),
            "ENTER" => Some(Action::TapEnter),
            "MENU" => Some(Action::TapMenu),
            "HOME" => Some(Action::TapHome),
            other => parse_label(other).map(|label| Action::Tap { label }),
        },
        ("long_press", 1) => parse_label(arg(0)?).map(|label| Action::LongPress { label }),
        ("swipe", 3) => Some(Action::Swipe {
            label: parse_label(arg(0)?)?,
            direction: Direction::parse(arg(1)?.trim_matches('"'))?,
            distance: Distance::parse(arg(2)?.trim_matches('"'))?,
        }),
        ("input", 2) => Some(Action::Input {
            label: parse_label(arg(0)?)?,
            text: args[1].clone(),
        }),
        ("scroll", 1) => match arg(0)?.to_ascii_uppercase().as_str() {
            "UP" => Some(Action::ScrollUp),
            "DOWN" => Some(Action::ScrollDown),
            _ => None,
        },
        ("rotate", 1) => match arg(0)?.to_ascii_uppercase().as_str() {
            "PORTRAIT" => Some(Action::Rotate { orientation: Orientation::Portrait }),
            "LANDSCAPE" => Some(Action::Rotate { orientation: Orientation::Landscape }),
            _ => None,
        },
        ("resume", 0) => Some(Action::Resume),
        ("launch", 1) => Some(Action::Launch {
            intent: Intent::explicit(arg(0)?, ""),
        }),
        ("broadcast", 1) => Some(Action::Broadcast {
            intent: Intent::broadcast(arg(0)?),
        }),
        _ => None,
    }
}
