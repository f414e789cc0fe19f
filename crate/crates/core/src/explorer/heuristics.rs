//! Text sentiment and tap ordering for the non-vision performer.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hierarchy::{Bounds, Widget};

pub const SHIPPED_LEXICON: &str = include_str!("../../data/sentiment.txt");

/// Same-row tolerance as a fraction of screen height.
pub const ROW_EPSILON_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Neutral,
    Positive,
    Negative,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: BTreeMap<String, Sentiment>,
}

impl Lexicon {
    /// Parses `<positive|negative> <word>` lines; `#` starts a comment line.
    /// Unrecognized lines are ignored.
    pub fn parse(text: &str) -> Self {
        let mut words = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let Some((class, word)) = line.split_once(char::is_whitespace) else { continue };
            let s = match class {
                "positive" => Sentiment::Positive,
                "negative" => Sentiment::Negative,
                _ => continue,
            };
            words.insert(word.trim().to_lowercase(), s);
        }
        Lexicon { words }
    }

    pub fn shipped() -> &'static Lexicon {
        static LEX: OnceLock<Lexicon> = OnceLock::new();
        LEX.get_or_init(|| Lexicon::parse(SHIPPED_LEXICON))
    }

    pub fn classify(&self, text: &str) -> Sentiment {
        let norm = normalize(text);
        if norm.is_empty() {
            return Sentiment::Neutral;
        }
        if let Some(s) = self.words.get(&norm) {
            return *s;
        }
        let first = norm.split_whitespace().next().unwrap_or("");
        let first = first.trim_end_matches(|c: char| c.is_ascii_punctuation());
        self.words.get(first).copied().unwrap_or(Sentiment::Neutral)
    }
}

fn normalize(text: &str) -> String {
    text.trim().to_lowercase().trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_string()
}

/// Sentiment of a widget's visible text (content description when it has no
/// text), using the shipped lexicon.
pub fn classify_sentiment(text: &str) -> Sentiment {
    Lexicon::shipped().classify(text)
}

pub fn widget_sentiment(widget: &Widget) -> Sentiment {
    classify_sentiment(widget.display_text())
}

/// Indices of tappables that share a row with another tappable: vertical
/// centers within `epsilon` and no horizontal overlap.
pub fn same_row_members(widgets: &[Widget], epsilon: f64) -> Vec<bool> {
    let mut member = vec![false; widgets.len()];
    for i in 0..widgets.len() {
        for j in i + 1..widgets.len() {
            let (a, b) = (&widgets[i].bounds, &widgets[j].bounds);
            let dy = (center_y(a) - center_y(b)).abs();
            let disjoint = a.x2 <= b.x1 || b.x2 <= a.x1;
            if dy <= epsilon && disjoint {
                member[i] = true;
                member[j] = true;
            }
        }
    }
    member
}

fn center_y(b: &Bounds) -> f64 {
    (b.y1 as f64 + b.y2 as f64) / 2.0
}

/// Tap groups in execution order, as indices into the input slice.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TapOrder {
    pub neutral: Vec<usize>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub same_row: Vec<usize>,
}

impl TapOrder {
    pub fn into_vec(self) -> Vec<usize> {
        let mut v = self.neutral;
        v.extend(self.positive);
        v.extend(self.negative);
        v.extend(self.same_row);
        v
    }
}

/// Groups tappables by sentiment, with widgets sharing a row pulled into a
/// final group. The first three groups are shuffled with `rng`; the row group
/// runs top to bottom, left to right.
pub fn group_tap_actions<R: Rng + ?Sized>(widgets: &[Widget], screen_height: i32, rng: &mut R) -> TapOrder {
    let epsilon = ROW_EPSILON_FRACTION * screen_height as f64;
    let row = same_row_members(widgets, epsilon);
    let mut order = TapOrder::default();
    for (i, w) in widgets.iter().enumerate() {
        if row[i] {
            order.same_row.push(i);
            continue;
        }
        match widget_sentiment(w) {
            Sentiment::Neutral => order.neutral.push(i),
            Sentiment::Positive => order.positive.push(i),
            Sentiment::Negative => order.negative.push(i),
        }
    }
    order.neutral.shuffle(rng);
    order.positive.shuffle(rng);
    order.negative.shuffle(rng);
    // band rows: centers within epsilon of the band's first member share it
    order.same_row.sort_by(|&a, &b| center_y(&widgets[a].bounds).total_cmp(&center_y(&widgets[b].bounds)));
    let mut band = Vec::with_capacity(order.same_row.len());
    let (mut current, mut top) = (0usize, f64::NEG_INFINITY);
    for &i in &order.same_row {
        let y = center_y(&widgets[i].bounds);
        if y - top > epsilon {
            if top.is_finite() {
                current += 1;
            }
            top = y;
        }
        band.push((current, widgets[i].bounds.x1, i));
    }
    band.sort();
    order.same_row = band.into_iter().map(|(_, _, i)| i).collect();
    order
}

pub fn order_tap_actions<R: Rng + ?Sized>(widgets: &[Widget], screen_height: i32, rng: &mut R) -> Vec<Widget> {
    group_tap_actions(widgets, screen_height, rng).into_vec().into_iter().map(|i| widgets[i].clone()).collect()
}
