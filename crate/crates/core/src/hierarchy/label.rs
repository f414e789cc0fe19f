use std::collections::BTreeMap;

use image::Rgb;

use super::draw::{Canvas, GLYPH};
use super::{interactive_widgets, HierarchyError, UiSnapshot, Widget};

/// Screenshot with a numbered box drawn over every interactive widget.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScreenshot {
    pub image: Vec<u8>,
    pub label_map: BTreeMap<u32, Widget>,
    /// Device coordinates of each label tag's top-left corner.
    pub anchors: BTreeMap<u32, (i32, i32)>,
}

const BOX: Rgb<u8> = Rgb([220, 30, 30]);
const TAG_TEXT: Rgb<u8> = Rgb([255, 255, 255]);

pub fn label_widgets(snapshot: &UiSnapshot) -> Result<LabeledScreenshot, HierarchyError> {
    let shot = snapshot.screenshot.as_ref().ok_or(HierarchyError::NoScreenshot)?;
    let widgets = interactive_widgets(snapshot);
    if widgets.is_empty() {
        return Ok(LabeledScreenshot {
            image: shot.0.clone(),
            label_map: BTreeMap::new(),
            anchors: BTreeMap::new(),
        });
    }
    let mut canvas = Canvas::from_png(&shot.0, &snapshot.screen())?;
    let mut label_map = BTreeMap::new();
    let mut anchors = BTreeMap::new();
    for (i, w) in widgets.into_iter().enumerate() {
        let label = i as u32 + 1;
        let b = w.bounds;
        canvas.stroke_rect(&b, BOX, 2);
        let text = label.to_string();
        // tag sits inside the widget's top-left corner
        let inset = (2.0 * canvas.scale) as i32;
        let ax = (b.x1 + inset).min(b.x2);
        let ay = (b.y1 + inset).min(b.y2);
        let tag_w = ((text.len() as u32 * GLYPH + 2) as f32 * canvas.scale) as i32;
        let tag_h = ((GLYPH + 2) as f32 * canvas.scale) as i32;
        let tag = super::Bounds::new(ax, ay, (ax + tag_w).min(b.x2.max(ax + 1)), (ay + tag_h).min(b.y2.max(ay + 1)));
        canvas.fill_rect(&tag, BOX);
        canvas.text(ax + canvas.scale as i32, ay + canvas.scale as i32, &text, TAG_TEXT, None);
        anchors.insert(label, (ax, ay));
        label_map.insert(label, w);
    }
    Ok(LabeledScreenshot { image: canvas.to_png(), label_map, anchors })
}
