//! Minimal raster helpers for synthetic screens and label overlays.

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{ImageFormat, Rgb, RgbImage};

use super::{Bounds, HierarchyError, UiSnapshot};

pub const GLYPH: u32 = 8;

pub struct Canvas {
    pub image: RgbImage,
    /// Device pixels per image pixel.
    pub scale: f32,
}

impl Canvas {
    pub fn new(screen: &Bounds, scale: f32) -> Self {
        let w = ((screen.width().max(1) as f32) / scale).ceil().max(1.0) as u32;
        let h = ((screen.height().max(1) as f32) / scale).ceil().max(1.0) as u32;
        Canvas { image: RgbImage::from_pixel(w, h, Rgb([250, 250, 250])), scale }
    }

    pub fn from_png(bytes: &[u8], screen: &Bounds) -> Result<Self, HierarchyError> {
        let image = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| HierarchyError::BadScreenshot(e.to_string()))?
            .to_rgb8();
        let scale = if image.width() == 0 {
            1.0
        } else {
            screen.width().max(1) as f32 / image.width() as f32
        };
        Ok(Canvas { image, scale })
    }

    fn to_px(&self, v: i32) -> i64 {
        (v as f32 / self.scale).round() as i64
    }

    fn put(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.image.width() && (y as u32) < self.image.height() {
            self.image.put_pixel(x as u32, y as u32, color);
        }
    }

    pub fn fill_rect(&mut self, b: &Bounds, color: Rgb<u8>) {
        let (x1, y1, x2, y2) = (self.to_px(b.x1), self.to_px(b.y1), self.to_px(b.x2), self.to_px(b.y2));
        let x2 = x2.min(self.image.width() as i64);
        let y2 = y2.min(self.image.height() as i64);
        for y in y1.max(0)..y2 {
            for x in x1.max(0)..x2 {
                self.put(x, y, color);
            }
        }
    }

    pub fn stroke_rect(&mut self, b: &Bounds, color: Rgb<u8>, thickness: i64) {
        let (x1, y1, x2, y2) = (self.to_px(b.x1), self.to_px(b.y1), self.to_px(b.x2), self.to_px(b.y2));
        for t in 0..thickness {
            for x in x1..=x2 {
                self.put(x, y1 + t, color);
                self.put(x, y2 - t, color);
            }
            for y in y1..=y2 {
                self.put(x1 + t, y, color);
                self.put(x2 - t, y, color);
            }
        }
    }

    /// Draws `text` with its top-left corner at device coordinates (x, y),
    /// clipped to `clip_width` image pixels.
    pub fn text(&mut self, x: i32, y: i32, text: &str, color: Rgb<u8>, clip_width: Option<i64>) {
        let (px, py) = (self.to_px(x), self.to_px(y));
        let mut cx = px;
        for ch in text.chars() {
            if let Some(limit) = clip_width {
                if cx + GLYPH as i64 > px + limit {
                    break;
                }
            }
            let glyph = BASIC_FONTS.get(ch).or_else(|| BASIC_FONTS.get('?')).unwrap_or([0; 8]);
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..8 {
                    if bits & (1 << col) != 0 {
                        self.put(cx + col as i64, py + row as i64, color);
                    }
                }
            }
            cx += GLYPH as i64;
        }
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.image
            .write_to(&mut out, ImageFormat::Png)
            .expect("encoding an in-memory RGB image cannot fail");
        out.into_inner()
    }
}

fn class_color(class_name: &str) -> Rgb<u8> {
    let short = class_name.rsplit('.').next().unwrap_or(class_name);
    match short {
        s if s.ends_with("EditText") => Rgb([255, 255, 255]),
        s if s.contains("Button") => Rgb([200, 220, 245]),
        s if s.contains("ProgressBar") => Rgb([230, 200, 120]),
        s if s.contains("CheckBox") || s.contains("Switch") => Rgb([210, 240, 210]),
        s if s.contains("Layout") || s.contains("View") && !s.contains("Text") => Rgb([240, 240, 240]),
        _ => Rgb([235, 235, 235]),
    }
}

/// Flat-rectangle rendering of a snapshot: one box per widget with its text.
/// Rendered at half resolution to keep encoding cheap.
pub fn render_snapshot(snapshot: &UiSnapshot) -> Vec<u8> {
    let screen = snapshot.screen();
    let mut canvas = Canvas::new(&screen, 2.0);
    for w in &snapshot.widgets {
        if !w.bounds.has_area() {
            continue;
        }
        canvas.fill_rect(&w.bounds, class_color(&w.class_name));
        canvas.stroke_rect(&w.bounds, Rgb([160, 160, 160]), 1);
        let label = if w.text.is_empty() { w.hint.as_str() } else { w.text.as_str() };
        if !label.is_empty() {
            let width = (w.bounds.width() as f32 / canvas.scale) as i64 - 4;
            canvas.text(w.bounds.x1 + 8, w.bounds.y1 + 8, label, Rgb([20, 20, 20]), Some(width));
        }
    }
    canvas.to_png()
}
