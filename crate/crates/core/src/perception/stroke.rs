use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::pointing::StrokeStyle;

/// A drawn polyline in pixel space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<(u32, u32)>,
    pub color: [u8; 3],
    pub width: u32,
}

impl Stroke {
    pub fn new(points: Vec<(u32, u32)>, style: StrokeStyle) -> Self {
        Self {
            points,
            color: style.color,
            width: style.width.max(1),
        }
    }
}

/// Strokes collected for a generation tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeDraft {
    pub strokes: Vec<Stroke>,
    pub canvas_size: (u32, u32),
    pub base_image: Option<String>,
}

impl StrokeDraft {
    pub fn new(canvas_size: (u32, u32), base_image: Option<String>) -> Self {
        Self {
            strokes: Vec::new(),
            canvas_size,
            base_image,
        }
    }

    pub fn in_bounds(&self) -> bool {
        let (w, h) = self.canvas_size;
        self.strokes
            .iter()
            .flat_map(|s| &s.points)
            .all(|&(x, y)| x < w && y < h)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("draft serializes")
    }
}

/// Integer line walk from `a` to `b`, both ends included.
pub fn line_pixels(a: (u32, u32), b: (u32, u32)) -> Vec<(u32, u32)> {
    let (mut x0, mut y0) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        out.push((x0 as u32, y0 as u32));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
    out
}

fn stamp(canvas: &mut RgbImage, (x, y): (u32, u32), width: u32, color: Rgb<u8>) {
    let lo = (width as i64 - 1) / 2;
    let hi = width as i64 / 2;
    let (w, h) = canvas.dimensions();
    for dy in -lo..=hi {
        for dx in -lo..=hi {
            let px = x as i64 + dx;
            let py = y as i64 + dy;
            if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                canvas.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

/// Paints every stroke onto `base` (or a white canvas of the draft's size).
pub fn rasterize(draft: &StrokeDraft, base: Option<&RgbImage>) -> RgbImage {
    let mut canvas = match base {
        Some(img) => img.clone(),
        None => RgbImage::from_pixel(draft.canvas_size.0, draft.canvas_size.1, Rgb([255, 255, 255])),
    };
    for stroke in &draft.strokes {
        let color = Rgb(stroke.color);
        match stroke.points.as_slice() {
            [] => {}
            [p] => stamp(&mut canvas, *p, stroke.width, color),
            pts => {
                for seg in pts.windows(2) {
                    for p in line_pixels(seg[0], seg[1]) {
                        stamp(&mut canvas, p, stroke.width, color);
                    }
                }
            }
        }
    }
    canvas
}
