//! The eight-name color vocabulary used by the built-in describers.

use image::RgbImage;

/// Name and RGB anchor, in tie-break order.
pub const BASIC_COLORS: [(&str, [u8; 3]); 8] = [
    ("black", [0, 0, 0]),
    ("white", [255, 255, 255]),
    ("red", [255, 0, 0]),
    ("green", [0, 255, 0]),
    ("blue", [0, 0, 255]),
    ("yellow", [255, 255, 0]),
    ("purple", [128, 0, 128]),
    ("gray", [128, 128, 128]),
];

/// Nearest anchor by Euclidean RGB distance; earlier names win ties.
pub fn nearest_color_name(rgb: [f64; 3]) -> &'static str {
    let mut best = (f64::INFINITY, BASIC_COLORS[0].0);
    for (name, anchor) in BASIC_COLORS {
        let d: f64 = (0..3).map(|c| (rgb[c] - anchor[c] as f64).powi(2)).sum();
        if d < best.0 {
            best = (d, name);
        }
    }
    best.1
}

/// Mean RGB over the pixels accepted by `keep`, or `None` if none are.
pub fn mean_color(image: &RgbImage, keep: impl Fn(u32, u32) -> bool) -> Option<[f64; 3]> {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for (x, y, p) in image.enumerate_pixels() {
        if keep(x, y) {
            for (acc, v) in sum.iter_mut().zip(p.0) {
                *acc += v as u64;
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.map(|s| s as f64 / n as f64))
}
