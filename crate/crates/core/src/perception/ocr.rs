use std::path::PathBuf;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::Mask;

/// Reads text inside a region. Returns an empty string when nothing is found.
pub trait OcrBackend: Send + Sync {
    fn read(&self, image: &RgbImage, region: &Mask) -> String;
}

/// One sidecar entry. `bbox` is `[x0, y0, x1, y1]` in pixels, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrAnnotation {
    #[serde(rename = "box")]
    pub bbox: [u32; 4],
    pub text: String,
}

/// Number of selected mask pixels inside the annotation box.
pub fn box_overlap(bbox: [u32; 4], mask: &Mask) -> usize {
    let [x0, y0, x1, y1] = bbox;
    let mut n = 0;
    for y in y0..y1.min(mask.height) {
        for x in x0..x1.min(mask.width) {
            if mask.get(x, y) {
                n += 1;
            }
        }
    }
    n
}

/// The annotation with the largest positive overlap; earlier entries win ties.
pub fn best_annotation<'a>(annotations: &'a [OcrAnnotation], mask: &Mask) -> Option<&'a str> {
    let mut best: Option<(usize, &str)> = None;
    for a in annotations {
        let n = box_overlap(a.bbox, mask);
        if n > 0 && best.is_none_or(|(b, _)| n > b) {
            best = Some((n, &a.text));
        }
    }
    best.map(|(_, t)| t)
}

/// Sidecar path for an image artifact: `<root>/<image id>.ocr.json`.
pub fn sidecar_path(root: &std::path::Path, image_id: &str) -> PathBuf {
    root.join(format!("{image_id}.ocr.json"))
}

/// Looks up annotation files keyed by the mask's source image artifact id.
#[derive(Debug, Clone)]
pub struct FixtureOcr {
    pub root: PathBuf,
}

impl FixtureOcr {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl OcrBackend for FixtureOcr {
    fn read(&self, _image: &RgbImage, region: &Mask) -> String {
        let Some(id) = region.source_image.as_deref() else {
            return String::new();
        };
        let Ok(raw) = std::fs::read(sidecar_path(&self.root, id)) else {
            return String::new();
        };
        let Ok(annotations) = serde_json::from_slice::<Vec<OcrAnnotation>>(&raw) else {
            return String::new();
        };
        best_annotation(&annotations, region).unwrap_or_default().to_string()
    }
}
