//! The perception unit: finished gestures become masks, pointed text, stroke
//! drafts or drag records.

mod mask;
mod ocr;
mod segment;
mod stroke;

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointing::{GestureError, GestureKind, PointerEvent};
use crate::session::{ArtifactKind, PendingDrag, PendingDragRecord, Session, SessionError};

pub use mask::Mask;
pub use ocr::{best_annotation, box_overlap, sidecar_path, FixtureOcr, OcrAnnotation, OcrBackend};
pub use segment::{segment_at, FloodFillSegmenter, SegmenterBackend};
pub use stroke::{line_pixels, rasterize, Stroke, StrokeDraft};

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("seed {seed:?} outside {width}x{height} image")]
    SeedOutOfBounds {
        seed: (u32, u32),
        width: u32,
        height: u32,
    },
    #[error("tolerance must be non-negative, got {0}")]
    InvalidTolerance(f64),
    #[error("stroke has no vertices")]
    EmptyStroke,
    #[error("gestures cannot target a {0} artifact")]
    UnsupportedTarget(ArtifactKind),
    #[error(transparent)]
    Gesture(#[from] GestureError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// What a gesture turned into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerceptionResult {
    Mask { mask: String },
    Text { mask: String, text: String },
    Draft { draft: String, strokes: usize },
    Drag { mask: String, dx: i64, dy: i64 },
}

impl PerceptionResult {
    pub fn describe(&self) -> String {
        match self {
            PerceptionResult::Mask { mask } => format!("Selected region {mask}."),
            PerceptionResult::Text { mask, text } if text.is_empty() => {
                format!("Selected region {mask}; no text found there.")
            }
            PerceptionResult::Text { mask, text } => format!("Text in region {mask}: \"{text}\""),
            PerceptionResult::Draft { draft, strokes } => {
                format!("Draft {draft} now holds {strokes} stroke(s).")
            }
            PerceptionResult::Drag { mask, dx, dy } => {
                format!("Recorded a move of {mask} by ({dx}, {dy}) px.")
            }
        }
    }

    pub fn artifact(&self) -> &str {
        match self {
            PerceptionResult::Mask { mask }
            | PerceptionResult::Text { mask, .. }
            | PerceptionResult::Drag { mask, .. } => mask,
            PerceptionResult::Draft { draft, .. } => draft,
        }
    }
}

/// The raster a gesture lands on. Video gestures address one frame.
pub fn target_raster(session: &Session, event: &PointerEvent) -> Result<RgbImage, PerceptionError> {
    let target = session
        .state()
        .artifact(&event.target_artifact)
        .ok_or_else(|| GestureError::UnknownTarget(event.target_artifact.clone()))?;
    match target.kind {
        ArtifactKind::Image => Ok(session.load_image(&target.id)?),
        ArtifactKind::Video => {
            let manifest = session.load_video(&target.id)?;
            let idx = manifest.frame_at(event.timestamp_s.unwrap_or(0.0));
            Ok(session.load_frame(&manifest, idx)?)
        }
        other => Err(PerceptionError::UnsupportedTarget(other)),
    }
}

/// Appends strokes to the open draft, or opens a new one. Returns the id of
/// the draft artifact now holding all accumulated strokes.
pub fn store_stroke(
    session: &mut Session,
    strokes: Vec<Stroke>,
    canvas_size: (u32, u32),
    base_image: Option<String>,
) -> Result<String, PerceptionError> {
    if strokes.iter().any(|s| s.points.is_empty()) {
        return Err(PerceptionError::EmptyStroke);
    }
    let mut draft = match session.state().open_draft.clone() {
        Some(id) => session.load_draft(&id)?,
        None => StrokeDraft::new(canvas_size, base_image),
    };
    let (w, h) = draft.canvas_size;
    draft.strokes.extend(strokes.into_iter().map(|mut s| {
        for p in &mut s.points {
            p.0 = p.0.min(w.saturating_sub(1));
            p.1 = p.1.min(h.saturating_sub(1));
        }
        s
    }));
    let id = session.put_draft(&draft, "gesture")?;
    session.state_mut().open_draft = Some(id.clone());
    Ok(id)
}

/// Segmentation and OCR backends plus the stroke sampling stride.
#[derive(Clone)]
pub struct PerceptionUnit {
    pub segmenter: Arc<dyn SegmenterBackend>,
    pub ocr: Arc<dyn OcrBackend>,
    /// Every n-th path point of a stroke seeds the fill.
    pub stroke_stride: usize,
}

impl std::fmt::Debug for PerceptionUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerceptionUnit")
            .field("stroke_stride", &self.stroke_stride)
            .finish_non_exhaustive()
    }
}

impl PerceptionUnit {
    pub fn new(segmenter: Arc<dyn SegmenterBackend>, ocr: Arc<dyn OcrBackend>) -> Self {
        Self {
            segmenter,
            ocr,
            stroke_stride: 4,
        }
    }

    /// Union of fills seeded at every `stroke_stride`-th sample.
    pub fn stroke_selection(&self, image: &RgbImage, event: &PointerEvent) -> Result<Mask, PerceptionError> {
        let (w, h) = image.dimensions();
        let stride = self.stroke_stride.max(1);
        let mut union: Option<Mask> = None;
        for s in event.samples.iter().step_by(stride) {
            let m = self.segmenter.segment(image, s.to_pixel(w, h))?;
            match union.as_mut() {
                Some(u) => u.union_with(&m),
                None => union = Some(m),
            }
        }
        Ok(union.expect("validated traces are non-empty"))
    }

    /// Applies one classified gesture to the session. `route_to_ocr` sends a
    /// click's region through the OCR backend as well.
    pub fn handle_gesture(
        &self,
        event: &PointerEvent,
        session: &mut Session,
        route_to_ocr: bool,
    ) -> Result<PerceptionResult, PerceptionError> {
        let target_kind = session
            .state()
            .artifact(&event.target_artifact)
            .map(|a| a.kind)
            .ok_or_else(|| GestureError::UnknownTarget(event.target_artifact.clone()))?;
        if target_kind == ArtifactKind::Video {
            session.state_mut().pointer_timestamp = Some(event.timestamp_s.unwrap_or(0.0));
        }

        match event.kind {
            GestureKind::Click | GestureKind::Stroke => {
                let image = target_raster(session, event)?;
                let (w, h) = image.dimensions();
                let mut mask = if event.kind == GestureKind::Click {
                    self.segmenter.segment(&image, event.samples[0].to_pixel(w, h))?
                } else {
                    self.stroke_selection(&image, event)?
                };
                mask.source_image = Some(event.target_artifact.clone());
                let id = session.put_mask(&mask, "gesture")?;
                session.state_mut().active_mask = Some(id.clone());
                if event.kind == GestureKind::Click && route_to_ocr {
                    let text = self.ocr.read(&image, &mask);
                    return Ok(PerceptionResult::Text { mask: id, text });
                }
                Ok(PerceptionResult::Mask { mask: id })
            }
            GestureKind::Draw => {
                let image = target_raster(session, event)?;
                let (w, h) = image.dimensions();
                let points = event.samples.iter().map(|s| s.to_pixel(w, h)).collect();
                let stroke = Stroke::new(points, event.style.unwrap_or_default());
                let base = (target_kind == ArtifactKind::Image).then(|| event.target_artifact.clone());
                let draft = store_stroke(session, vec![stroke], (w, h), base)?;
                let strokes = session.load_draft(&draft)?.strokes.len();
                Ok(PerceptionResult::Draft { draft, strokes })
            }
            GestureKind::Drag => {
                let mask_id = session
                    .state()
                    .active_mask
                    .clone()
                    .ok_or(GestureError::DragWithoutSelection)?;
                let mask = session.load_mask(&mask_id)?;
                let first = event.samples[0].to_pixel(mask.width, mask.height);
                let last = event.samples[event.samples.len() - 1].to_pixel(mask.width, mask.height);
                let displacement = PendingDrag {
                    dx: last.0 as i64 - first.0 as i64,
                    dy: last.1 as i64 - first.1 as i64,
                };
                session.state_mut().pending_drag = Some(PendingDragRecord {
                    mask: mask_id.clone(),
                    displacement,
                });
                Ok(PerceptionResult::Drag {
                    mask: mask_id,
                    dx: displacement.dx,
                    dy: displacement.dy,
                })
            }
        }
    }
}
