//! Pointer traces and gesture classification.
//!
//! Clients send normalized samples; classification turns a finished trace into
//! exactly one of click, stroke, drag or draw. Classification is a pure
//! function of the samples, the client's mode hint and the active mask.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::Mask;

/// One pointer sample. Coordinates are normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerSample {
    pub x: f64,
    pub y: f64,
    pub t_ms: u64,
}

impl PointerSample {
    pub fn new(x: f64, y: f64, t_ms: u64) -> Self {
        Self { x, y, t_ms }
    }

    /// Pixel coordinate inside a `width x height` raster.
    pub fn to_pixel(&self, width: u32, height: u32) -> (u32, u32) {
        (
            normalized_to_pixel(self.x, width),
            normalized_to_pixel(self.y, height),
        )
    }
}

/// Maps a normalized coordinate onto the pixel whose cell contains it.
pub fn normalized_to_pixel(v: f64, extent: u32) -> u32 {
    let extent = extent.max(1);
    let p = (v.clamp(0.0, 1.0) * extent as f64).floor() as u32;
    p.min(extent - 1)
}

/// Center of a pixel cell in normalized coordinates.
pub fn pixel_to_normalized(p: u32, extent: u32) -> f64 {
    (p as f64 + 0.5) / extent.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Click,
    Stroke,
    Drag,
    Draw,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeHint {
    #[default]
    Auto,
    Select,
    Drag,
    Draw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerEvent {
    pub kind: GestureKind,
    pub samples: Vec<PointerSample>,
    pub target_artifact: String,
    pub mode_hint: ModeHint,
    /// Frame time when the target is a video.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
    /// Pen style for draw gestures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StrokeStyle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeStyle {
    pub color: [u8; 3],
    pub width: u32,
}

impl Default for StrokeStyle {
    fn default() -> Self {
        Self {
            color: [0, 0, 0],
            width: 1,
        }
    }
}

impl PointerEvent {
    pub fn extent(&self) -> f64 {
        trace_extent(&self.samples)
    }
}

/// Gesture boundaries. Both limits must hold for an auto-mode click.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClickThreshold {
    pub max_extent: f64,
    pub max_duration_ms: u64,
}

impl Default for ClickThreshold {
    fn default() -> Self {
        Self {
            max_extent: 0.01,
            max_duration_ms: 500,
        }
    }
}

/// What the classifier may know about the session.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointerContext<'a> {
    /// Whether `target_artifact` resolves in the session.
    pub target_known: bool,
    /// The session's active mask, if any.
    pub active_mask: Option<&'a Mask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GestureError {
    #[error("pointer trace has no samples")]
    EmptyTrace,
    #[error("unknown target artifact `{0}`")]
    UnknownTarget(String),
    #[error("drag gesture without an active selection")]
    DragWithoutSelection,
    #[error("invalid sample field `{field}`: {reason}")]
    InvalidSample { field: String, reason: String },
}

/// Maximum pairwise Euclidean displacement across the trace.
pub fn trace_extent(samples: &[PointerSample]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            best = best.max((a.x - b.x).hypot(a.y - b.y));
        }
    }
    best
}

pub fn trace_duration_ms(samples: &[PointerSample]) -> u64 {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => b.t_ms.saturating_sub(a.t_ms),
        _ => 0,
    }
}

/// Checks coordinate ranges and timestamp monotonicity. Field paths name the
/// offending sample the same way the wire schema does (`samples[3].x`).
pub fn validate_samples(samples: &[PointerSample]) -> Result<(), GestureError> {
    if samples.is_empty() {
        return Err(GestureError::EmptyTrace);
    }
    let mut prev_t = 0;
    for (i, s) in samples.iter().enumerate() {
        for (name, v) in [("x", s.x), ("y", s.y)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GestureError::InvalidSample {
                    field: format!("samples[{i}].{name}"),
                    reason: format!("{v} is outside [0, 1]"),
                });
            }
        }
        if i > 0 && s.t_ms < prev_t {
            return Err(GestureError::InvalidSample {
                field: format!("samples[{i}].t_ms"),
                reason: format!("{} precedes previous sample at {prev_t}", s.t_ms),
            });
        }
        prev_t = s.t_ms;
    }
    Ok(())
}

fn starts_inside(samples: &[PointerSample], mask: &Mask) -> bool {
    let first = samples[0];
    let (px, py) = first.to_pixel(mask.width, mask.height);
    mask.get(px, py)
}

/// Classifies a finished trace into one gesture kind.
pub fn classify_gesture(
    samples: &[PointerSample],
    mode_hint: ModeHint,
    target_artifact: &str,
    ctx: PointerContext<'_>,
    threshold: ClickThreshold,
) -> Result<PointerEvent, GestureError> {
    validate_samples(samples)?;
    if !ctx.target_known {
        return Err(GestureError::UnknownTarget(target_artifact.to_string()));
    }

    let extent = trace_extent(samples);
    let small = extent <= threshold.max_extent;

    let kind = match mode_hint {
        ModeHint::Draw => GestureKind::Draw,
        ModeHint::Drag => {
            if ctx.active_mask.is_none() {
                return Err(GestureError::DragWithoutSelection);
            }
            GestureKind::Drag
        }
        ModeHint::Select => {
            if small {
                GestureKind::Click
            } else {
                GestureKind::Stroke
            }
        }
        ModeHint::Auto => {
            let dragging = !small
                && ctx
                    .active_mask
                    .filter(|m| m.source_image.as_deref() == Some(target_artifact))
                    .is_some_and(|m| starts_inside(samples, m));
            if dragging {
                GestureKind::Drag
            } else if small && trace_duration_ms(samples) <= threshold.max_duration_ms {
                GestureKind::Click
            } else {
                GestureKind::Stroke
            }
        }
    };

    Ok(PointerEvent {
        kind,
        samples: samples.to_vec(),
        target_artifact: target_artifact.to_string(),
        mode_hint,
        timestamp_s: None,
        style: None,
    })
}
