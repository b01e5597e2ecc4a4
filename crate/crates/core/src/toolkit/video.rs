//! Videos are manifests: a frame rate and an ordered list of PNG frames
//! stored alongside the manifest.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::ToolError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub fps: f64,
    /// Frame files relative to the artifact directory.
    pub frames: Vec<String>,
}

impl VideoManifest {
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        if self.frames.is_empty() {
            return Err("manifest lists no frames".into());
        }
        Ok(())
    }

    /// Index of the frame shown at `t` seconds.
    pub fn frame_at(&self, t: f64) -> usize {
        let i = (t.max(0.0) * self.fps + 1e-9).floor() as usize;
        i.min(self.frames.len().saturating_sub(1))
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("manifest serializes")
    }

    pub fn slice(&self, frames: RangeInclusive<usize>) -> VideoManifest {
        VideoManifest {
            fps: self.fps,
            frames: self.frames[frames].to_vec(),
        }
    }
}

/// A clip around a timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct HighlightWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub frames: RangeInclusive<usize>,
}

/// Frames covering `[max(0, t - half), min(duration, t + half)]`, i.e.
/// indices `floor(start * fps) ..= ceil(end * fps) - 1`.
pub fn highlight_window(manifest: &VideoManifest, t: f64, half_window_s: f64) -> Result<HighlightWindow, ToolError> {
    manifest.validate().map_err(ToolError::MalformedManifest)?;
    let duration = manifest.duration();
    if !(0.0..=duration).contains(&t) {
        return Err(ToolError::TimestampOutOfRange { t, duration });
    }
    let start_s = (t - half_window_s).max(0.0);
    let end_s = (t + half_window_s).min(duration);
    let last_frame = manifest.frames.len() - 1;
    let first = ((start_s * manifest.fps + 1e-9).floor() as usize).min(last_frame);
    let last = ((end_s * manifest.fps - 1e-9).ceil() as usize)
        .saturating_sub(1)
        .clamp(first, last_frame);
    Ok(HighlightWindow {
        start_s,
        end_s,
        frames: first..=last,
    })
}
