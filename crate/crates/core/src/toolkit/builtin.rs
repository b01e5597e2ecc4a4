//! Deterministic stand-ins for the model-backed tools.

use image::{Rgb, RgbImage};
use sha2::{Digest, Sha256};

use super::color::{mean_color, nearest_color_name};
use super::inpaint::onion_peel;
use super::video::{highlight_window, VideoManifest};
use super::{
    ArgKind, ArgMap, ArgSlot, OutputKind, ToolBackend, ToolContext, ToolDescriptor, ToolError, ToolOutput,
    ToolResult,
};
use crate::perception::{rasterize, Mask, OcrBackend, StrokeDraft};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinTool {
    Remove,
    Question,
    Replace,
    Highlight,
    Caption,
    GenerateFromDraft,
    ReadText,
    Move,
}

impl BuiltinTool {
    pub const ALL: [BuiltinTool; 8] = [
        BuiltinTool::Remove,
        BuiltinTool::Question,
        BuiltinTool::Replace,
        BuiltinTool::Highlight,
        BuiltinTool::Caption,
        BuiltinTool::GenerateFromDraft,
        BuiltinTool::ReadText,
        BuiltinTool::Move,
    ];

    pub fn descriptor(self) -> ToolDescriptor {
        use ArgKind::*;
        let image = || ArgSlot::new("image_path", ImagePath);
        let mask = || ArgSlot::new("mask_path", MaskPath);
        match self {
            BuiltinTool::Remove => ToolDescriptor::new(
                "remove_masked_object",
                "erase or delete an object from the image by masking it, like: remove the masked object",
                vec![image(), mask()],
                OutputKind::Image,
            ),
            BuiltinTool::Question => ToolDescriptor::new(
                "question_masked_object",
                "answer a question about a masked region of the image, like: what is the background color in \
                 the masked region, how big is it, what is in this masked figure",
                vec![image(), mask(), ArgSlot::new("question", Question)],
                OutputKind::Text,
            ),
            BuiltinTool::Replace => ToolDescriptor::new(
                "replace_masked_object",
                "replace the masked object with a new object or something generated from a prompt",
                vec![image(), mask(), ArgSlot::new("prompt", Prompt)],
                OutputKind::Image,
            ),
            BuiltinTool::Highlight => ToolDescriptor::new(
                "video_highlight",
                "cut a video into a short tiktok style highlight clip based on a prompt",
                vec![
                    ArgSlot::new("video_path", VideoPath),
                    ArgSlot::new("timestamp", Timestamp),
                    ArgSlot::new("prompt", Prompt),
                ],
                OutputKind::Video,
            ),
            BuiltinTool::Caption => ToolDescriptor::new(
                "caption",
                "describe or caption the whole photo or image",
                vec![image()],
                OutputKind::Text,
            ),
            BuiltinTool::GenerateFromDraft => ToolDescriptor::new(
                "generate_from_draft",
                "generate or create a new image from drawn strokes, a sketch or drawing, and give it a title",
                vec![ArgSlot::new("draft_path", DraftPath), ArgSlot::new("prompt", Prompt)],
                OutputKind::Image,
            ),
            BuiltinTool::ReadText => ToolDescriptor::new(
                "read_text",
                "read or extract the text pointed at in the image",
                vec![image(), mask()],
                OutputKind::Text,
            ),
            BuiltinTool::Move => ToolDescriptor::new(
                "move_masked_object",
                "move or drag the masked object to a new position",
                vec![image(), mask(), ArgSlot::new("drag", Drag)],
                OutputKind::Image,
            ),
        }
    }
}

fn check_dims(image: &RgbImage, mask: &Mask) -> Result<(), ToolError> {
    if image.dimensions() != mask.dimensions() {
        return Err(ToolError::DimensionMismatch {
            image: image.dimensions(),
            mask: mask.dimensions(),
        });
    }
    Ok(())
}

pub fn remove_masked_object(image: &RgbImage, mask: &Mask) -> Result<RgbImage, ToolError> {
    onion_peel(image, mask)
}

fn area_percent(mask: &Mask) -> String {
    let total = mask.width as f64 * mask.height as f64;
    format!("{:.1}%", mask.count() as f64 * 100.0 / total)
}

/// Template answers about a masked region.
pub fn question_masked_object(image: &RgbImage, mask: &Mask, question: &str) -> Result<String, ToolError> {
    check_dims(image, mask)?;
    let q = question.to_lowercase();
    let inside = |x, y| mask.get(x, y);
    let inside_color = mean_color(image, inside).map(nearest_color_name);

    if q.contains("color") || q.contains("colour") {
        let color = if q.contains("background") {
            mean_color(image, |x, y| !mask.get(x, y)).map(nearest_color_name).or(inside_color)
        } else {
            inside_color
        };
        return Ok(color.unwrap_or("unknown").to_string());
    }
    if q.contains("how big") || q.contains("area") {
        return Ok(area_percent(mask));
    }
    let bbox = match mask.bounding_box() {
        Some((x0, y0, x1, y1)) => format!("({x0}, {y0})-({x1}, {y1})"),
        None => "empty".to_string(),
    };
    Ok(format!(
        "The masked region covers {} of the image, is mostly {}, bounding box {}.",
        area_percent(mask),
        inside_color.unwrap_or("unknown"),
        bbox
    ))
}

pub fn caption(image: &RgbImage) -> String {
    let (w, h) = image.dimensions();
    let color = mean_color(image, |_, _| true).map(nearest_color_name).unwrap_or("empty");
    format!("a {w}x{h} image, mostly {color}")
}

/// Deterministic fill color for a prompt.
pub fn prompt_color(prompt: &str) -> Rgb<u8> {
    let d = Sha256::digest(prompt.as_bytes());
    Rgb([d[0], d[1], d[2]])
}

pub enum GenerationInput<'a> {
    Draft { draft: &'a StrokeDraft, base: Option<&'a RgbImage> },
    Masked { image: &'a RgbImage, mask: &'a Mask },
}

/// Returns the generated image and its title.
pub fn conditional_generation(input: Option<GenerationInput<'_>>, prompt: &str) -> Result<(RgbImage, String), ToolError> {
    let out = match input.ok_or(ToolError::NothingToGenerate)? {
        GenerationInput::Masked { image, mask } => {
            check_dims(image, mask)?;
            let color = prompt_color(prompt);
            let mut out = image.clone();
            for (x, y) in mask.pixels() {
                out.put_pixel(x, y, color);
            }
            out
        }
        GenerationInput::Draft { draft, base } => {
            if draft.strokes.is_empty() {
                return Err(ToolError::NothingToGenerate);
            }
            rasterize(draft, base)
        }
    };
    Ok((out, prompt.to_string()))
}

/// Pastes the masked pixels shifted by `(dx, dy)` over the inpainted hole.
pub fn move_masked_object(image: &RgbImage, mask: &Mask, dx: i64, dy: i64) -> Result<RgbImage, ToolError> {
    let mut out = onion_peel(image, mask)?;
    let (w, h) = image.dimensions();
    for (x, y) in mask.pixels() {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
            out.put_pixel(nx as u32, ny as u32, *image.get_pixel(x, y));
        }
    }
    Ok(out)
}

pub fn read_text(ocr: &dyn OcrBackend, image: &RgbImage, mask: &Mask) -> Result<String, ToolError> {
    check_dims(image, mask)?;
    Ok(ocr.read(image, mask))
}

/// Returns the clip manifest and its interpretation line.
pub fn video_highlight(
    ctx: &dyn ToolContext,
    video: &VideoManifest,
    t: f64,
    prompt: &str,
    half_window_s: f64,
) -> Result<(VideoManifest, String), ToolError> {
    let window = highlight_window(video, t, half_window_s)?;
    let clip = video.slice(window.frames.clone());
    let middle = *window.frames.start() + clip.frames.len() / 2;
    let frame = ctx.frame(video, middle)?;
    let text = format!("{}: {}", prompt.trim(), caption(&frame));
    Ok((clip, text))
}

pub fn parse_drag(value: &str) -> Result<(i64, i64), ToolError> {
    let bad = || ToolError::InvalidInput {
        arg: "drag".into(),
        reason: format!("expected `dx,dy`, got `{value}`"),
    };
    let (a, b) = value.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn parse_timestamp(value: &str) -> Result<f64, ToolError> {
    let v = value.trim().trim_end_matches('s');
    v.parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .ok_or_else(|| ToolError::InvalidInput {
            arg: "timestamp".into(),
            reason: format!("`{value}` is not a number of seconds"),
        })
}

/// Backend for one built-in tool.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinBackend {
    pub tool: BuiltinTool,
    pub half_window_s: f64,
}

impl BuiltinBackend {
    pub fn new(tool: BuiltinTool, half_window_s: f64) -> Self {
        Self { tool, half_window_s }
    }
}

fn arg<'a>(args: &'a ArgMap, descriptor: &ToolDescriptor, kind: ArgKind) -> Result<&'a str, ToolError> {
    let slot = descriptor
        .arg(kind)
        .ok_or_else(|| ToolError::MissingInput(format!("{kind:?}")))?;
    args.get(&slot.name)
        .map(String::as_str)
        .ok_or_else(|| ToolError::MissingInput(slot.name.clone()))
}

impl ToolBackend for BuiltinBackend {
    fn invoke(&self, d: &ToolDescriptor, args: &ArgMap, ctx: &dyn ToolContext) -> Result<ToolResult, ToolError> {
        let image = || ctx.image(arg(args, d, ArgKind::ImagePath)?);
        let mask = || ctx.mask(arg(args, d, ArgKind::MaskPath)?);
        let outputs = match self.tool {
            BuiltinTool::Remove => vec![ToolOutput::Image(remove_masked_object(&image()?, &mask()?)?)],
            BuiltinTool::Question => {
                let q = arg(args, d, ArgKind::Question)?;
                vec![ToolOutput::Text(question_masked_object(&image()?, &mask()?, q)?)]
            }
            BuiltinTool::Caption => vec![ToolOutput::Text(caption(&image()?))],
            BuiltinTool::ReadText => vec![ToolOutput::Text(read_text(ctx.ocr(), &image()?, &mask()?)?)],
            BuiltinTool::Replace => {
                let (img, m) = (image()?, mask()?);
                let input = GenerationInput::Masked { image: &img, mask: &m };
                let (out, title) = conditional_generation(Some(input), arg(args, d, ArgKind::Prompt)?)?;
                vec![ToolOutput::Image(out), ToolOutput::Text(title)]
            }
            BuiltinTool::GenerateFromDraft => {
                let draft = ctx.draft(arg(args, d, ArgKind::DraftPath)?)?;
                let base = draft.base_image.as_deref().map(|id| ctx.image(id)).transpose()?;
                let input = GenerationInput::Draft { draft: &draft, base: base.as_ref() };
                let (out, title) = conditional_generation(Some(input), arg(args, d, ArgKind::Prompt)?)?;
                vec![ToolOutput::Image(out), ToolOutput::Text(title)]
            }
            BuiltinTool::Move => {
                let (dx, dy) = parse_drag(arg(args, d, ArgKind::Drag)?)?;
                vec![ToolOutput::Image(move_masked_object(&image()?, &mask()?, dx, dy)?)]
            }
            BuiltinTool::Highlight => {
                let video = ctx.video(arg(args, d, ArgKind::VideoPath)?)?;
                let t = parse_timestamp(arg(args, d, ArgKind::Timestamp)?)?;
                let prompt = arg(args, d, ArgKind::Prompt)?;
                let (clip, text) = video_highlight(ctx, &video, t, prompt, self.half_window_s)?;
                vec![ToolOutput::Video(clip), ToolOutput::Text(text)]
            }
        };
        Ok(ToolResult {
            outputs,
            diagnostics: String::new(),
        })
    }
}
