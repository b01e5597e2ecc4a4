//! Tool registry, descriptor schema and the built-in deterministic tools.
//!
//! Every capability is a [`ToolDescriptor`] paired with a [`ToolBackend`].
//! Built-in backends are pure functions of their inputs. External backends
//! speak the HTTP protocol in [`external`].

pub mod builtin;
pub mod color;
pub mod external;
pub mod inpaint;
pub mod video;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{Mask, OcrBackend, StrokeDraft};
use crate::session::ArtifactKind;

pub use builtin::{BuiltinBackend, BuiltinTool};
pub use video::VideoManifest;

/// Typed argument slot kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    ImagePath,
    MaskPath,
    VideoPath,
    DraftPath,
    Prompt,
    Question,
    Timestamp,
    /// Pixel displacement of a pending drag, written `dx,dy`.
    Drag,
}

impl ArgKind {
    /// Artifact kind an argument of this slot must reference, if any.
    pub fn artifact_kind(self) -> Option<ArtifactKind> {
        match self {
            ArgKind::ImagePath => Some(ArtifactKind::Image),
            ArgKind::MaskPath => Some(ArtifactKind::Mask),
            ArgKind::VideoPath => Some(ArtifactKind::Video),
            ArgKind::DraftPath => Some(ArtifactKind::StrokeDraft),
            ArgKind::Prompt | ArgKind::Question | ArgKind::Timestamp | ArgKind::Drag => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Image,
    Video,
    Text,
    Draft,
}

impl OutputKind {
    pub fn artifact_kind(self) -> ArtifactKind {
        match self {
            OutputKind::Image => ArtifactKind::Image,
            OutputKind::Video => ArtifactKind::Video,
            OutputKind::Text => ArtifactKind::Text,
            OutputKind::Draft => ArtifactKind::StrokeDraft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSlot {
    pub name: String,
    pub kind: ArgKind,
}

impl ArgSlot {
    pub fn new(name: &str, kind: ArgKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    BuiltIn,
    External(String),
}

/// A registered capability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    /// Trigger prose used for routing.
    pub description: String,
    pub args: Vec<ArgSlot>,
    pub output_kind: OutputKind,
    #[serde(default)]
    pub origin: Origin,
}

impl ToolDescriptor {
    pub fn new(name: &str, description: &str, args: Vec<ArgSlot>, output_kind: OutputKind) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            args,
            output_kind,
            origin: Origin::BuiltIn,
        }
    }

    pub fn arg(&self, kind: ArgKind) -> Option<&ArgSlot> {
        self.args.iter().find(|a| a.kind == kind)
    }

    pub fn takes(&self, kind: ArgKind) -> bool {
        self.arg(kind).is_some()
    }

    /// Text output computed from a region and nothing else: the click that
    /// feeds such a tool is read with OCR.
    pub fn reads_region_text(&self) -> bool {
        self.output_kind == OutputKind::Text
            && self.args.len() == 2
            && self.takes(ArgKind::ImagePath)
            && self.takes(ArgKind::MaskPath)
    }

    fn check(&self) -> Result<(), RegistryError> {
        for (i, a) in self.args.iter().enumerate() {
            if self.args[..i].iter().any(|b| b.name == a.name) {
                return Err(RegistryError::DuplicateArg {
                    tool: self.name.clone(),
                    arg: a.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Splits the comma-separated input form into named arguments, in slot
    /// order. Double or single quotes protect commas inside a value. The
    /// final slot absorbs any extra unquoted fields.
    pub fn parse_input(&self, input: &str) -> Result<ArgMap, ToolError> {
        let mut fields = split_fields(input);
        if fields.len() > self.args.len() && !self.args.is_empty() {
            let tail = fields.split_off(self.args.len() - 1).join(",");
            fields.push(tail);
        }
        let fields: Vec<String> = fields.into_iter().map(|f| f.trim().to_string()).collect();
        if fields.len() != self.args.len() {
            return Err(ToolError::Arity {
                tool: self.name.clone(),
                expected: self.args.len(),
                found: fields.len(),
            });
        }
        Ok(self
            .args
            .iter()
            .zip(fields)
            .map(|(slot, v)| (slot.name.clone(), strip_quotes(&v).to_string()))
            .collect())
    }

    /// Inverse of [`parse_input`](Self::parse_input); values containing
    /// commas or quotes are double-quoted.
    pub fn format_input(&self, args: &ArgMap) -> String {
        self.args
            .iter()
            .map(|slot| {
                let v = args.get(&slot.name).map(String::as_str).unwrap_or("");
                if v.contains(',') || v.contains('"') || v.contains('\'') || v != v.trim() {
                    format!("\"{}\"", v.replace('"', "'"))
                } else {
                    v.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn split_fields(input: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for c in input.chars() {
        match (quote, c) {
            (None, '"' | '\'') if cur.trim().is_empty() => {
                quote = Some(c);
                cur.push(c);
            }
            (Some(q), c) if c == q => {
                quote = None;
                cur.push(c);
            }
            (None, ',') => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

/// Trims whitespace and one layer of matching surrounding quotes.
pub fn strip_quotes(s: &str) -> &str {
    let t = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{2018}', '\u{2019}'), ('\u{201c}', '\u{201d}'), ('`', '`')] {
        if t.len() >= open.len_utf8() + close.len_utf8() && t.starts_with(open) && t.ends_with(close) {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim();
        }
    }
    t
}

/// Resolved argument values by slot name: artifact ids or literals.
pub type ArgMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: String,
    pub args: ArgMap,
}

/// Output payloads before they are registered as artifacts.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolOutput {
    Image(RgbImage),
    Text(String),
    Draft(StrokeDraft),
    /// A manifest over frames already in the store.
    Video(VideoManifest),
    /// A video delivered as encoded frames, e.g. by an external tool.
    NewVideo { fps: f64, frames: Vec<Vec<u8>> },
}

impl ToolOutput {
    pub fn kind(&self) -> OutputKind {
        match self {
            ToolOutput::Image(_) => OutputKind::Image,
            ToolOutput::Text(_) => OutputKind::Text,
            ToolOutput::Draft(_) => OutputKind::Draft,
            ToolOutput::Video(_) | ToolOutput::NewVideo { .. } => OutputKind::Video,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolResult {
    /// Primary output first; any further outputs are text annotations.
    pub outputs: Vec<ToolOutput>,
    pub diagnostics: String,
}

impl ToolResult {
    pub fn check_against(&self, descriptor: &ToolDescriptor) -> Result<(), ToolError> {
        let Some(first) = self.outputs.first() else {
            return Err(ToolError::MalformedResponse(format!("`{}` returned no outputs", descriptor.name)));
        };
        if first.kind() != descriptor.output_kind
            || self.outputs[1..].iter().any(|o| o.kind() != OutputKind::Text)
        {
            return Err(ToolError::OutputKindMismatch {
                tool: descriptor.name.clone(),
                expected: descriptor.output_kind,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("mask is {mask:?} but image is {image:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("mask selects nothing")]
    EmptyMask,
    #[error("mask covers the whole image; nothing to propagate from")]
    EmptyComplement,
    #[error("no stroke draft or masked image to generate from")]
    NothingToGenerate,
    #[error("timestamp {t}s outside video of {duration}s")]
    TimestampOutOfRange { t: f64, duration: f64 },
    #[error("malformed video manifest: {0}")]
    MalformedManifest(String),
    #[error("tool unavailable: {0}")]
    ToolUnavailable(String),
    #[error("malformed tool response: {0}")]
    MalformedResponse(String),
    #[error("`{tool}` must produce {expected:?} first and only text after")]
    OutputKindMismatch { tool: String, expected: OutputKind },
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("invalid input `{arg}`: {reason}")]
    InvalidInput { arg: String, reason: String },
    #[error("`{tool}` takes {expected} comma-separated inputs, got {found}")]
    Arity {
        tool: String,
        expected: usize,
        found: usize,
    },
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("no backend for tool `{0}`")]
    UnknownTool(String),
}

/// Read access to the artifact store for tool backends.
pub trait ToolContext {
    fn image(&self, id: &str) -> Result<RgbImage, ToolError>;
    fn mask(&self, id: &str) -> Result<Mask, ToolError>;
    fn draft(&self, id: &str) -> Result<StrokeDraft, ToolError>;
    fn video(&self, id: &str) -> Result<VideoManifest, ToolError>;
    fn frame(&self, manifest: &VideoManifest, index: usize) -> Result<RgbImage, ToolError>;
    /// Stored bytes and kind of any artifact.
    fn bytes(&self, id: &str) -> Result<(ArtifactKind, Vec<u8>), ToolError>;
    /// Fetchable URL for an artifact, when the deployment exposes one.
    fn artifact_url(&self, id: &str) -> Option<String>;
    fn ocr(&self) -> &dyn OcrBackend;
}

pub trait ToolBackend: Send + Sync {
    fn invoke(&self, descriptor: &ToolDescriptor, args: &ArgMap, ctx: &dyn ToolContext) -> Result<ToolResult, ToolError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    DuplicateName(String),
    #[error("tool `{tool}` declares argument `{arg}` twice")]
    DuplicateArg { tool: String, arg: String },
}

#[derive(Clone)]
pub struct RegisteredTool {
    pub descriptor: ToolDescriptor,
    pub backend: Arc<dyn ToolBackend>,
}

/// Tools in registration order. Cloning is cheap and gives a per-turn
/// snapshot.
#[derive(Clone, Default)]
pub struct Registry {
    tools: Vec<RegisteredTool>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.tools.iter().map(|t| &t.descriptor.name)).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: ToolDescriptor, backend: Arc<dyn ToolBackend>) -> Result<(), RegistryError> {
        if self.lookup(&descriptor.name).is_some() {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        descriptor.check()?;
        self.tools.push(RegisteredTool { descriptor, backend });
        Ok(())
    }

    /// Swaps the backend behind an existing tool.
    pub fn replace_backend(&mut self, name: &str, backend: Arc<dyn ToolBackend>) -> bool {
        match self.tools.iter_mut().find(|t| t.descriptor.name == name) {
            Some(t) => {
                t.backend = backend;
                true
            }
            None => false,
        }
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolDescriptor> {
        self.get(name).map(|t| &t.descriptor)
    }

    pub fn get(&self, name: &str) -> Option<&RegisteredTool> {
        self.tools.iter().find(|t| t.descriptor.name == name)
    }

    pub fn list(&self) -> Vec<&ToolDescriptor> {
        self.tools.iter().map(|t| &t.descriptor).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.list()).expect("descriptors serialize")
    }

    pub fn descriptors_from_json(raw: &str) -> Result<Vec<ToolDescriptor>, serde_json::Error> {
        serde_json::from_str(raw)
    }

    /// The built-in tool set, in a fixed order.
    pub fn builtin(half_window_s: f64) -> Self {
        let mut r = Registry::new();
        for tool in BuiltinTool::ALL {
            r.register(tool.descriptor(), Arc::new(BuiltinBackend::new(tool, half_window_s)))
                .expect("built-in names are unique");
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn register_lookup_list() {
        let mut r = Registry::new();
        for tool in &BuiltinTool::ALL[..4] {
            r.register(tool.descriptor(), Arc::new(BuiltinBackend::new(*tool, 2.0))).unwrap();
        }
        let names: Vec<_> = r.list().iter().map(|d| d.name.clone()).collect();
        assert_eq!(names, ["remove_masked_object", "question_masked_object", "replace_masked_object", "video_highlight"]);
        let dup = r.register(BuiltinTool::Remove.descriptor(), Arc::new(BuiltinBackend::new(BuiltinTool::Remove, 2.0)));
        assert_eq!(dup, Err(RegistryError::DuplicateName("remove_masked_object".into())));

        let remove = r.lookup("remove_masked_object").unwrap();
        assert_eq!(remove.output_kind, OutputKind::Image);
        let kinds: Vec<_> = remove.args.iter().map(|a| (a.name.as_str(), a.kind)).collect();
        assert_eq!(kinds, [("image_path", ArgKind::ImagePath), ("mask_path", ArgKind::MaskPath)]);
        assert!(r.lookup("nope").is_none());
    }

    #[test]
    fn duplicate_arg_rejected() {
        let d = ToolDescriptor::new(
            "t",
            "x",
            vec![ArgSlot::new("a", ArgKind::Prompt), ArgSlot::new("a", ArgKind::Question)],
            OutputKind::Text,
        );
        let mut r = Registry::new();
        assert!(matches!(
            r.register(d, Arc::new(BuiltinBackend::new(BuiltinTool::Caption, 2.0))),
            Err(RegistryError::DuplicateArg { .. })
        ));
    }

    #[test]
    fn comma_separated_inputs() {
        let d = BuiltinTool::Replace.descriptor();
        let args = d.parse_input(" a.png , 'b.png', \"a vase, red and tall\"").unwrap();
        assert_eq!(args["image_path"], "a.png");
        assert_eq!(args["mask_path"], "b.png");
        assert_eq!(args["prompt"], "a vase, red and tall");
        // unquoted trailing commas fold into the last slot
        let args = d.parse_input("a.png,b.png,a vase, red").unwrap();
        assert_eq!(args["prompt"], "a vase, red");
        assert!(matches!(d.parse_input("a.png"), Err(ToolError::Arity { expected: 3, found: 1, .. })));
        assert_eq!(d.parse_input(&d.format_input(&args)).unwrap(), args);
    }

    #[test]
    fn region_text_tools() {
        let reg = Registry::builtin(2.0);
        let readers: Vec<_> = reg.list().into_iter().filter(|d| d.reads_region_text()).map(|d| d.name.clone()).collect();
        assert_eq!(readers, ["read_text"]);
    }

    fn arg_kind() -> impl Strategy<Value = ArgKind> {
        prop_oneof![
            Just(ArgKind::ImagePath), Just(ArgKind::MaskPath), Just(ArgKind::VideoPath), Just(ArgKind::DraftPath),
            Just(ArgKind::Prompt), Just(ArgKind::Question), Just(ArgKind::Timestamp), Just(ArgKind::Drag),
        ]
    }

    fn descriptor() -> impl Strategy<Value = ToolDescriptor> {
        (
            "[a-z_]{1,12}",
            ".{0,40}",
            prop::collection::vec(arg_kind(), 0..4),
            prop_oneof![Just(OutputKind::Image), Just(OutputKind::Video), Just(OutputKind::Text), Just(OutputKind::Draft)],
            prop::option::of("https?://[a-z]{1,8}(:[0-9]{2,4})?"),
        )
            .prop_map(|(name, description, kinds, output_kind, external)| ToolDescriptor {
                name,
                description,
                args: kinds.into_iter().enumerate().map(|(i, k)| ArgSlot { name: format!("arg{i}"), kind: k }).collect(),
                output_kind,
                origin: external.map(Origin::External).unwrap_or_default(),
            })
    }

    proptest! {
        #[test]
        fn descriptor_list_round_trip(descs in prop::collection::vec(descriptor(), 0..6)) {
            let mut r = Registry::new();
            for d in descs {
                let _ = r.register(d, Arc::new(BuiltinBackend::new(BuiltinTool::Caption, 2.0)));
            }
            let parsed = Registry::descriptors_from_json(&r.to_json()).unwrap();
            let original: Vec<ToolDescriptor> = r.list().into_iter().cloned().collect();
            prop_assert_eq!(parsed, original);
        }

        #[test]
        fn input_form_round_trip(values in prop::collection::vec("[a-zA-Z0-9 ,._-]{0,16}", 3)) {
            let d = BuiltinTool::Replace.descriptor();
            let args: ArgMap = d.args.iter().zip(&values).map(|(s, v)| (s.name.clone(), v.trim().to_string())).collect();
            prop_assert_eq!(d.parse_input(&d.format_input(&args)).unwrap(), args);
        }
    }
}
