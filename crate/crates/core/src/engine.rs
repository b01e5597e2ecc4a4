//! One turn, end to end: classify the gesture, plan the utterance, apply
//! perception, execute, record. Both the HTTP service and the replay harness
//! drive sessions through [`Engine`], so they produce the same artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::controller::{
    backend_from_spec, execute, plan_turn, ControllerError, Executor, Lexicon, LlmBackend, NullLlm,
};
use crate::perception::{
    sidecar_path, FixtureOcr, FloodFillSegmenter, OcrAnnotation, OcrBackend, PerceptionResult, PerceptionUnit,
    SegmenterBackend,
};
use crate::pointing::{classify_gesture, ClickThreshold, ModeHint, PointerContext, PointerSample, StrokeStyle};
use crate::session::{
    ArtifactKind, PendingRequest, Session, SessionError, SessionState, SessionStore, Turn, TurnRecord, TurnStatus,
    ARTIFACT_DIR,
};
use crate::toolkit::external::{fetch_descriptor, HttpToolBackend};
use crate::toolkit::Registry;

/// A gesture as clients send it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerWire {
    #[serde(default)]
    pub kind_hint: ModeHint,
    /// Artifact id, or the display name of an upload.
    pub target_artifact: String,
    pub samples: Vec<PointerSample>,
    /// Frame time when pointing at a video.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StrokeStyle>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer_event: Option<PointerWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewArtifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub url: String,
}

/// Response to any mutating call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub turn: usize,
    pub status: String,
    pub reply_text: String,
    pub new_artifacts: Vec<NewArtifact>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_draft: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarify_question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception: Option<PerceptionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Session(#[from] SessionError),
    /// A request field is malformed; `field` is its path in the request.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("drag gesture without an active selection")]
    DragWithoutSelection,
    #[error("configuration: {0}")]
    Config(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> EngineError {
    EngineError::Invalid { field: field.into(), reason: reason.into() }
}

/// A video upload: frame rate plus encoded frames in order.
#[derive(Debug, Clone)]
pub struct VideoUpload {
    pub fps: f64,
    pub frames: Vec<Vec<u8>>,
}

pub struct Engine {
    config: Config,
    store: SessionStore,
    registry: Registry,
    llm: Arc<dyn LlmBackend>,
    segmenter: Arc<dyn SegmenterBackend>,
    /// Shared OCR backend; when unset each session reads its own sidecars.
    ocr: Option<Arc<dyn OcrBackend>>,
    lexicon: Lexicon,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("root", &self.store.root())
            .field("registry", &self.registry)
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Engine with built-in tools and the given language model.
    pub fn new(config: Config, llm: Arc<dyn LlmBackend>) -> Result<Self, EngineError> {
        let store = SessionStore::new(&config.artifact_dir)?;
        Ok(Self {
            registry: Registry::builtin(config.thresholds.highlight_half_window_s),
            segmenter: Arc::new(FloodFillSegmenter { tolerance: config.thresholds.tolerance }),
            ocr: None,
            lexicon: Lexicon::default(),
            llm,
            store,
            config,
        })
    }

    /// Builds everything the configuration names, including external tools.
    /// Relative scripted-LLM paths resolve against `base_dir`.
    pub fn from_config(config: Config, base_dir: &Path) -> Result<Self, EngineError> {
        let llm = backend_from_spec(
            &config.llm.backend,
            base_dir,
            &config.llm.model,
            config.llm.token.clone(),
            Duration::from_secs_f64(config.llm.timeout_s),
        )
        .map_err(EngineError::Config)?;
        let mut engine = Self::new(config, llm)?;
        let timeout = Duration::from_secs_f64(engine.config.tools.timeout_s);
        for endpoint in engine.config.tools.external.clone() {
            let d = fetch_descriptor(&endpoint, timeout).map_err(|e| EngineError::Config(e.to_string()))?;
            engine.attach_external(d, &endpoint)?;
        }
        Ok(engine)
    }

    /// Registers an external tool. A tool with a built-in's name replaces its
    /// backend.
    pub fn attach_external(&mut self, descriptor: crate::toolkit::ToolDescriptor, endpoint: &str) -> Result<(), EngineError> {
        let backend = Arc::new(HttpToolBackend::new(
            endpoint,
            self.config.tools.encoding,
            Duration::from_secs_f64(self.config.tools.timeout_s),
        ));
        if self.registry.replace_backend(&descriptor.name, backend.clone()) {
            return Ok(());
        }
        self.registry.register(descriptor, backend).map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn null(config: Config) -> Result<Self, EngineError> {
        Self::new(config, Arc::new(NullLlm))
    }

    pub fn with_ocr(mut self, ocr: Arc<dyn OcrBackend>) -> Self {
        self.ocr = Some(ocr);
        self
    }

    pub fn with_segmenter(mut self, segmenter: Arc<dyn SegmenterBackend>) -> Self {
        self.segmenter = segmenter;
        self
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn create_session(&self) -> Result<String, EngineError> {
        Ok(self.store.create()?)
    }

    pub fn snapshot(&self, session: &str) -> Result<Arc<SessionState>, EngineError> {
        Ok(self.store.snapshot(session)?)
    }

    pub fn history(&self, session: &str) -> Result<Vec<Turn>, EngineError> {
        Ok(self.snapshot(session)?.turns.clone())
    }

    /// Stored bytes of an artifact from the committed state.
    pub fn artifact(&self, session: &str, id: &str) -> Result<(ArtifactKind, Vec<u8>), EngineError> {
        let slot = self.store.get(session)?;
        let snap = slot.snapshot();
        let a = snap.artifact(id).ok_or_else(|| SessionError::UnknownArtifact(id.to_string()))?;
        let bytes = std::fs::read(slot.dir().join(&a.path)).map_err(SessionError::from)?;
        Ok((a.kind, bytes))
    }

    /// A video frame file referenced by a manifest.
    pub fn frame(&self, session: &str, file: &str) -> Result<Vec<u8>, EngineError> {
        let slot = self.store.get(session)?;
        let ok = file.strip_suffix(".png").is_some_and(|h| !h.is_empty() && h.chars().all(|c| c.is_ascii_hexdigit()));
        let path = slot.dir().join(ARTIFACT_DIR).join("frames").join(file);
        if !ok || !path.exists() {
            return Err(SessionError::UnknownArtifact(format!("frames/{file}")).into());
        }
        Ok(std::fs::read(path).map_err(SessionError::from)?)
    }

    /// URL of an artifact id or a `frames/...` path.
    pub fn url_for(&self, session: &str, reference: &str) -> String {
        let base = self.config.public_base_url.as_deref().unwrap_or("").trim_end_matches('/');
        match reference.strip_prefix("frames/") {
            Some(f) => format!("{base}/sessions/{session}/frames/{f}"),
            None => format!("{base}/sessions/{session}/artifacts/{reference}"),
        }
    }

    fn ocr_for(&self, session: &Session) -> Arc<dyn OcrBackend> {
        self.ocr.clone().unwrap_or_else(|| Arc::new(FixtureOcr::new(session.artifacts_dir())))
    }

    fn respond(&self, session: &Session, turn: &Turn, new: &[String], perception: Option<PerceptionResult>) -> TurnResponse {
        let state = session.state();
        let mut seen = std::collections::HashSet::new();
        let new_artifacts = new
            .iter()
            .filter(|id| seen.insert(id.as_str()))
            .filter_map(|id| state.artifact(id))
            .map(|a| NewArtifact { id: a.id.clone(), kind: a.kind, url: self.url_for(state.id.as_str(), &a.id) })
            .collect();
        TurnResponse {
            turn: turn.index,
            status: turn.status.label().to_string(),
            reply_text: turn.reply.clone(),
            new_artifacts,
            tools: turn.tools.clone(),
            active_mask: state.active_mask.clone(),
            open_draft: state.open_draft.clone(),
            clarify_question: turn.clarify_question.clone(),
            perception,
            error: match &turn.status {
                TurnStatus::Error(e) => Some(e.clone()),
                _ => None,
            },
        }
    }

    fn upload_turn(
        &self,
        session_id: &str,
        store: impl FnOnce(&mut Session) -> Result<String, EngineError>,
    ) -> Result<TurnResponse, EngineError> {
        let guard = self.store.begin_turn(session_id)?;
        let mut session = guard.session();
        let id = store(&mut session)?;
        let name = session.state().artifact(&id).and_then(|a| a.name.clone()).unwrap_or_else(|| id.clone());
        let turn = session.record_turn(TurnRecord {
            uploads: vec![id.clone()],
            reply: format!("Stored {name} as {id}."),
            ..Default::default()
        })?;
        Ok(self.respond(&session, &turn, &[id], None))
    }

    /// Stores an image; an optional OCR sidecar is kept next to it.
    pub fn upload_image(
        &self,
        session: &str,
        bytes: &[u8],
        name: Option<String>,
        ocr_sidecar: Option<&[u8]>,
    ) -> Result<TurnResponse, EngineError> {
        let annotations = ocr_sidecar
            .map(|raw| serde_json::from_slice::<Vec<OcrAnnotation>>(raw).map_err(|e| invalid("ocr", e.to_string())))
            .transpose()?;
        self.upload_turn(session, |s| {
            let id = s.import_image(bytes, name).map_err(|e| match e {
                SessionError::Image(e) => invalid("file", e.to_string()),
                other => other.into(),
            })?;
            if let Some(a) = annotations {
                let path = sidecar_path(&s.artifacts_dir(), &id);
                std::fs::write(path, serde_json::to_vec_pretty(&a).expect("annotations serialize"))
                    .map_err(SessionError::from)?;
            }
            Ok(id)
        })
    }

    pub fn upload_video(&self, session: &str, video: VideoUpload, name: Option<String>) -> Result<TurnResponse, EngineError> {
        self.upload_turn(session, |s| {
            s.import_video(video.fps, &video.frames, name).map_err(|e| match e {
                SessionError::Image(e) => invalid("frames", e.to_string()),
                SessionError::MalformedManifest(m) => invalid("manifest", m),
                other => other.into(),
            })
        })
    }

    pub fn pointer(&self, session: &str, pointer: PointerWire) -> Result<TurnResponse, EngineError> {
        self.turn(session, TurnRequest { utterance: None, pointer_event: Some(pointer) })
    }

    pub fn chat(&self, session: &str, utterance: &str) -> Result<TurnResponse, EngineError> {
        self.turn(session, TurnRequest { utterance: Some(utterance.to_string()), pointer_event: None })
    }

    fn classify(&self, session: &Session, wire: &PointerWire) -> Result<crate::pointing::PointerEvent, EngineError> {
        let state = session.state();
        let target = state
            .lookup(&wire.target_artifact)
            .filter(|a| matches!(a.kind, ArtifactKind::Image | ArtifactKind::Video))
            .map(|a| a.id.clone())
            .ok_or_else(|| SessionError::UnknownArtifact(wire.target_artifact.clone()))?;
        if let Some(t) = wire.timestamp_s {
            if !(t.is_finite() && t >= 0.0) {
                return Err(invalid("pointer_event.timestamp_s", format!("{t} is not a non-negative time")));
            }
        }
        let active = match &state.active_mask {
            Some(id) => Some(session.load_mask(id)?),
            None => None,
        };
        let threshold = ClickThreshold {
            max_extent: self.config.thresholds.click_max_extent,
            max_duration_ms: self.config.thresholds.click_max_duration_ms,
        };
        let ctx = PointerContext { target_known: true, active_mask: active.as_ref() };
        let mut event = classify_gesture(&wire.samples, wire.kind_hint, &target, ctx, threshold).map_err(|e| match e {
            crate::pointing::GestureError::EmptyTrace => invalid("samples", "at least one sample is required"),
            crate::pointing::GestureError::InvalidSample { field, reason } => invalid(&field, reason),
            crate::pointing::GestureError::UnknownTarget(t) => SessionError::UnknownArtifact(t).into(),
            crate::pointing::GestureError::DragWithoutSelection => EngineError::DragWithoutSelection,
        })?;
        event.timestamp_s = wire.timestamp_s;
        event.style = wire.style;
        Ok(event)
    }

    /// Runs one turn. At least one of utterance and pointer is required.
    pub fn turn(&self, session_id: &str, req: TurnRequest) -> Result<TurnResponse, EngineError> {
        let utterance = match req.utterance.as_deref().map(str::trim) {
            Some("") => return Err(invalid("utterance", "empty")),
            other => other.map(str::to_string),
        };
        if utterance.is_none() && req.pointer_event.is_none() {
            return Err(invalid("utterance", "an utterance or a pointer_event is required"));
        }

        let guard = self.store.begin_turn(session_id)?;
        let mut session = guard.session();
        let event = req.pointer_event.as_ref().map(|w| self.classify(&session, w)).transpose()?;

        let mut record = TurnRecord {
            user_utterance: utterance.clone(),
            pointer_events: event.iter().cloned().collect(),
            ..Default::default()
        };

        let plan = match &utterance {
            None => None,
            Some(u) => {
                let planned = plan_turn(
                    u,
                    &self.registry,
                    session.state(),
                    self.llm.as_ref(),
                    &self.lexicon,
                    self.config.thresholds.clarify,
                );
                match planned {
                    Ok(p) => Some(p),
                    Err(ControllerError::ClarifyNeeded { question, .. }) => {
                        record.status = Some(TurnStatus::Clarify);
                        record.reply = question.clone();
                        record.clarify_question = Some(question);
                        let turn = session.record_turn(record)?;
                        return Ok(self.respond(&session, &turn, &[], None));
                    }
                    Err(e) => {
                        record.status = Some(TurnStatus::Error(e.to_string()));
                        record.reply = e.to_string();
                        let turn = session.record_turn(record)?;
                        return Ok(self.respond(&session, &turn, &[], None));
                    }
                }
            }
        };

        let mut new: Vec<String> = Vec::new();
        let mut replies: Vec<String> = Vec::new();
        let mut perception = None;
        let ocr = self.ocr_for(&session);

        if let Some(ev) = &event {
            let pending = session.state().pending_request.clone();
            let selected = plan
                .as_ref()
                .and_then(|p| p.steps.first())
                .map(|s| s.tool.clone())
                .or_else(|| pending.as_ref().map(|p| p.tool.clone()));
            let route_to_ocr = selected
                .and_then(|t| self.registry.lookup(&t))
                .is_some_and(|d| d.reads_region_text());
            let unit = PerceptionUnit {
                segmenter: self.segmenter.clone(),
                ocr: ocr.clone(),
                stroke_stride: self.config.thresholds.stroke_stride,
            };
            match unit.handle_gesture(ev, &mut session, route_to_ocr) {
                Ok(r) => {
                    new.push(r.artifact().to_string());
                    replies.push(r.describe());
                    if matches!(r, PerceptionResult::Text { .. }) && plan.is_none() {
                        session.state_mut().pending_request = None;
                    }
                    perception = Some(r);
                }
                Err(e) => {
                    record.status = Some(TurnStatus::Error(e.to_string()));
                    record.reply = e.to_string();
                    let turn = session.record_turn(record)?;
                    return Ok(self.respond(&session, &turn, &[], None));
                }
            }
        }

        if let (Some(plan), Some(u)) = (plan, &utterance) {
            let base = self.config.public_base_url.is_some();
            let sid = session.id().to_string();
            let url_for = move |r: &str| self.url_for(&sid, r);
            let exec = Executor {
                registry: &self.registry,
                llm: self.llm.as_ref(),
                lexicon: &self.lexicon,
                ocr: ocr.as_ref(),
                url_for: if base { Some(&url_for) } else { None },
            };
            let report = execute(&plan, &mut session, &exec);
            let mut recorded = report.plan.clone();
            recorded.steps.extend(plan.steps[report.plan.steps.len()..].iter().cloned());
            record.plan = Some(recorded);
            record.tools = plan.tools();
            new.extend(report.outputs());

            match &report.failure {
                None => {
                    session.state_mut().pending_request = None;
                    replies.push(report.summary.clone());
                }
                Some(f) => {
                    let question = match &f.error {
                        ControllerError::MissingArgument(arg) => Some(format!(
                            "Which {arg} should {} use? Point at it or name an artifact.",
                            f.tool
                        )),
                        _ => None,
                    };
                    if question.is_some() {
                        session.state_mut().pending_request = Some(PendingRequest { utterance: u.clone(), tool: f.tool.clone() });
                    }
                    match question {
                        Some(q) if new.is_empty() => {
                            record.status = Some(TurnStatus::Clarify);
                            replies.push(q.clone());
                            record.clarify_question = Some(q);
                        }
                        q => {
                            record.status = Some(TurnStatus::Error(format!("step {} ({}): {}", f.step + 1, f.tool, f.error)));
                            replies.push(report.summary.clone());
                            record.clarify_question = q;
                        }
                    }
                }
            }
        }

        record.outputs = new.clone();
        record.reply = replies.into_iter().filter(|r| !r.is_empty()).collect::<Vec<_>>().join("\n");
        let turn = session.record_turn(record)?;
        Ok(self.respond(&session, &turn, &new, perception))
    }
}

/// Resolves a scripted backend path or other spec relative to a trace or
/// config file location.
pub fn base_dir_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use std::io::Cursor;

    fn png(img: &RgbImage) -> Vec<u8> {
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
        out
    }

    fn engine() -> (tempfile::TempDir, Engine, String) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = Config { artifact_dir: dir.path().to_path_buf(), ..Config::default() };
        let e = Engine::null(cfg).unwrap();
        let s = e.create_session().unwrap();
        (dir, e, s)
    }

    fn scene() -> RgbImage {
        RgbImage::from_fn(32, 32, |x, y| if (4..28).contains(&x) && (4..28).contains(&y) { Rgb([255, 0, 0]) } else { Rgb([0, 0, 255]) })
    }

    fn click(target: &str, x: f64, y: f64) -> PointerWire {
        PointerWire {
            kind_hint: ModeHint::Auto,
            target_artifact: target.into(),
            samples: vec![PointerSample::new(x, y, 0)],
            timestamp_s: None,
            style: None,
        }
    }

    #[test]
    fn upload_click_remove() {
        let (_d, e, s) = engine();
        let up = e.upload_image(&s, &png(&scene()), Some("scene.png".into()), None).unwrap();
        let img = up.new_artifacts[0].id.clone();
        assert_eq!(up.new_artifacts[0].url, format!("/sessions/{s}/artifacts/{img}"));

        let p = e.pointer(&s, click("scene.png", 0.5, 0.5)).unwrap();
        assert_eq!(p.status, "ok");
        let mask = p.active_mask.clone().unwrap();
        assert_eq!(p.new_artifacts[0].id, mask);

        let r = e.chat(&s, "remove the masked object").unwrap();
        assert_eq!(r.status, "ok", "{}", r.reply_text);
        assert_eq!(r.tools, ["remove_masked_object"]);
        assert_eq!(r.new_artifacts.len(), 1);
        assert_eq!(r.new_artifacts[0].kind, ArtifactKind::Image);
        let (_, bytes) = e.artifact(&s, &r.new_artifacts[0].id).unwrap();
        let out = image::load_from_memory(&bytes).unwrap().to_rgb8();
        assert_eq!(out.get_pixel(16, 16).0, [0, 0, 255]);
        assert_eq!(e.history(&s).unwrap().len(), 3);
    }

    #[test]
    fn clarify_leaves_store_untouched() {
        let (_d, e, s) = engine();
        e.upload_image(&s, &png(&scene()), Some("scene.png".into()), None).unwrap();
        let before = e.snapshot(&s).unwrap().artifacts.clone();
        let r = e.turn(&s, TurnRequest { utterance: Some("florble the wug".into()), pointer_event: Some(click("scene.png", 0.5, 0.5)) }).unwrap();
        assert_eq!(r.status, "clarify");
        assert!(r.clarify_question.is_some());
        assert!(r.new_artifacts.is_empty());
        assert_eq!(e.snapshot(&s).unwrap().artifacts, before);

        // missing mask asks which mask, without storing anything
        let r = e.chat(&s, "remove the masked object").unwrap();
        assert_eq!(r.status, "clarify");
        assert!(r.clarify_question.unwrap().contains("mask_path"));
        assert_eq!(e.snapshot(&s).unwrap().artifacts, before);
    }

    #[test]
    fn request_errors() {
        let (_d, e, s) = engine();
        assert!(matches!(e.turn(&s, TurnRequest::default()), Err(EngineError::Invalid { .. })));
        assert!(matches!(e.chat("nope", "caption this photo"), Err(EngineError::Session(SessionError::UnknownSession(_)))));
        e.upload_image(&s, &png(&scene()), Some("scene.png".into()), None).unwrap();
        match e.pointer(&s, click("scene.png", 1.5, 0.5)) {
            Err(EngineError::Invalid { field, .. }) => assert_eq!(field, "samples[0].x"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(e.pointer(&s, click("ghost.png", 0.5, 0.5)), Err(EngineError::Session(SessionError::UnknownArtifact(_)))));
        let mut drag = click("scene.png", 0.5, 0.5);
        drag.kind_hint = ModeHint::Drag;
        assert!(matches!(e.pointer(&s, drag), Err(EngineError::DragWithoutSelection)));
        assert!(matches!(e.upload_image(&s, b"not an image", None, None), Err(EngineError::Invalid { .. })));
    }

    #[test]
    fn click_reads_text_for_pending_read_request() {
        let (_d, e, s) = engine();
        let sign = RgbImage::from_fn(20, 20, |x, y| if x < 10 && y < 10 { Rgb([255, 255, 255]) } else { Rgb([0, 0, 0]) });
        let sidecar = br#"[{"box": [0, 0, 10, 10], "text": "STOP"}]"#;
        e.upload_image(&s, &png(&sign), Some("sign.png".into()), Some(sidecar)).unwrap();
        let r = e.chat(&s, "read the text").unwrap();
        assert_eq!(r.status, "clarify");
        let r = e.pointer(&s, click("sign.png", 0.1, 0.1)).unwrap();
        assert_eq!(r.perception, Some(PerceptionResult::Text { mask: r.active_mask.clone().unwrap(), text: "STOP".into() }));
        assert!(e.snapshot(&s).unwrap().pending_request.is_none());
        // a plain click afterwards is just a selection
        let r = e.pointer(&s, click("sign.png", 0.9, 0.9)).unwrap();
        assert!(matches!(r.perception, Some(PerceptionResult::Mask { .. })));
    }

    #[test]
    fn combined_turn_reads_text() {
        let (_d, e, s) = engine();
        let sign = RgbImage::from_fn(20, 20, |x, y| if x < 10 && y < 10 { Rgb([255, 255, 255]) } else { Rgb([0, 0, 0]) });
        e.upload_image(&s, &png(&sign), Some("sign.png".into()), Some(br#"[{"box": [0, 0, 10, 10], "text": "STOP"}]"#)).unwrap();
        let r = e
            .turn(&s, TurnRequest { utterance: Some("read the text here".into()), pointer_event: Some(click("sign.png", 0.1, 0.1)) })
            .unwrap();
        assert_eq!(r.status, "ok", "{}", r.reply_text);
        assert_eq!(r.tools, ["read_text"]);
        assert!(r.reply_text.contains("STOP"));
    }

    #[test]
    fn video_highlight_through_engine() {
        let (_d, e, s) = engine();
        let frames: Vec<Vec<u8>> = (0..50u8).map(|i| png(&RgbImage::from_pixel(4, 4, Rgb([i * 5, 0, 0])))).collect();
        let up = e.upload_video(&s, VideoUpload { fps: 5.0, frames }, Some("clip".into())).unwrap();
        let mut c = click("clip", 0.5, 0.5);
        c.timestamp_s = Some(5.0);
        e.pointer(&s, c).unwrap();
        let r = e.chat(&s, "cut this video to a TikTok video").unwrap();
        assert_eq!(r.status, "ok", "{}", r.reply_text);
        let video = r.new_artifacts.iter().find(|a| a.kind == ArtifactKind::Video).unwrap();
        let (_, raw) = e.artifact(&s, &video.id).unwrap();
        let clip: crate::toolkit::VideoManifest = serde_json::from_slice(&raw).unwrap();
        let (_, src) = e.artifact(&s, &up.new_artifacts[0].id).unwrap();
        let src: crate::toolkit::VideoManifest = serde_json::from_slice(&src).unwrap();
        assert_eq!(clip.frames, src.frames[15..=34].to_vec());
        let frame = clip.frames[0].strip_prefix("frames/").unwrap();
        assert!(e.frame(&s, frame).is_ok());
        assert!(e.frame(&s, "../state.json").is_err());
    }

    #[test]
    fn draw_then_generate_then_new_draft() {
        let (_d, e, s) = engine();
        e.upload_image(&s, &png(&RgbImage::from_pixel(16, 16, Rgb([255, 255, 255]))), Some("canvas.png".into()), None).unwrap();
        let stroke = |y: f64| PointerWire {
            kind_hint: ModeHint::Draw,
            target_artifact: "canvas.png".into(),
            samples: vec![PointerSample::new(0.1, y, 0), PointerSample::new(0.5, y, 50), PointerSample::new(0.9, y, 100)],
            timestamp_s: None,
            style: None,
        };
        let a = e.pointer(&s, stroke(0.2)).unwrap();
        let b = e.pointer(&s, stroke(0.6)).unwrap();
        assert_eq!(b.perception.as_ref().map(|p| matches!(p, PerceptionResult::Draft { strokes: 2, .. })), Some(true));
        assert_ne!(a.open_draft, b.open_draft);
        let g = e.chat(&s, "generate a picture from my sketch called \"waves\"").unwrap();
        assert_eq!(g.status, "ok", "{}", g.reply_text);
        assert!(g.open_draft.is_none());
        let c = e.pointer(&s, stroke(0.4)).unwrap();
        assert!(matches!(c.perception, Some(PerceptionResult::Draft { strokes: 1, .. })));
    }

    #[test]
    fn drag_then_move() {
        let (_d, e, s) = engine();
        e.upload_image(&s, &png(&scene()), Some("scene.png".into()), None).unwrap();
        e.pointer(&s, click("scene.png", 0.5, 0.5)).unwrap();
        let drag = PointerWire {
            kind_hint: ModeHint::Auto,
            target_artifact: "scene.png".into(),
            samples: vec![PointerSample::new(0.5, 0.5, 0), PointerSample::new(0.6, 0.5, 300)],
            timestamp_s: None,
            style: None,
        };
        let r = e.pointer(&s, drag).unwrap();
        assert!(matches!(r.perception, Some(PerceptionResult::Drag { .. })));
        let m = e.chat(&s, "move the masked object there").unwrap();
        assert_eq!(m.status, "ok", "{}", m.reply_text);
        assert!(e.snapshot(&s).unwrap().pending_drag.is_none());
    }
}
