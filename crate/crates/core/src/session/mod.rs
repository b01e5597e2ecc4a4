//! Conversation history and the content-addressed artifact store.
//!
//! A session lives in its own directory: `state.json` plus an `artifacts/`
//! folder. Artifact ids are the first 12 hex digits of the SHA-256 of the
//! stored bytes, a kind suffix and an extension, e.g. `3fa2b1c4d5e6_mask.png`.
//! Turns are append-only.

mod store;

use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::TaskPlan;
use crate::perception::{Mask, StrokeDraft};
use crate::pointing::PointerEvent;
use crate::toolkit::video::VideoManifest;

pub use store::{SessionSlot, SessionStore, TurnGuard};

const STATE_FILE: &str = "state.json";
pub const ARTIFACT_DIR: &str = "artifacts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Image,
    Mask,
    StrokeDraft,
    Video,
    Text,
}

impl ArtifactKind {
    pub fn suffix(self) -> &'static str {
        match self {
            ArtifactKind::Image => "image",
            ArtifactKind::Mask => "mask",
            ArtifactKind::StrokeDraft => "draft",
            ArtifactKind::Video => "video",
            ArtifactKind::Text => "text",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ArtifactKind::Image | ArtifactKind::Mask => "png",
            ArtifactKind::StrokeDraft | ArtifactKind::Video => "json",
            ArtifactKind::Text => "txt",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ArtifactKind::Image | ArtifactKind::Mask => "image/png",
            ArtifactKind::StrokeDraft | ArtifactKind::Video => "application/json",
            ArtifactKind::Text => "text/plain; charset=utf-8",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content-addressed id for `bytes` of the given kind.
pub fn artifact_id(kind: ArtifactKind, bytes: &[u8]) -> String {
    let hash = sha256_hex(bytes);
    format!("{}_{}.{}", &hash[..12], kind.suffix(), kind.extension())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Producing tool name, or `upload` / `gesture`.
    pub producer: String,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub kind: ArtifactKind,
    /// Display name, e.g. the uploaded file name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Path relative to the session directory.
    pub path: String,
    pub sha256: String,
    pub provenance: Provenance,
    pub created_at_ms: u64,
    /// Recency rank; bumped when identical content is registered again.
    pub order: u64,
    /// Source image of a mask, base image of a draft.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Artifact {
    /// Names this artifact answers to when referenced from text.
    pub fn handles(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.id.as_str()).chain(self.name.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingDrag {
    pub dx: i64,
    pub dy: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingDragRecord {
    pub mask: String,
    #[serde(flatten)]
    pub displacement: PendingDrag,
}

/// An utterance whose selected tool could not run yet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub utterance: String,
    pub tool: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum TurnStatus {
    Ok,
    Clarify,
    Error(String),
}

impl TurnStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TurnStatus::Ok => "ok",
            TurnStatus::Clarify => "clarify",
            TurnStatus::Error(_) => "error",
        }
    }
}

/// What a turn produced, before it is numbered and appended.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub user_utterance: Option<String>,
    pub pointer_events: Vec<PointerEvent>,
    pub uploads: Vec<String>,
    pub plan: Option<TaskPlan>,
    /// Tools selected for the utterance, in plan order.
    pub tools: Vec<String>,
    pub outputs: Vec<String>,
    pub reply: String,
    pub status: Option<TurnStatus>,
    pub clarify_question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_utterance: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pointer_events: Vec<PointerEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uploads: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<TaskPlan>,
    #[serde(default)]
    pub tools: Vec<String>,
    pub outputs: Vec<String>,
    pub reply: String,
    #[serde(flatten)]
    pub status: TurnStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarify_question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown artifact `{0}`")]
    UnknownArtifact(String),
    #[error("artifact `{id}` is a {found}, expected {expected}")]
    WrongKind {
        id: String,
        expected: ArtifactKind,
        found: ArtifactKind,
    },
    #[error("content hash collision on `{0}`")]
    HashCollision(String),
    #[error("a turn is already in flight for session `{0}`")]
    TurnInFlight(String),
    #[error("malformed video manifest: {0}")]
    MalformedManifest(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub turns: Vec<Turn>,
    pub artifacts: Vec<Artifact>,
    pub active_mask: Option<String>,
    pub open_draft: Option<String>,
    pub pending_drag: Option<PendingDragRecord>,
    /// Frame time of the last click on a video.
    pub pointer_timestamp: Option<f64>,
    pub pending_request: Option<PendingRequest>,
    next_order: u64,
}

impl SessionState {
    pub fn artifact(&self, id: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.id == id)
    }

    /// Resolves an id or display name. Names may repeat; the most recent wins.
    pub fn lookup(&self, reference: &str) -> Option<&Artifact> {
        self.artifact(reference).or_else(|| {
            self.artifacts
                .iter()
                .filter(|a| a.name.as_deref() == Some(reference))
                .max_by_key(|a| a.order)
        })
    }

    /// Artifacts of `kind`, oldest first.
    pub fn of_kind(&self, kind: ArtifactKind) -> Vec<&Artifact> {
        let mut v: Vec<_> = self.artifacts.iter().filter(|a| a.kind == kind).collect();
        v.sort_by_key(|a| a.order);
        v
    }

    pub fn latest_artifact(&self, kind: ArtifactKind) -> Option<&Artifact> {
        self.artifacts
            .iter()
            .filter(|a| a.kind == kind)
            .max_by_key(|a| a.order)
    }

    pub fn current_turn(&self) -> usize {
        self.turns.len()
    }

    /// Renders turns as alternating user / assistant messages. Artifact ids
    /// appear verbatim so a language model can quote them back.
    pub fn history_as_dialogue(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.turns.len() * 2);
        for t in &self.turns {
            let mut user = Vec::new();
            for id in &t.uploads {
                let name = self
                    .artifact(id)
                    .and_then(|a| a.name.clone())
                    .unwrap_or_else(|| id.clone());
                user.push(format!("[uploaded {name} as {id}]"));
            }
            for ev in &t.pointer_events {
                user.push(format!(
                    "[{:?} gesture on {}]",
                    ev.kind, ev.target_artifact
                ).to_lowercase());
            }
            if let Some(u) = &t.user_utterance {
                user.push(u.clone());
            }
            out.push(ChatMessage::new("user", user.join(" ")));

            let mut reply = t.reply.clone();
            for id in &t.outputs {
                if !reply.contains(id.as_str()) {
                    reply.push_str(&format!(" [{id}]"));
                }
            }
            out.push(ChatMessage::new("assistant", reply.trim().to_string()));
        }
        out
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or_default()
}

fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory png encoding");
    out.into_inner()
}

/// A live session: its directory and current state.
#[derive(Debug)]
pub struct Session {
    dir: PathBuf,
    state: SessionState,
}

impl Session {
    pub fn create(dir: impl Into<PathBuf>, id: &str) -> Result<Self, SessionError> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join(ARTIFACT_DIR))?;
        let session = Self {
            dir,
            state: SessionState {
                id: id.to_string(),
                ..Default::default()
            },
        };
        session.save()?;
        Ok(session)
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        let raw = std::fs::read(dir.join(STATE_FILE))?;
        let state = serde_json::from_slice(&raw)?;
        Ok(Self { dir, state })
    }

    pub fn id(&self) -> &str {
        &self.state.id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.dir.join(ARTIFACT_DIR)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SessionState {
        &mut self.state
    }

    /// Writes `state.json` via a temp file and rename.
    pub fn save(&self) -> Result<(), SessionError> {
        let tmp = self.dir.join(format!("{STATE_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&self.state)?)?;
        std::fs::rename(tmp, self.dir.join(STATE_FILE))?;
        Ok(())
    }

    /// Stores bytes under their content address and registers the artifact
    /// against the turn currently being processed.
    pub fn put_artifact(
        &mut self,
        kind: ArtifactKind,
        bytes: &[u8],
        producer: &str,
        name: Option<String>,
        source: Option<String>,
    ) -> Result<String, SessionError> {
        let sha = sha256_hex(bytes);
        let id = format!("{}_{}.{}", &sha[..12], kind.suffix(), kind.extension());
        let order = self.state.next_order;
        self.state.next_order += 1;

        if let Some(existing) = self.state.artifacts.iter_mut().find(|a| a.id == id) {
            if existing.sha256 != sha {
                return Err(SessionError::HashCollision(id));
            }
            existing.order = order;
            if name.is_some() {
                existing.name = name;
            }
            return Ok(id);
        }

        let rel = format!("{ARTIFACT_DIR}/{id}");
        let path = self.dir.join(&rel);
        if !path.exists() {
            std::fs::write(&path, bytes)?;
        }
        self.state.artifacts.push(Artifact {
            id: id.clone(),
            kind,
            name,
            path: rel,
            sha256: sha,
            provenance: Provenance {
                producer: producer.to_string(),
                turn: self.state.current_turn(),
            },
            created_at_ms: now_ms(),
            order,
            source,
        });
        Ok(id)
    }

    pub fn put_image(&mut self, img: &RgbImage, producer: &str, name: Option<String>) -> Result<String, SessionError> {
        self.put_artifact(ArtifactKind::Image, &encode_png(img), producer, name, None)
    }

    pub fn put_mask(&mut self, mask: &Mask, producer: &str) -> Result<String, SessionError> {
        self.put_artifact(ArtifactKind::Mask, &mask.to_png(), producer, None, mask.source_image.clone())
    }

    pub fn put_draft(&mut self, draft: &StrokeDraft, producer: &str) -> Result<String, SessionError> {
        self.put_artifact(ArtifactKind::StrokeDraft, &draft.to_json(), producer, None, draft.base_image.clone())
    }

    pub fn put_text(&mut self, text: &str, producer: &str) -> Result<String, SessionError> {
        self.put_artifact(ArtifactKind::Text, text.as_bytes(), producer, None, None)
    }

    pub fn put_video(&mut self, manifest: &VideoManifest, producer: &str, name: Option<String>) -> Result<String, SessionError> {
        self.put_artifact(ArtifactKind::Video, &manifest.to_json(), producer, name, None)
    }

    /// Decodes an uploaded image and stores it as canonical RGB8 PNG.
    pub fn import_image(&mut self, bytes: &[u8], name: Option<String>) -> Result<String, SessionError> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        self.put_image(&img, "upload", name)
    }

    /// Stores each frame as canonical PNG under `artifacts/frames/` and
    /// registers a manifest referencing them.
    pub fn import_video(&mut self, fps: f64, frames: &[Vec<u8>], name: Option<String>) -> Result<String, SessionError> {
        if fps.is_nan() || fps <= 0.0 || frames.is_empty() {
            return Err(SessionError::MalformedManifest(
                "fps must be positive and at least one frame is required".into(),
            ));
        }
        let frame_dir = self.artifacts_dir().join("frames");
        std::fs::create_dir_all(&frame_dir)?;
        let mut refs = Vec::with_capacity(frames.len());
        for raw in frames {
            let png = encode_png(&image::load_from_memory(raw)?.to_rgb8());
            let file = format!("{}.png", &sha256_hex(&png)[..12]);
            let path = frame_dir.join(&file);
            if !path.exists() {
                std::fs::write(path, &png)?;
            }
            refs.push(format!("frames/{file}"));
        }
        self.put_video(&VideoManifest { fps, frames: refs }, "upload", name)
    }

    fn expect_kind(&self, id: &str, kind: ArtifactKind) -> Result<&Artifact, SessionError> {
        let a = self
            .state
            .artifact(id)
            .ok_or_else(|| SessionError::UnknownArtifact(id.to_string()))?;
        if a.kind != kind {
            return Err(SessionError::WrongKind {
                id: id.to_string(),
                expected: kind,
                found: a.kind,
            });
        }
        Ok(a)
    }

    pub fn read(&self, id: &str) -> Result<Vec<u8>, SessionError> {
        let a = self
            .state
            .artifact(id)
            .ok_or_else(|| SessionError::UnknownArtifact(id.to_string()))?;
        Ok(std::fs::read(self.dir.join(&a.path))?)
    }

    pub fn load_image(&self, id: &str) -> Result<RgbImage, SessionError> {
        let a = self.expect_kind(id, ArtifactKind::Image)?;
        let bytes = std::fs::read(self.dir.join(&a.path))?;
        Ok(image::load_from_memory_with_format(&bytes, ImageFormat::Png)?.to_rgb8())
    }

    pub fn load_mask(&self, id: &str) -> Result<Mask, SessionError> {
        let a = self.expect_kind(id, ArtifactKind::Mask)?;
        let bytes = std::fs::read(self.dir.join(&a.path))?;
        let mut mask = Mask::from_png(&bytes)?;
        mask.source_image = a.source.clone();
        Ok(mask)
    }

    pub fn load_draft(&self, id: &str) -> Result<StrokeDraft, SessionError> {
        let a = self.expect_kind(id, ArtifactKind::StrokeDraft)?;
        Ok(serde_json::from_slice(&std::fs::read(self.dir.join(&a.path))?)?)
    }

    pub fn load_video(&self, id: &str) -> Result<VideoManifest, SessionError> {
        let a = self.expect_kind(id, ArtifactKind::Video)?;
        let m: VideoManifest = serde_json::from_slice(&std::fs::read(self.dir.join(&a.path))?)
            .map_err(|e| SessionError::MalformedManifest(e.to_string()))?;
        m.validate().map_err(SessionError::MalformedManifest)?;
        Ok(m)
    }

    pub fn load_text(&self, id: &str) -> Result<String, SessionError> {
        let a = self.expect_kind(id, ArtifactKind::Text)?;
        Ok(String::from_utf8_lossy(&std::fs::read(self.dir.join(&a.path))?).into_owned())
    }

    /// Decodes a frame referenced by a manifest.
    pub fn load_frame(&self, manifest: &VideoManifest, index: usize) -> Result<RgbImage, SessionError> {
        let rel = manifest
            .frames
            .get(index)
            .ok_or_else(|| SessionError::MalformedManifest(format!("no frame {index}")))?;
        if rel.contains("..") {
            return Err(SessionError::MalformedManifest(format!("frame path `{rel}` escapes the store")));
        }
        let bytes = std::fs::read(self.artifacts_dir().join(rel))?;
        Ok(image::load_from_memory(&bytes)?.to_rgb8())
    }

    /// Appends a turn. Failed turns are recorded too.
    pub fn record_turn(&mut self, record: TurnRecord) -> Result<Turn, SessionError> {
        let turn = Turn {
            index: self.state.turns.len(),
            user_utterance: record.user_utterance,
            pointer_events: record.pointer_events,
            uploads: record.uploads,
            plan: record.plan,
            tools: record.tools,
            outputs: record.outputs,
            reply: record.reply,
            status: record.status.unwrap_or(TurnStatus::Ok),
            clarify_question: record.clarify_question,
        };
        self.state.turns.push(turn.clone());
        self.save()?;
        Ok(turn)
    }
}
