//! Pointing-and-language tool orchestration.
//!
//! A turn combines an optional pointer gesture with an optional utterance.
//! Gestures become masks, pointed text or stroke drafts ([`perception`]);
//! utterances are parsed, planned and dispatched to registered tools
//! ([`controller`], [`toolkit`]); everything lands in a content-addressed
//! session store ([`session`]). [`engine`] ties a turn together and
//! [`harness`] replays recorded traces.

pub mod config;
pub mod controller;
pub mod engine;
pub mod harness;
pub mod perception;
pub mod pointing;
pub mod session;
pub mod toolkit;

pub use controller::{ControllerError, LlmBackend, TaskPlan};
pub use perception::{Mask, PerceptionResult, StrokeDraft};
pub use pointing::{GestureKind, ModeHint, PointerEvent, PointerSample};
pub use session::{Artifact, ArtifactKind, SessionError, SessionState, SessionStore, Turn, TurnStatus};
pub use toolkit::{Registry, ToolDescriptor, VideoManifest};
