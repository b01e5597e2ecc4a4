//! HTTP/JSON surface over [`Engine`].
//!
//! Engine calls block on file I/O and tool execution, so every handler runs
//! them on the blocking pool. Per-session exclusion is the engine's; an
//! overlapping mutating request gets 409.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pointchat_core::engine::{Engine, EngineError, PointerWire, TurnRequest, TurnResponse, VideoUpload};
use pointchat_core::SessionError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

/// Upload size limit in bytes.
pub const MAX_UPLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>, field: Option<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), field } }
    }

    fn unprocessable(field: &str, error: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error, Some(field.to_string()))
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::Invalid { field, .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, msg, Some(field)),
            EngineError::DragWithoutSelection => Self::new(StatusCode::UNPROCESSABLE_ENTITY, msg, Some("kind_hint".into())),
            EngineError::Session(SessionError::UnknownSession(_) | SessionError::UnknownArtifact(_)) => {
                Self::new(StatusCode::NOT_FOUND, msg, None)
            }
            EngineError::Session(SessionError::WrongKind { .. }) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, msg, None),
            EngineError::Session(SessionError::TurnInFlight(_)) => Self::new(StatusCode::CONFLICT, msg, None),
            EngineError::Session(_) | EngineError::Config(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, msg, None),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(error = %self.body.error, "request failed");
        }
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, naming the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        ApiError::unprocessable(&field, e.inner().to_string())
    })
}

async fn blocking<T: Send + 'static>(
    engine: &Arc<Engine>,
    f: impl FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
) -> ApiResult<T> {
    let engine = Arc::clone(engine);
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None))?
        .map_err(ApiError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session: String,
}

async fn create_session(State(engine): State<Arc<Engine>>) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let session = blocking(&engine, |e| e.create_session()).await?;
    Ok((StatusCode::CREATED, Json(CreatedSession { session })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UploadManifest {
    fps: f64,
    frames: Vec<String>,
}

/// Multipart upload. An image is one `file` part, optionally with `name`
/// and `ocr` (annotation JSON). A video is a `manifest` part
/// (`{"fps": .., "frames": [file names]}`) plus one part per frame whose
/// file name matches.
async fn upload(
    State(engine): State<Arc<Engine>>,
    Path(sid): Path<String>,
    mut multipart: Multipart,
) -> ApiResult<Json<TurnResponse>> {
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::unprocessable("body", e.body_text());
    let mut file: Option<(Option<String>, Bytes)> = None;
    let mut name = None;
    let mut ocr = None;
    let mut manifest = None;
    let mut parts: HashMap<String, Bytes> = HashMap::new();
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        let part = field.name().unwrap_or_default().to_string();
        let filename = field.file_name().map(str::to_string);
        let data = field.bytes().await.map_err(bad)?;
        match part.as_str() {
            "file" => file = Some((filename, data)),
            "name" => name = Some(String::from_utf8_lossy(&data).trim().to_string()),
            "ocr" => ocr = Some(data),
            "manifest" => manifest = Some(data),
            _ => {
                if let Some(f) = filename {
                    parts.insert(f, data);
                }
            }
        }
    }

    if let Some(raw) = manifest {
        let m: UploadManifest = parse_json(&raw).map_err(|e| ApiError::unprocessable(&format!("manifest.{}", e.body.field.unwrap_or_default()), e.body.error))?;
        let frames = m
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| parts.get(f).map(|b| b.to_vec()).ok_or_else(|| ApiError::unprocessable(&format!("manifest.frames[{i}]"), format!("no part named `{f}`"))))
            .collect::<ApiResult<Vec<_>>>()?;
        let video = VideoUpload { fps: m.fps, frames };
        let r = blocking(&engine, move |e| e.upload_video(&sid, video, name)).await?;
        return Ok(Json(r));
    }

    let (filename, bytes) = file.ok_or_else(|| ApiError::unprocessable("file", "expected a `file` part or a `manifest` part"))?;
    let name = name.or(filename);
    let r = blocking(&engine, move |e| e.upload_image(&sid, &bytes, name, ocr.as_deref())).await?;
    Ok(Json(r))
}

async fn pointer(State(engine): State<Arc<Engine>>, Path(sid): Path<String>, body: Bytes) -> ApiResult<Json<TurnResponse>> {
    let wire: PointerWire = parse_json(&body)?;
    Ok(Json(blocking(&engine, move |e| e.pointer(&sid, wire)).await?))
}

async fn chat(State(engine): State<Arc<Engine>>, Path(sid): Path<String>, body: Bytes) -> ApiResult<Json<TurnResponse>> {
    let req: TurnRequest = parse_json(&body)?;
    Ok(Json(blocking(&engine, move |e| e.turn(&sid, req)).await?))
}

async fn artifact(State(engine): State<Arc<Engine>>, Path((sid, aid)): Path<(String, String)>) -> ApiResult<Response> {
    let (kind, bytes) = blocking(&engine, move |e| e.artifact(&sid, &aid)).await?;
    Ok(([(header::CONTENT_TYPE, kind.content_type())], bytes).into_response())
}

async fn frame(State(engine): State<Arc<Engine>>, Path((sid, file)): Path<(String, String)>) -> ApiResult<Response> {
    let bytes = blocking(&engine, move |e| e.frame(&sid, &file)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn history(State(engine): State<Arc<Engine>>, Path(sid): Path<String>) -> ApiResult<Response> {
    let turns = blocking(&engine, move |e| e.history(&sid)).await?;
    Ok(Json(turns).into_response())
}

async fn registry(State(engine): State<Arc<Engine>>) -> Response {
    Json(engine.registry().list()).into_response()
}

fn cors(origin: Option<&str>) -> Option<CorsLayer> {
    let origin = origin?;
    let allow = if origin == "*" {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::exact(HeaderValue::from_str(origin).ok()?)
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

pub fn router(engine: Arc<Engine>) -> Router {
    let cors = cors(engine.config().cors_origin.as_deref());
    let app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/artifacts", post(upload))
        .route("/sessions/{id}/artifacts/{aid}", get(artifact))
        .route("/sessions/{id}/frames/{file}", get(frame))
        .route("/sessions/{id}/pointer", post(pointer))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/history", get(history))
        .route("/registry", get(registry))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(engine);
    match cors {
        Some(c) => app.layer(c),
        None => app,
    }
}

pub async fn serve(engine: Arc<Engine>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(engine)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Probe {
        samples: Vec<Inner>,
    }

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Inner {
        x: f64,
    }

    #[test]
    fn json_errors_name_the_path() {
        let e = parse_json::<Probe>(br#"{"samples": [{"x": "left"}]}"#).unwrap_err();
        assert_eq!(e.status(), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.body.field.as_deref(), Some("samples[0].x"));
        let e = parse_json::<Probe>(b"nope").unwrap_err();
        assert_eq!(e.body.field.as_deref(), Some("body"));
    }

    #[test]
    fn status_mapping() {
        let s = |e: EngineError| ApiError::from(e).status();
        assert_eq!(s(SessionError::UnknownSession("a".into()).into()), StatusCode::NOT_FOUND);
        assert_eq!(s(SessionError::UnknownArtifact("a".into()).into()), StatusCode::NOT_FOUND);
        assert_eq!(s(SessionError::TurnInFlight("a".into()).into()), StatusCode::CONFLICT);
        assert_eq!(s(EngineError::Invalid { field: "f".into(), reason: "r".into() }), StatusCode::UNPROCESSABLE_ENTITY);
    }

    #[test]
    fn cors_only_when_configured() {
        assert!(cors(None).is_none());
        assert!(cors(Some("*")).is_some());
        assert!(cors(Some("http://localhost:5173")).is_some());
    }
}
