//! HTTP protocol for tools served out of process.
//!
//! `GET {endpoint}/descriptor` returns a [`ToolDescriptor`]; `POST
//! {endpoint}/invoke` takes an [`InvokeRequest`] and returns an
//! [`InvokeResponse`]. See `docs/external-tool-protocol.md`.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ArgMap, ToolBackend, ToolContext, ToolDescriptor, ToolError, ToolOutput, ToolResult};
use crate::perception::StrokeDraft;
use crate::session::ArtifactKind;

/// How artifact payloads travel to external tools.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactEncoding {
    #[default]
    Base64,
    Url,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum ArtifactPayload {
    Base64 {
        kind: ArtifactKind,
        /// Raw artifact bytes. Absent for videos, which carry `frames`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fps: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frames: Option<Vec<String>>,
    },
    Url {
        kind: ArtifactKind,
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fps: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frames: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvokeRequest {
    pub tool: String,
    pub args: ArgMap,
    /// Payloads keyed by the artifact ids that appear in `args`.
    pub artifacts: BTreeMap<String, ArtifactPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireOutput {
    /// Base64 PNG.
    Image { data: String },
    Text { text: String },
    /// Base64 PNG frames.
    Video { fps: f64, frames: Vec<String> },
    Draft { draft: StrokeDraft },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvokeResponse {
    pub outputs: Vec<WireOutput>,
    #[serde(default)]
    pub diagnostics: String,
}

fn client(timeout: Duration) -> Result<reqwest::blocking::Client, ToolError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ToolError::ToolUnavailable(e.to_string()))
}

fn join(endpoint: &str, path: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), path)
}

/// Fetches a tool's descriptor and marks it as served from `endpoint`.
pub fn fetch_descriptor(endpoint: &str, timeout: Duration) -> Result<ToolDescriptor, ToolError> {
    let resp = client(timeout)?
        .get(join(endpoint, "descriptor"))
        .send()
        .map_err(|e| ToolError::ToolUnavailable(format!("{endpoint}: {e}")))?;
    if !resp.status().is_success() {
        return Err(ToolError::ToolUnavailable(format!("{endpoint}: HTTP {}", resp.status())));
    }
    let mut d: ToolDescriptor = resp
        .json()
        .map_err(|e| ToolError::MalformedResponse(format!("descriptor: {e}")))?;
    d.origin = super::Origin::External(endpoint.to_string());
    Ok(d)
}

pub fn encode_artifact(
    ctx: &dyn ToolContext,
    id: &str,
    encoding: ArtifactEncoding,
) -> Result<ArtifactPayload, ToolError> {
    let (kind, bytes) = ctx.bytes(id)?;
    let url = |reference: &str| {
        ctx.artifact_url(reference)
            .ok_or_else(|| ToolError::Artifact(format!("no fetchable URL for `{reference}`")))
    };
    if kind == ArtifactKind::Video {
        let manifest = ctx.video(id)?;
        return Ok(match encoding {
            ArtifactEncoding::Base64 => {
                let mut frames = Vec::with_capacity(manifest.frames.len());
                for i in 0..manifest.frames.len() {
                    frames.push(B64.encode(encode_png(&ctx.frame(&manifest, i)?)));
                }
                ArtifactPayload::Base64 { kind, data: None, fps: Some(manifest.fps), frames: Some(frames) }
            }
            ArtifactEncoding::Url => ArtifactPayload::Url {
                kind,
                url: url(id)?,
                fps: Some(manifest.fps),
                frames: Some(manifest.frames.iter().map(|f| url(f)).collect::<Result<_, _>>()?),
            },
        });
    }
    Ok(match encoding {
        ArtifactEncoding::Base64 => ArtifactPayload::Base64 { kind, data: Some(B64.encode(bytes)), fps: None, frames: None },
        ArtifactEncoding::Url => ArtifactPayload::Url { kind, url: url(id)?, fps: None, frames: None },
    })
}

fn encode_png(img: &image::RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
        .expect("in-memory PNG encode");
    out
}

fn decode_b64(what: &str, data: &str) -> Result<Vec<u8>, ToolError> {
    B64.decode(data.trim())
        .map_err(|e| ToolError::MalformedResponse(format!("{what}: bad base64: {e}")))
}

impl WireOutput {
    pub fn into_output(self) -> Result<ToolOutput, ToolError> {
        Ok(match self {
            WireOutput::Text { text } => ToolOutput::Text(text),
            WireOutput::Draft { draft } => ToolOutput::Draft(draft),
            WireOutput::Image { data } => {
                let bytes = decode_b64("image", &data)?;
                let img = image::load_from_memory(&bytes)
                    .map_err(|e| ToolError::MalformedResponse(format!("image: {e}")))?;
                ToolOutput::Image(img.to_rgb8())
            }
            WireOutput::Video { fps, frames } => ToolOutput::NewVideo {
                fps,
                frames: frames.iter().map(|f| decode_b64("video frame", f)).collect::<Result<_, _>>()?,
            },
        })
    }
}

/// Parses an invoke response body. A body without `outputs` is malformed.
pub fn parse_response(body: &[u8]) -> Result<ToolResult, ToolError> {
    let resp: InvokeResponse =
        serde_json::from_slice(body).map_err(|e| ToolError::MalformedResponse(e.to_string()))?;
    Ok(ToolResult {
        outputs: resp.outputs.into_iter().map(WireOutput::into_output).collect::<Result<_, _>>()?,
        diagnostics: resp.diagnostics,
    })
}

#[derive(Debug, Clone)]
pub struct HttpToolBackend {
    pub endpoint: String,
    pub encoding: ArtifactEncoding,
    pub timeout: Duration,
}

impl HttpToolBackend {
    pub fn new(endpoint: impl Into<String>, encoding: ArtifactEncoding, timeout: Duration) -> Self {
        Self { endpoint: endpoint.into(), encoding, timeout }
    }

    pub fn request(&self, d: &ToolDescriptor, args: &ArgMap, ctx: &dyn ToolContext) -> Result<InvokeRequest, ToolError> {
        let mut artifacts = BTreeMap::new();
        for slot in &d.args {
            if slot.kind.artifact_kind().is_none() {
                continue;
            }
            let id = args.get(&slot.name).ok_or_else(|| ToolError::MissingInput(slot.name.clone()))?;
            artifacts.insert(id.clone(), encode_artifact(ctx, id, self.encoding)?);
        }
        Ok(InvokeRequest { tool: d.name.clone(), args: args.clone(), artifacts })
    }
}

impl ToolBackend for HttpToolBackend {
    fn invoke(&self, d: &ToolDescriptor, args: &ArgMap, ctx: &dyn ToolContext) -> Result<ToolResult, ToolError> {
        let body = self.request(d, args, ctx)?;
        let resp = client(self.timeout)?
            .post(join(&self.endpoint, "invoke"))
            .json(&body)
            .send()
            .map_err(|e| ToolError::ToolUnavailable(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ToolError::ToolUnavailable(format!("{}: HTTP {status}", self.endpoint)));
        }
        let bytes = resp
            .bytes()
            .map_err(|e| ToolError::ToolUnavailable(format!("{}: {e}", self.endpoint)))?;
        let result = parse_response(&bytes)?;
        result.check_against(d)?;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{FixtureOcr, Mask, OcrBackend};
    use crate::toolkit::{ArgKind, ArgSlot, OutputKind, VideoManifest};
    use axum::routing::{get, post};
    use axum::{http::StatusCode, Json, Router};
    use image::{Rgb, RgbImage};

    struct Ctx {
        image: RgbImage,
        ocr: FixtureOcr,
    }

    impl ToolContext for Ctx {
        fn image(&self, _: &str) -> Result<RgbImage, ToolError> {
            Ok(self.image.clone())
        }
        fn mask(&self, id: &str) -> Result<Mask, ToolError> {
            Err(ToolError::Artifact(id.into()))
        }
        fn draft(&self, id: &str) -> Result<StrokeDraft, ToolError> {
            Err(ToolError::Artifact(id.into()))
        }
        fn video(&self, id: &str) -> Result<VideoManifest, ToolError> {
            Err(ToolError::Artifact(id.into()))
        }
        fn frame(&self, _: &VideoManifest, i: usize) -> Result<RgbImage, ToolError> {
            Err(ToolError::Artifact(i.to_string()))
        }
        fn bytes(&self, _: &str) -> Result<(ArtifactKind, Vec<u8>), ToolError> {
            Ok((ArtifactKind::Image, encode_png(&self.image)))
        }
        fn artifact_url(&self, id: &str) -> Option<String> {
            Some(format!("http://files.local/{id}"))
        }
        fn ocr(&self) -> &dyn OcrBackend {
            &self.ocr
        }
    }

    fn ctx() -> Ctx {
        Ctx { image: RgbImage::from_pixel(4, 4, Rgb([1, 2, 3])), ocr: FixtureOcr::new("/nonexistent") }
    }

    fn descriptor() -> ToolDescriptor {
        ToolDescriptor::new("echo", "echo an image", vec![ArgSlot::new("image_path", ArgKind::ImagePath)], OutputKind::Image)
    }

    /// Serves `app` on an ephemeral port from a background runtime.
    fn serve(app: Router) -> String {
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        format!("http://{}", rx.recv().unwrap())
    }

    fn fixed_png() -> Vec<u8> {
        encode_png(&RgbImage::from_pixel(2, 2, Rgb([9, 8, 7])))
    }

    #[test]
    fn echo_stub_round_trip() {
        let app = Router::new()
            .route("/descriptor", get(|| async { Json(descriptor()) }))
            .route(
                "/invoke",
                post(|Json(req): Json<InvokeRequest>| async move {
                    assert_eq!(req.tool, "echo");
                    assert!(matches!(req.artifacts.get("img_a"), Some(ArtifactPayload::Base64 { data: Some(_), .. })));
                    Json(InvokeResponse {
                        outputs: vec![WireOutput::Image { data: B64.encode(fixed_png()) }],
                        diagnostics: "ok".into(),
                    })
                }),
            );
        let url = serve(app);
        let d = fetch_descriptor(&url, Duration::from_secs(5)).unwrap();
        assert_eq!(d.origin, super::super::Origin::External(url.clone()));
        assert_eq!(d.name, "echo");

        let backend = HttpToolBackend::new(&url, ArtifactEncoding::Base64, Duration::from_secs(5));
        let args: ArgMap = [("image_path".to_string(), "img_a".to_string())].into();
        let result = backend.invoke(&d, &args, &ctx()).unwrap();
        assert_eq!(result.diagnostics, "ok");
        assert_eq!(result.outputs, vec![ToolOutput::Image(RgbImage::from_pixel(2, 2, Rgb([9, 8, 7])))]);
    }

    #[test]
    fn server_error_is_unavailable() {
        let url = serve(Router::new().route("/invoke", post(|| async { StatusCode::INTERNAL_SERVER_ERROR })));
        let backend = HttpToolBackend::new(&url, ArtifactEncoding::Base64, Duration::from_secs(5));
        let args: ArgMap = [("image_path".to_string(), "img_a".to_string())].into();
        assert!(matches!(backend.invoke(&descriptor(), &args, &ctx()), Err(ToolError::ToolUnavailable(_))));
    }

    #[test]
    fn missing_outputs_is_malformed() {
        let url = serve(Router::new().route("/invoke", post(|| async { Json(serde_json::json!({"diagnostics": "x"})) })));
        let backend = HttpToolBackend::new(&url, ArtifactEncoding::Base64, Duration::from_secs(5));
        let args: ArgMap = [("image_path".to_string(), "img_a".to_string())].into();
        assert!(matches!(backend.invoke(&descriptor(), &args, &ctx()), Err(ToolError::MalformedResponse(_))));
    }

    #[test]
    fn unreachable_is_unavailable() {
        let backend = HttpToolBackend::new("http://127.0.0.1:1", ArtifactEncoding::Base64, Duration::from_secs(2));
        let args: ArgMap = [("image_path".to_string(), "img_a".to_string())].into();
        assert!(matches!(backend.invoke(&descriptor(), &args, &ctx()), Err(ToolError::ToolUnavailable(_))));
    }

    #[test]
    fn url_encoding_references_artifacts() {
        let backend = HttpToolBackend::new("http://unused", ArtifactEncoding::Url, Duration::from_secs(1));
        let args: ArgMap = [("image_path".to_string(), "img_a".to_string())].into();
        let req = backend.request(&descriptor(), &args, &ctx()).unwrap();
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(
            json["artifacts"]["img_a"],
            serde_json::json!({"encoding": "url", "kind": "image", "url": "http://files.local/img_a"})
        );
    }
}
