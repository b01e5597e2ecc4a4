//! Trace files: a header line then one step per line, each a JSON object.
//!
//! ```text
//! {"version": 1, "backend": "null"}
//! {"upload": "fixtures/scene.png"}
//! {"pointer": {"target_artifact": "scene.png", "samples": [{"x": 0.5, "y": 0.5, "t_ms": 0}]}}
//! {"utterance": "remove the masked object", "expected_tool": "remove_masked_object"}
//! ```
//!
//! Blank lines and lines starting with `#` or `//` are skipped.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::engine::PointerWire;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub version: u32,
    /// `null` or `scripted:<path>`; the path is relative to the trace file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    /// Command family for every routed step that does not name its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Upload { upload: PathBuf, name: Option<String> },
    Pointer { pointer: PointerWire },
    Utterance { utterance: String },
}

impl Action {
    pub fn label(&self) -> &'static str {
        match self {
            Action::Upload { .. } => "upload",
            Action::Pointer { .. } => "pointer",
            Action::Utterance { .. } => "utterance",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_artifact_hash: Option<String>,
}

impl Expectations {
    pub fn is_empty(&self) -> bool {
        self.expected_tool.is_none() && self.expected_status.is_none() && self.expected_artifact_hash.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 1-based line in the trace file.
    pub line: usize,
    pub action: Action,
    pub expect: Expectations,
    pub family: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub path: PathBuf,
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new(""))
    }
}

// Flat on-disk form; exactly one action field may be set.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    utterance: Option<String>,
    pointer: Option<PointerWire>,
    upload: Option<PathBuf>,
    name: Option<String>,
    family: Option<String>,
    #[serde(flatten)]
    expect: Expectations,
}

fn malformed(line: usize, reason: impl Into<String>) -> HarnessError {
    HarnessError::MalformedTrace { line, reason: reason.into() }
}

fn parse_step(line: usize, raw: &str) -> Result<TraceStep, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    let s: RawStep = serde_path_to_error::deserialize(de).map_err(|e| malformed(line, e.to_string()))?;
    let action = match (s.utterance, s.pointer, s.upload) {
        (Some(u), None, None) => Action::Utterance { utterance: u },
        (None, Some(p), None) => Action::Pointer { pointer: p },
        (None, None, Some(path)) => Action::Upload { upload: path, name: s.name.clone() },
        (None, None, None) => return Err(malformed(line, "step has no action")),
        _ => return Err(malformed(line, "step has more than one action")),
    };
    if s.name.is_some() && !matches!(action, Action::Upload { .. }) {
        return Err(malformed(line, "`name` only applies to uploads"));
    }
    Ok(TraceStep { line, action, expect: s.expect, family: s.family })
}

fn is_skipped(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#') || t.starts_with("//")
}

pub fn parse_trace(text: &str, path: &Path) -> Result<Trace, HarnessError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !is_skipped(l));
    let (hline, hraw) = lines.next().ok_or_else(|| malformed(1, "missing header line"))?;
    let header: TraceHeader = serde_json::from_str(hraw).map_err(|e| malformed(hline, format!("header: {e}")))?;
    if header.version != TRACE_VERSION {
        return Err(malformed(hline, format!("unsupported trace version {}", header.version)));
    }
    let steps = lines.map(|(n, l)| parse_step(n, l)).collect::<Result<Vec<_>, _>>()?;
    Ok(Trace { path: path.to_path_buf(), header, steps })
}

pub fn load_trace(path: &Path) -> Result<Trace, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })?;
    parse_trace(&text, path)
}

/// Rewrites `text` so every step that produced artifacts records their hash
/// as `expected_artifact_hash`. `hashes` maps trace line to step hash.
pub fn bless(text: &str, hashes: &std::collections::BTreeMap<usize, String>) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        let updated = hashes.get(&(i + 1)).and_then(|h| {
            let mut v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line).ok()?;
            match v.get("expected_artifact_hash") {
                Some(old) if old == h.as_str() => None,
                // keep the author's key order when appending
                None => Some(format!("{}, \"expected_artifact_hash\": {}}}", line.trim_end().strip_suffix('}')?, serde_json::to_string(h).ok()?)),
                Some(_) => {
                    v.insert("expected_artifact_hash".into(), h.clone().into());
                    serde_json::to_string(&v).ok()
                }
            }
        });
        out.push_str(updated.as_deref().unwrap_or(line));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"version": 1}"#;

    fn parse(body: &str) -> Result<Trace, HarnessError> {
        parse_trace(&format!("{HEADER}\n{body}"), Path::new("t.jsonl"))
    }

    #[test]
    fn three_actions() {
        let t = parse(concat!(
            "{\"upload\": \"a.png\", \"name\": \"scene\"}\n",
            "\n# comment\n",
            "{\"pointer\": {\"target_artifact\": \"scene\", \"samples\": [{\"x\": 0.5, \"y\": 0.5, \"t_ms\": 0}]}}\n",
            "{\"utterance\": \"remove the masked object\", \"expected_tool\": \"remove_masked_object\", \"family\": \"remove\"}\n",
        ))
        .unwrap();
        assert_eq!(t.steps.len(), 3);
        assert_eq!(t.steps[0].action, Action::Upload { upload: "a.png".into(), name: Some("scene".into()) });
        assert_eq!(t.steps[1].line, 5);
        assert_eq!(t.steps[2].expect.expected_tool.as_deref(), Some("remove_masked_object"));
        assert_eq!(t.steps[2].family.as_deref(), Some("remove"));
    }

    #[test]
    fn both_utterance_and_pointer_is_malformed() {
        let err = parse(
            "{\"utterance\": \"x\", \"pointer\": {\"target_artifact\": \"a\", \"samples\": [{\"x\": 0.5, \"y\": 0.5, \"t_ms\": 0}]}}",
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::MalformedTrace { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse("{}"), Err(HarnessError::MalformedTrace { line: 2, .. })));
        assert!(matches!(parse("not json"), Err(HarnessError::MalformedTrace { line: 2, .. })));
        assert!(matches!(parse("{\"utterance\": \"x\", \"bogus\": 1}"), Err(HarnessError::MalformedTrace { .. })));
        assert!(matches!(parse("{\"utterance\": \"x\", \"name\": \"n\"}"), Err(HarnessError::MalformedTrace { .. })));
        assert!(matches!(parse_trace("{\"version\": 9}", Path::new("t")), Err(HarnessError::MalformedTrace { line: 1, .. })));
        assert!(matches!(parse_trace("", Path::new("t")), Err(HarnessError::MalformedTrace { line: 1, .. })));
        match parse("{\"utterance\": 3}") {
            Err(HarnessError::MalformedTrace { reason, .. }) => assert!(reason.contains("utterance"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bless_adds_hashes_only_where_given() {
        let text = format!("{HEADER}\n{{\"utterance\": \"a\"}}\n{{\"utterance\": \"b\"}}\n");
        let hashes = std::collections::BTreeMap::from([(3, "abc".to_string())]);
        let blessed = bless(&text, &hashes);
        let t = parse_trace(&blessed, Path::new("t")).unwrap();
        assert_eq!(t.steps[0].expect.expected_artifact_hash, None);
        assert_eq!(t.steps[1].expect.expected_artifact_hash.as_deref(), Some("abc"));
    }
}
