//! Trace replay and routing-accuracy evaluation.

mod trace;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use trace::{bless, load_trace, parse_trace, Action, Expectations, Trace, TraceHeader, TraceStep, TRACE_VERSION};

use crate::config::Config;
use crate::controller::backend_from_spec;
use crate::engine::{Engine, EngineError, TurnRequest, TurnResponse, VideoUpload};
use crate::session::sha256_hex;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no traces in {0}")]
    EmptyCorpus(PathBuf),
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.into(), source }
}

/// Command family a tool belongs to, for per-family accuracy.
pub fn family_of(tool: &str) -> &str {
    match tool {
        "remove_masked_object" => "remove",
        "replace_masked_object" => "replace",
        "question_masked_object" => "question",
        "caption" => "caption",
        "video_highlight" => "highlight",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub line: usize,
    pub action: String,
    /// Turn status, or `rejected` when the request itself was refused.
    pub status: String,
    pub tools: Vec<String>,
    pub reply: String,
    pub new_artifacts: Vec<String>,
    /// SHA-256 over the new artifacts' content hashes, one per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub checks: Vec<Check>,
}

impl StepReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    /// Routed steps, Clarify excluded.
    pub total: usize,
    pub clarify: usize,
}

impl Accuracy {
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, other: &Accuracy) {
        self.correct += other.correct;
        self.total += other.total;
        self.clarify += other.clarify;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub trace: PathBuf,
    pub backend: String,
    pub session: String,
    pub steps: Vec<StepReport>,
    /// Keyed by expected tool.
    pub routing: BTreeMap<String, Accuracy>,
    pub passed: bool,
}

impl ReplayReport {
    pub fn hashes(&self) -> BTreeMap<usize, String> {
        self.steps.iter().filter_map(|s| Some((s.line, s.artifact_hash.clone()?))).collect()
    }

    /// Routing accuracy keyed by command family.
    pub fn families(&self, default_family: Option<&str>) -> BTreeMap<String, Accuracy> {
        let mut out: BTreeMap<String, Accuracy> = BTreeMap::new();
        for s in &self.steps {
            let Some(expected) = s.checks.iter().find(|c| c.name == "tool") else { continue };
            let fam = s.family.as_deref().or(default_family).unwrap_or(family_of(&expected.expected));
            let acc = out.entry(fam.to_string()).or_default();
            tally(acc, s, expected);
        }
        out
    }

    pub fn table(&self) -> String {
        let mut t = format!("trace {} (backend {})\n", self.trace.display(), self.backend);
        let _ = writeln!(t, "{:>5}  {:<9}  {:<8}  {:<24}  {:<12}  result", "line", "action", "status", "tool", "hash");
        for s in &self.steps {
            let hash = s.artifact_hash.as_deref().map(|h| &h[..12]).unwrap_or("-");
            let result = if s.checks.is_empty() {
                "-".to_string()
            } else if s.passed() {
                "pass".to_string()
            } else {
                let failed: Vec<String> = s
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| format!("{}: expected {} got {}", c.name, c.expected, c.actual))
                    .collect();
                format!("FAIL ({})", failed.join("; "))
            };
            let tool = s.tools.first().map(String::as_str).unwrap_or("-");
            let _ = writeln!(t, "{:>5}  {:<9}  {:<8}  {:<24}  {:<12}  {}", s.line, s.action, s.status, tool, hash, result);
        }
        for (tool, a) in &self.routing {
            let _ = writeln!(t, "routing {tool}: {}/{} (clarify {})", a.correct, a.total, a.clarify);
        }
        let _ = writeln!(t, "{}", if self.passed { "PASS" } else { "FAIL" });
        t
    }
}

fn tally(acc: &mut Accuracy, step: &StepReport, tool_check: &Check) {
    if step.status == "clarify" {
        acc.clarify += 1;
    } else {
        acc.total += 1;
        acc.correct += usize::from(tool_check.pass);
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Overrides the trace header's backend.
    pub backend: Option<String>,
    /// Where sessions are written; a temporary directory when unset.
    pub artifact_root: Option<PathBuf>,
    pub config: Option<Config>,
}

/// Hash identifying the artifacts a step produced.
pub fn step_hash(content_hashes: &[String]) -> String {
    let joined: String = content_hashes.iter().map(|h| format!("{h}\n")).collect();
    sha256_hex(joined.as_bytes())
}

fn read_upload(base: &Path, path: &Path) -> Result<Upload, HarnessError> {
    let full = base.join(path);
    if full.is_dir() {
        #[derive(Deserialize)]
        struct Manifest {
            fps: f64,
            frames: Vec<PathBuf>,
        }
        let mpath = full.join("manifest.json");
        let raw = std::fs::read(&mpath).map_err(io(&mpath))?;
        let m: Manifest = serde_json::from_slice(&raw)
            .map_err(|e| HarnessError::Backend(format!("{}: {e}", mpath.display())))?;
        let frames = m
            .frames
            .iter()
            .map(|f| {
                let p = full.join(f);
                std::fs::read(&p).map_err(io(&p))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Upload::Video(VideoUpload { fps: m.fps, frames }));
    }
    let bytes = std::fs::read(&full).map_err(io(&full))?;
    let mut sidecar = full.clone().into_os_string();
    sidecar.push(".ocr.json");
    let sidecar = PathBuf::from(sidecar);
    let ocr = if sidecar.exists() { Some(std::fs::read(&sidecar).map_err(io(&sidecar))?) } else { None };
    Ok(Upload::Image { bytes, ocr })
}

enum Upload {
    Image { bytes: Vec<u8>, ocr: Option<Vec<u8>> },
    Video(VideoUpload),
}

/// Runs one step against `session`. Refused requests come back as `Err`.
pub fn run_step(engine: &Engine, session: &str, base: &Path, action: &Action) -> Result<Result<TurnResponse, EngineError>, HarnessError> {
    Ok(match action {
        Action::Upload { upload, name } => {
            let name = name.clone().or_else(|| upload.file_name().map(|f| f.to_string_lossy().into_owned()));
            match read_upload(base, upload)? {
                Upload::Image { bytes, ocr } => engine.upload_image(session, &bytes, name, ocr.as_deref()),
                Upload::Video(v) => engine.upload_video(session, v, name),
            }
        }
        Action::Pointer { pointer } => engine.pointer(session, pointer.clone()),
        Action::Utterance { utterance } => engine.turn(session, TurnRequest { utterance: Some(utterance.clone()), pointer_event: None }),
    })
}

fn check(name: &str, expected: &str, actual: &str) -> Check {
    Check { name: name.into(), expected: expected.into(), actual: actual.into(), pass: expected == actual }
}

/// Replays `trace` in a fresh session of `engine`.
pub fn replay_on(engine: &Engine, trace: &Trace) -> Result<ReplayReport, HarnessError> {
    let session = engine.create_session()?;
    let mut steps = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let outcome = run_step(engine, &session, trace.base_dir(), &step.action)?;
        let (status, tools, reply, new) = match outcome {
            Ok(r) => (r.status, r.tools, r.reply_text, r.new_artifacts.into_iter().map(|a| a.id).collect::<Vec<_>>()),
            Err(e @ EngineError::Config(_)) => return Err(e.into()),
            Err(e) => ("rejected".to_string(), Vec::new(), e.to_string(), Vec::new()),
        };
        let snap = engine.snapshot(&session)?;
        let content: Vec<String> = new.iter().filter_map(|id| snap.artifact(id)).map(|a| a.sha256.clone()).collect();
        let artifact_hash = (!content.is_empty()).then(|| step_hash(&content));

        let mut checks = Vec::new();
        if let Some(t) = &step.expect.expected_tool {
            checks.push(check("tool", t, tools.first().map(String::as_str).unwrap_or("-")));
        }
        if let Some(s) = &step.expect.expected_status {
            checks.push(check("status", s, &status));
        }
        if let Some(h) = &step.expect.expected_artifact_hash {
            checks.push(check("artifact_hash", h, artifact_hash.as_deref().unwrap_or("-")));
        }
        steps.push(StepReport {
            line: step.line,
            action: step.action.label().into(),
            status,
            tools,
            reply,
            new_artifacts: new,
            artifact_hash,
            family: step.family.clone().or_else(|| trace.header.family.clone()),
            checks,
        });
    }
    let mut routing: BTreeMap<String, Accuracy> = BTreeMap::new();
    for s in &steps {
        if let Some(c) = s.checks.iter().find(|c| c.name == "tool") {
            tally(routing.entry(c.expected.clone()).or_default(), s, c);
        }
    }
    let passed = steps.iter().all(StepReport::passed);
    Ok(ReplayReport { trace: trace.path.clone(), backend: String::new(), session, steps, routing, passed })
}

fn backend_spec(trace: &Trace, opts: &ReplayOptions) -> String {
    opts.backend.clone().or_else(|| trace.header.backend.clone()).unwrap_or_else(|| "null".into())
}

/// Replays a parsed trace against a fresh engine and session.
pub fn replay_trace(trace: &Trace, opts: &ReplayOptions) -> Result<ReplayReport, HarnessError> {
    let spec = backend_spec(trace, opts);
    let mut config = opts.config.clone().unwrap_or_default();
    let llm = backend_from_spec(&spec, trace.base_dir(), &config.llm.model, config.llm.token.clone(), Duration::from_secs_f64(config.llm.timeout_s))
        .map_err(HarnessError::Backend)?;
    let _tmp;
    config.artifact_dir = match &opts.artifact_root {
        Some(root) => root.clone(),
        None => {
            let t = tempfile::tempdir().map_err(io(Path::new("tempdir")))?;
            let p = t.path().to_path_buf();
            _tmp = t;
            p
        }
    };
    let engine = Engine::new(config, Arc::clone(&llm))?;
    let mut report = replay_on(&engine, trace)?;
    report.backend = spec;
    Ok(report)
}

pub fn replay(path: &Path, opts: &ReplayOptions) -> Result<ReplayReport, HarnessError> {
    replay_trace(&load_trace(path)?, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub dir: PathBuf,
    pub traces: Vec<ReplayReport>,
    pub families: BTreeMap<String, Accuracy>,
    pub overall: Accuracy,
    pub passed: bool,
}

impl CorpusReport {
    pub fn table(&self) -> String {
        let mut t = format!("corpus {} ({} traces)\n", self.dir.display(), self.traces.len());
        let _ = writeln!(t, "{:<12}  {:>7}  {:>5}  {:>7}  accuracy", "family", "correct", "total", "clarify");
        let pct = |a: &Accuracy| a.ratio().map(|r| format!("{:.1}%", r * 100.0)).unwrap_or_else(|| "-".into());
        for (f, a) in &self.families {
            let _ = writeln!(t, "{:<12}  {:>7}  {:>5}  {:>7}  {}", f, a.correct, a.total, a.clarify, pct(a));
        }
        let o = &self.overall;
        let _ = writeln!(t, "{:<12}  {:>7}  {:>5}  {:>7}  {}", "overall", o.correct, o.total, o.clarify, pct(o));
        for r in self.traces.iter().filter(|r| !r.passed) {
            t.push_str(&r.table());
        }
        let _ = writeln!(t, "{}", if self.passed { "PASS" } else { "FAIL" });
        t
    }
}

/// Every `*.jsonl` file directly inside `dir`, sorted.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(files)
}

/// Replays every trace in `dir`, in parallel, and aggregates routing
/// accuracy per command family.
pub fn corpus_eval(dir: &Path, opts: &ReplayOptions) -> Result<CorpusReport, HarnessError> {
    let traces = corpus_files(dir)?.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<(ReplayReport, Option<String>), HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = traces
            .iter()
            .map(|t| s.spawn(move || replay_trace(t, opts).map(|r| (r, t.header.family.clone()))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("replay thread panicked")).collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    let mut families: BTreeMap<String, Accuracy> = BTreeMap::new();
    let mut overall = Accuracy::default();
    for r in results {
        let (report, family) = r?;
        for (f, a) in report.families(family.as_deref()) {
            families.entry(f).or_default().add(&a);
            overall.add(&a);
        }
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed);
    Ok(CorpusReport { dir: dir.to_path_buf(), traces: reports, families, overall, passed })
}
