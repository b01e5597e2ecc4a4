use std::collections::BTreeMap;

use image::RgbImage;

use super::llm::LlmBackend;
use super::parse::{parse_with, Lexicon};
use super::plan::{ArgSource, TaskPlan};
use super::resolve::resolve_arguments;
use super::validate::validate_and_correct;
use super::ControllerError;
use crate::perception::{Mask, OcrBackend, StrokeDraft};
use crate::session::{ArtifactKind, Session, SessionError};
use crate::toolkit::{ArgKind, ArgMap, Registry, ToolContext, ToolError, ToolOutput, VideoManifest};

/// Read-only view of a session's artifacts for tool backends.
pub struct SessionContext<'a> {
    pub session: &'a Session,
    pub ocr: &'a dyn OcrBackend,
    /// Maps an artifact id or frame path to a fetchable URL.
    pub url_for: Option<&'a (dyn Fn(&str) -> String + Sync)>,
}

fn artifact_err(e: SessionError) -> ToolError {
    match e {
        SessionError::MalformedManifest(m) => ToolError::MalformedManifest(m),
        other => ToolError::Artifact(other.to_string()),
    }
}

impl ToolContext for SessionContext<'_> {
    fn image(&self, id: &str) -> Result<RgbImage, ToolError> {
        self.session.load_image(id).map_err(artifact_err)
    }
    fn mask(&self, id: &str) -> Result<Mask, ToolError> {
        self.session.load_mask(id).map_err(artifact_err)
    }
    fn draft(&self, id: &str) -> Result<StrokeDraft, ToolError> {
        self.session.load_draft(id).map_err(artifact_err)
    }
    fn video(&self, id: &str) -> Result<VideoManifest, ToolError> {
        self.session.load_video(id).map_err(artifact_err)
    }
    fn frame(&self, manifest: &VideoManifest, index: usize) -> Result<RgbImage, ToolError> {
        self.session.load_frame(manifest, index).map_err(artifact_err)
    }
    fn bytes(&self, id: &str) -> Result<(ArtifactKind, Vec<u8>), ToolError> {
        let kind = self
            .session
            .state()
            .artifact(id)
            .map(|a| a.kind)
            .ok_or_else(|| ToolError::Artifact(format!("unknown artifact `{id}`")))?;
        Ok((kind, self.session.read(id).map_err(artifact_err)?))
    }
    fn artifact_url(&self, id: &str) -> Option<String> {
        self.url_for.map(|f| f(id))
    }
    fn ocr(&self) -> &dyn OcrBackend {
        self.ocr
    }
}

/// Everything `execute` needs besides the plan and the session.
pub struct Executor<'a> {
    pub registry: &'a Registry,
    pub llm: &'a dyn LlmBackend,
    pub lexicon: &'a Lexicon,
    pub ocr: &'a dyn OcrBackend,
    pub url_for: Option<&'a (dyn Fn(&str) -> String + Sync)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    pub tool: String,
    pub args: ArgMap,
    /// Registered output artifact ids, primary first.
    pub outputs: Vec<String>,
    /// Text outputs inline, in output order.
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub step: usize,
    pub tool: String,
    pub error: ControllerError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    /// The plan with every binding filled in, up to the failing step.
    pub plan: TaskPlan,
    pub steps: Vec<StepOutcome>,
    pub failure: Option<StepFailure>,
    pub summary: String,
}

impl ExecutionReport {
    pub fn outputs(&self) -> Vec<String> {
        self.steps.iter().flat_map(|s| s.outputs.iter().cloned()).collect()
    }
}

/// Validates, then invokes. The only call site of tool backends.
pub fn dispatch(
    exec: &Executor<'_>,
    tool: &str,
    proposed: &ArgMap,
    session: &Session,
) -> Result<(ArgMap, Vec<ToolOutput>), ControllerError> {
    let registered = exec.registry.get(tool).ok_or_else(|| ControllerError::UnknownTool(tool.to_string()))?;
    let args = validate_and_correct(&registered.descriptor, proposed, session.state())?;
    let ctx = SessionContext { session, ocr: exec.ocr, url_for: exec.url_for };
    let result = registered
        .backend
        .invoke(&registered.descriptor, &args, &ctx)
        .map_err(ControllerError::Tool)?;
    result.check_against(&registered.descriptor).map_err(ControllerError::Tool)?;
    Ok((args, result.outputs))
}

fn register_output(session: &mut Session, tool: &str, out: ToolOutput) -> Result<(String, Option<String>), SessionError> {
    Ok(match out {
        ToolOutput::Image(img) => (session.put_image(&img, tool, None)?, None),
        ToolOutput::Text(t) => (session.put_text(&t, tool)?, Some(t)),
        ToolOutput::Draft(d) => (session.put_draft(&d, tool)?, None),
        ToolOutput::Video(m) => (session.put_video(&m, tool, None)?, None),
        ToolOutput::NewVideo { fps, frames } => (session.import_video(fps, &frames, None)?, None),
    })
}

fn summarize(steps: &[StepOutcome], failure: Option<&StepFailure>) -> String {
    let mut lines: Vec<String> = steps
        .iter()
        .map(|s| {
            let mut line = format!("{} produced {}.", s.tool, s.outputs.join(", "));
            for t in &s.texts {
                line.push_str(&format!(" {t}"));
            }
            line
        })
        .collect();
    if let Some(f) = failure {
        lines.push(format!("Step {} ({}) failed: {}.", f.step + 1, f.tool, f.error));
    }
    lines.join("\n")
}

/// Runs the plan in order. Each step's outputs are registered before the
/// next step resolves its arguments. Stops at the first failure.
pub fn execute(plan: &TaskPlan, session: &mut Session, exec: &Executor<'_>) -> ExecutionReport {
    let mut bound_plan = TaskPlan::default();
    let mut steps: Vec<StepOutcome> = Vec::new();
    let mut failure = None;

    for (k, step) in plan.steps.iter().enumerate() {
        match run_step(k, step, &steps, session, exec) {
            Ok((outcome, bindings)) => {
                let mut s = step.clone();
                s.bindings = bindings;
                bound_plan.steps.push(s);
                steps.push(outcome);
            }
            Err(error) => {
                failure = Some(StepFailure { step: k, tool: step.tool.clone(), error });
                break;
            }
        }
    }
    let summary = summarize(&steps, failure.as_ref());
    ExecutionReport { plan: bound_plan, steps, failure, summary }
}

fn run_step(
    k: usize,
    step: &super::plan::PlanStep,
    done: &[StepOutcome],
    session: &mut Session,
    exec: &Executor<'_>,
) -> Result<(StepOutcome, BTreeMap<String, ArgSource>), ControllerError> {
    let descriptor = exec
        .registry
        .lookup(&step.tool)
        .ok_or_else(|| ControllerError::UnknownTool(step.tool.clone()))?
        .clone();

    let mut proposed = ArgMap::new();
    for (name, src) in &step.bindings {
        let value = match src {
            ArgSource::Literal { value } => value.clone(),
            ArgSource::Artifact { id } | ArgSource::Dialogue { id } | ArgSource::Recent { id } => id.clone(),
            ArgSource::OutputOf { step: j, slot } => done
                .get(*j)
                .filter(|_| *j < k)
                .and_then(|s| s.outputs.get(*slot))
                .cloned()
                .ok_or_else(|| ControllerError::MissingArgument(name.clone()))?,
            ArgSource::PointerState { .. } => continue,
        };
        proposed.insert(name.clone(), value);
    }
    let parsed = parse_with(&step.clause, exec.lexicon)?;
    let pre: BTreeMap<String, ArgSource> = step
        .bindings
        .iter()
        .filter(|(_, s)| !matches!(s, ArgSource::PointerState { .. }))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let resolved = resolve_arguments(&descriptor, &parsed, session.state(), exec.llm, &pre)?;
    let mut bindings = pre;
    for (name, value) in resolved.args {
        proposed.insert(name.clone(), value);
    }
    bindings.extend(resolved.sources);

    let (args, outputs) = dispatch(exec, &step.tool, &proposed, session)?;

    let mut ids = Vec::new();
    let mut texts = Vec::new();
    for out in outputs {
        let (id, text) = register_output(session, &step.tool, out).map_err(|e| ControllerError::Session(e.to_string()))?;
        ids.push(id);
        texts.extend(text);
    }

    let state = session.state_mut();
    for slot in &descriptor.args {
        match slot.kind {
            ArgKind::DraftPath if state.open_draft.as_deref() == args.get(&slot.name).map(String::as_str) => {
                state.open_draft = None;
            }
            ArgKind::Drag => state.pending_drag = None,
            _ => {}
        }
    }

    Ok((StepOutcome { step: k, tool: step.tool.clone(), args, outputs: ids, texts }, bindings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::llm::NullLlm;
    use crate::controller::plan::plan;
    use crate::perception::FixtureOcr;
    use crate::toolkit::{ArgSlot, OutputKind, ToolBackend, ToolDescriptor, ToolResult};
    use image::Rgb;
    use std::sync::{Arc, Mutex};

    /// Scene whose dominant color flips once the square is removed.
    fn scene() -> RgbImage {
        RgbImage::from_fn(20, 20, |x, y| if (1..19).contains(&x) && (1..19).contains(&y) { Rgb([255, 0, 0]) } else { Rgb([0, 0, 255]) })
    }

    fn square_mask(source: &str) -> Mask {
        let mut m = Mask::empty(20, 20);
        for y in 1..19 {
            for x in 1..19 {
                m.set(x, y, true);
            }
        }
        m.source_image = Some(source.into());
        m
    }

    struct Fixture {
        _dir: tempfile::TempDir,
        session: Session,
        image: String,
        mask: String,
    }

    fn fixture() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let mut session = Session::create(dir.path().join("s"), "s").unwrap();
        let image = session.put_image(&scene(), "upload", Some("scene.png".into())).unwrap();
        let mask = session.put_mask(&square_mask(&image), "gesture").unwrap();
        session.state_mut().active_mask = Some(mask.clone());
        Fixture { _dir: dir, session, image, mask }
    }

    fn run(f: &mut Fixture, registry: &Registry, utterance: &str) -> ExecutionReport {
        let lex = Lexicon::default();
        let ocr = FixtureOcr::new("/nonexistent");
        let exec = Executor { registry, llm: &NullLlm, lexicon: &lex, ocr: &ocr, url_for: None };
        let p = plan(utterance, registry, &lex, 3).unwrap();
        execute(&p, &mut f.session, &exec)
    }

    #[test]
    fn single_step_remove() {
        let mut f = fixture();
        let reg = Registry::builtin(2.0);
        let r = run(&mut f, &reg, "remove the masked object");
        assert!(r.failure.is_none(), "{:?}", r.failure);
        assert_eq!(r.steps[0].args["image_path"], f.image);
        assert_eq!(r.steps[0].args["mask_path"], f.mask);
        let out = &r.steps[0].outputs[0];
        assert!(out.ends_with("_image.png"));
        assert!(r.summary.contains(out) && r.summary.contains("remove_masked_object"));
        assert_eq!(r.plan.steps[0].bindings.len(), 2);
    }

    #[test]
    fn chained_caption_reads_edited_image() {
        let mut f = fixture();
        let reg = Registry::builtin(2.0);
        let original = crate::toolkit::builtin::caption(&scene());
        assert_eq!(original, "a 20x20 image, mostly red");
        let r = run(&mut f, &reg, "remove the masked object and then caption this photo");
        assert!(r.failure.is_none(), "{:?}", r.failure);
        assert_eq!(r.steps[1].args["image_path"], r.steps[0].outputs[0]);
        assert_eq!(r.steps[1].texts, ["a 20x20 image, mostly blue"]);
        assert_eq!(r.plan.steps[1].bindings["image_path"], ArgSource::OutputOf { step: 0, slot: 0 });
    }

    #[test]
    fn halt_keeps_completed_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut session = Session::create(dir.path().join("s"), "s").unwrap();
        session.put_image(&scene(), "upload", None).unwrap();
        let mut f = Fixture { _dir: dir, session, image: String::new(), mask: String::new() };
        let reg = Registry::builtin(2.0);
        let r = run(&mut f, &reg, "caption this photo then remove the masked object");
        assert_eq!(r.steps.len(), 1);
        let fail = r.failure.unwrap();
        assert_eq!(fail.step, 1);
        assert_eq!(fail.error, ControllerError::MissingArgument("mask_path".into()));
        assert!(f.session.state().artifact(&r.steps[0].outputs[0]).is_some());
    }

    /// Records every argument map that reaches the backend.
    struct Recording(Arc<Mutex<Vec<ArgMap>>>);

    impl ToolBackend for Recording {
        fn invoke(&self, _: &ToolDescriptor, args: &ArgMap, _: &dyn ToolContext) -> Result<ToolResult, ToolError> {
            self.0.lock().unwrap().push(args.clone());
            Ok(ToolResult { outputs: vec![ToolOutput::Text("ok".into())], diagnostics: String::new() })
        }
    }

    #[test]
    fn dispatch_only_sees_validated_arguments() {
        let calls = Arc::new(Mutex::new(Vec::new()));
        let mut reg = Registry::new();
        let d = ToolDescriptor::new(
            "inspect_mask",
            "inspect mask",
            vec![ArgSlot::new("mask_path", ArgKind::MaskPath)],
            OutputKind::Text,
        );
        reg.register(d, Arc::new(Recording(calls.clone()))).unwrap();
        let lex = Lexicon::default();
        let ocr = FixtureOcr::new("/nonexistent");
        let exec = Executor { registry: &reg, llm: &NullLlm, lexicon: &lex, ocr: &ocr, url_for: None };

        let mut f = fixture();
        let bad: ArgMap = [("mask_path".to_string(), "mask_9.png".to_string())].into();
        // two masks, neither close to the name: no substitution possible
        let mut other = square_mask(&f.image);
        other.set(0, 0, true);
        f.session.put_mask(&other, "gesture").unwrap();
        assert!(matches!(dispatch(&exec, "inspect_mask", &bad, &f.session), Err(ControllerError::InvalidArgument { .. })));
        assert!(calls.lock().unwrap().is_empty());

        let good: ArgMap = [("mask_path".to_string(), format!(" '{}' ", f.mask))].into();
        dispatch(&exec, "inspect_mask", &good, &f.session).unwrap();
        let seen = calls.lock().unwrap().clone();
        assert_eq!(seen.len(), 1);
        for args in seen {
            let d = reg.lookup("inspect_mask").unwrap();
            assert_eq!(validate_and_correct(d, &args, f.session.state()).unwrap(), args);
        }
    }

    #[test]
    fn draft_consumed_closes_it() {
        let mut f = fixture();
        let stroke = crate::perception::Stroke { points: vec![(1, 1), (5, 5)], color: [0, 0, 0], width: 1 };
        crate::perception::store_stroke(&mut f.session, vec![stroke], (20, 20), Some(f.image.clone())).unwrap();
        assert!(f.session.state().open_draft.is_some());
        let reg = Registry::builtin(2.0);
        let r = run(&mut f, &reg, "generate an image from my drawing titled \"sunrise\"");
        assert!(r.failure.is_none(), "{:?}", r.failure);
        assert_eq!(r.steps[0].tool, "generate_from_draft");
        assert_eq!(r.steps[0].texts, ["sunrise"]);
        assert!(f.session.state().open_draft.is_none());
    }

    #[test]
    fn identical_inputs_identical_plans_and_args() {
        let reg = Registry::builtin(2.0);
        let mut a = fixture();
        let mut b = fixture();
        let ra = run(&mut a, &reg, "remove the masked object and then caption this photo");
        let rb = run(&mut b, &reg, "remove the masked object and then caption this photo");
        assert_eq!(ra.plan, rb.plan);
        assert_eq!(ra.steps, rb.steps);
    }
}
