use std::collections::BTreeMap;

use super::llm::LlmBackend;
use super::parse::ParsedInstruction;
use super::plan::{ArgSource, PointerSlot};
use super::ControllerError;
use crate::session::{Artifact, ArtifactKind, SessionState};
use crate::toolkit::{ArgKind, ArgMap, ArgSlot, ToolDescriptor};

/// The auxiliary-control query for a tool's unresolved arguments.
pub fn argument_query(tool: &ToolDescriptor, args: &[&ArgSlot]) -> String {
    let names: Vec<_> = args.iter().map(|a| a.name.as_str()).collect();
    format!("What's the {} of the '{}' API?", names.join(" and "), tool.name)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolved {
    pub args: ArgMap,
    pub sources: BTreeMap<String, ArgSource>,
}

fn looks_like_file(word: &str) -> bool {
    let lower = word.to_ascii_lowercase();
    [".png", ".jpg", ".jpeg", ".json", ".txt"].iter().any(|e| lower.ends_with(e) && lower.len() > e.len())
}

/// Kind a file-like word most plausibly refers to.
fn guess_kind(word: &str) -> Option<ArtifactKind> {
    let lower = word.to_ascii_lowercase();
    if lower.ends_with(".png") || lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        Some(if lower.contains("mask") { ArtifactKind::Mask } else { ArtifactKind::Image })
    } else if lower.ends_with(".json") {
        Some(if lower.contains("draft") { ArtifactKind::StrokeDraft } else { ArtifactKind::Video })
    } else if lower.ends_with(".txt") {
        Some(ArtifactKind::Text)
    } else {
        None
    }
}

/// Artifact-naming literals in the utterance, in order: `(value, kind)`.
/// Words that look like file names but name nothing are kept with a guessed
/// kind so validation can correct them.
fn artifact_literals(parsed: &ParsedInstruction, state: &SessionState) -> Vec<(String, ArtifactKind, bool)> {
    let mut out = Vec::new();
    let words = parsed.quoted_spans.iter().map(|s| s.trim()).chain(parsed.raw_words());
    for w in words {
        if let Some(a) = state.lookup(w) {
            out.push((a.id.clone(), a.kind, true));
        } else if looks_like_file(w) {
            if let Some(kind) = guess_kind(w) {
                out.push((w.to_string(), kind, false));
            }
        }
    }
    out
}

fn first_number(parsed: &ParsedInstruction) -> Option<String> {
    parsed.raw_words().into_iter().find_map(|w| {
        let w = w.trim_end_matches(['s', 'S']);
        w.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).map(|_| w.to_string())
    })
}

/// Prompt text: the first quoted span, else what follows " with ", else the
/// whole clause.
pub fn prompt_text(parsed: &ParsedInstruction) -> String {
    if let Some(q) = parsed.quoted_spans.first().filter(|q| !q.trim().is_empty()) {
        return q.trim().to_string();
    }
    let lower = parsed.raw_text.to_lowercase();
    if let Some(i) = lower.find(" with ") {
        let rest = parsed.raw_text[i + " with ".len()..].trim();
        if !rest.is_empty() {
            return rest.to_string();
        }
    }
    parsed.raw_text.clone()
}

/// The active mask's source, when that mask is newer than every artifact of
/// `kind`: a fresh pick points at the media it was made on.
fn mask_source(state: &SessionState, kind: ArtifactKind) -> Option<&Artifact> {
    let mask = state.artifact(state.active_mask.as_deref()?)?;
    let source = state.artifact(mask.source.as_deref()?)?;
    let newest = state.latest_artifact(kind)?;
    (source.kind == kind && mask.order > newest.order).then_some(source)
}

fn from_pointer(slot: &ArgSlot, state: &SessionState) -> Option<(String, PointerSlot)> {
    match slot.kind {
        ArgKind::MaskPath => state.active_mask.clone().map(|m| (m, PointerSlot::ActiveMask)),
        ArgKind::DraftPath => state.open_draft.clone().map(|d| (d, PointerSlot::OpenDraft)),
        ArgKind::Drag => state
            .pending_drag
            .as_ref()
            .map(|p| (format!("{},{}", p.displacement.dx, p.displacement.dy), PointerSlot::PendingDrag)),
        ArgKind::Timestamp => state.pointer_timestamp.map(|t| (t.to_string(), PointerSlot::Timestamp)),
        ArgKind::ImagePath | ArgKind::VideoPath => {
            mask_source(state, slot.kind.artifact_kind()?).map(|a| (a.id.clone(), PointerSlot::MaskSource))
        }
        ArgKind::Prompt | ArgKind::Question => None,
    }
}

/// Resolves every argument not already in `bound`. Priority: literal in the
/// utterance, pointer state, the language model's reading of the dialogue,
/// then the most recent artifact of the required kind.
pub fn resolve_arguments(
    tool: &ToolDescriptor,
    parsed: &ParsedInstruction,
    state: &SessionState,
    llm: &dyn LlmBackend,
    bound: &BTreeMap<String, ArgSource>,
) -> Result<Resolved, ControllerError> {
    let mut out = Resolved::default();
    let literals = artifact_literals(parsed, state);
    let mut used: Vec<String> = Vec::new();
    let mut pending: Vec<&ArgSlot> = Vec::new();

    for slot in &tool.args {
        if bound.contains_key(&slot.name) {
            continue;
        }
        let kind = slot.kind.artifact_kind();
        let literal = match slot.kind {
            ArgKind::Prompt => Some(prompt_text(parsed)),
            ArgKind::Question => Some(parsed.raw_text.clone()),
            ArgKind::Timestamp => first_number(parsed),
            ArgKind::Drag => None,
            _ => {
                let pick = |known: bool| {
                    literals
                        .iter()
                        .find(|(v, k, kn)| Some(*k) == kind && *kn == known && !used.contains(v))
                        .map(|(v, _, _)| v.clone())
                };
                pick(true).or_else(|| pick(false))
            }
        };
        if let Some(v) = literal {
            used.push(v.clone());
            out.sources.insert(slot.name.clone(), ArgSource::Literal { value: v.clone() });
            out.args.insert(slot.name.clone(), v);
            continue;
        }
        if let Some((v, p)) = from_pointer(slot, state) {
            out.sources.insert(slot.name.clone(), ArgSource::PointerState { slot: p });
            out.args.insert(slot.name.clone(), v);
            continue;
        }
        pending.push(slot);
    }

    let artifact_pending: Vec<&ArgSlot> = pending.iter().copied().filter(|s| s.kind.artifact_kind().is_some()).collect();
    if !artifact_pending.is_empty() && !llm.is_null() {
        let answer = llm.complete(&argument_query(tool, &artifact_pending), &state.history_as_dialogue());
        let named: Vec<&Artifact> = answer
            .split(|c: char| c.is_whitespace() || ",;:'\"`()[]".contains(c))
            .map(|w| w.trim_end_matches('.'))
            .filter_map(|w| state.lookup(w))
            .collect();
        for slot in &artifact_pending {
            let kind = slot.kind.artifact_kind();
            if let Some(a) = named.iter().find(|a| Some(a.kind) == kind && !used.contains(&a.id)) {
                used.push(a.id.clone());
                out.sources.insert(slot.name.clone(), ArgSource::Dialogue { id: a.id.clone() });
                out.args.insert(slot.name.clone(), a.id.clone());
            }
        }
    }

    for slot in pending {
        if out.args.contains_key(&slot.name) {
            continue;
        }
        let recent = slot.kind.artifact_kind().and_then(|k| state.latest_artifact(k));
        match recent {
            Some(a) => {
                out.sources.insert(slot.name.clone(), ArgSource::Recent { id: a.id.clone() });
                out.args.insert(slot.name.clone(), a.id.clone());
            }
            None => return Err(ControllerError::MissingArgument(slot.name.clone())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::llm::{NullLlm, ScriptedLlm};
    use crate::controller::parse::parse_instruction;
    use crate::perception::Mask;
    use crate::session::{PendingDrag, PendingDragRecord, Session};
    use crate::toolkit::BuiltinTool;
    use image::{Rgb, RgbImage};

    fn session() -> (tempfile::TempDir, Session) {
        let dir = tempfile::tempdir().unwrap();
        let s = Session::create(dir.path().join("s"), "s").unwrap();
        (dir, s)
    }

    fn image(s: &mut Session, v: u8, name: &str) -> String {
        s.put_image(&RgbImage::from_pixel(4, 4, Rgb([v, v, v])), "upload", Some(name.into())).unwrap()
    }

    fn mask(s: &mut Session, source: &str, on: u32) -> String {
        let mut m = Mask::empty(4, 4);
        for x in 0..on {
            m.set(x, 0, true);
        }
        m.source_image = Some(source.into());
        s.put_mask(&m, "gesture").unwrap()
    }

    fn resolve(tool: BuiltinTool, utterance: &str, s: &Session, llm: &dyn LlmBackend) -> Result<Resolved, ControllerError> {
        resolve_arguments(&tool.descriptor(), &parse_instruction(utterance).unwrap(), s.state(), llm, &BTreeMap::new())
    }

    #[test]
    fn pointer_state_with_null_llm() {
        let (_d, mut s) = session();
        let img = image(&mut s, 10, "scene.png");
        let m = mask(&mut s, &img, 2);
        s.state_mut().active_mask = Some(m.clone());
        let r = resolve(BuiltinTool::Remove, "remove the masked object", &s, &NullLlm).unwrap();
        assert_eq!(r.args["image_path"], img);
        assert_eq!(r.args["mask_path"], m);
        assert_eq!(r.sources["mask_path"], ArgSource::PointerState { slot: PointerSlot::ActiveMask });
    }

    #[test]
    fn history_mask_by_recency() {
        let (_d, mut s) = session();
        let img = image(&mut s, 10, "scene.png");
        let m = mask(&mut s, &img, 2);
        let r = resolve(BuiltinTool::Remove, "remove the masked object", &s, &NullLlm).unwrap();
        assert_eq!(r.args["mask_path"], m);
        assert_eq!(r.sources["mask_path"], ArgSource::Recent { id: m });
    }

    #[test]
    fn pointer_beats_history() {
        let (_d, mut s) = session();
        let a = image(&mut s, 10, "a.png");
        let picked = mask(&mut s, &a, 1);
        let _newer = mask(&mut s, &a, 3);
        s.state_mut().active_mask = Some(picked.clone());
        let r = resolve(BuiltinTool::Remove, "remove the masked object", &s, &NullLlm).unwrap();
        assert_eq!(r.args["mask_path"], picked);
    }

    #[test]
    fn newer_image_outranks_stale_mask_source() {
        let (_d, mut s) = session();
        let a = image(&mut s, 10, "a.png");
        let m = mask(&mut s, &a, 2);
        s.state_mut().active_mask = Some(m);
        let edited = image(&mut s, 99, "edited.png");
        let r = resolve(BuiltinTool::Caption, "caption this photo", &s, &NullLlm).unwrap();
        assert_eq!(r.args["image_path"], edited);
    }

    #[test]
    fn literals_first() {
        let (_d, mut s) = session();
        let a = image(&mut s, 10, "first.png");
        let _b = image(&mut s, 20, "second.png");
        let r = resolve(BuiltinTool::Caption, "caption first.png", &s, &NullLlm).unwrap();
        assert_eq!(r.args["image_path"], a);
        let r = resolve(BuiltinTool::Caption, "caption image_03.png", &s, &NullLlm).unwrap();
        assert_eq!(r.args["image_path"], "image_03.png");
    }

    #[test]
    fn question_and_prompt_literals() {
        let (_d, mut s) = session();
        let img = image(&mut s, 10, "a.png");
        mask(&mut s, &img, 1);
        let q = "what is the background color in the masked region";
        assert_eq!(resolve(BuiltinTool::Question, q, &s, &NullLlm).unwrap().args["question"], q);
        let r = resolve(BuiltinTool::Replace, "replace the masked object with a red vase", &s, &NullLlm).unwrap();
        assert_eq!(r.args["prompt"], "a red vase");
        let r = resolve(BuiltinTool::Replace, "replace it with \"a vase, tall\" now", &s, &NullLlm).unwrap();
        assert_eq!(r.args["prompt"], "a vase, tall");
    }

    #[test]
    fn missing_argument_names_slot() {
        let (_d, mut s) = session();
        image(&mut s, 10, "a.png");
        assert_eq!(
            resolve(BuiltinTool::Remove, "remove the masked object", &s, &NullLlm),
            Err(ControllerError::MissingArgument("mask_path".into()))
        );
        assert_eq!(
            resolve(BuiltinTool::Move, "move the masked object", &s, &NullLlm),
            Err(ControllerError::MissingArgument("mask_path".into()))
        );
    }

    #[test]
    fn drag_and_timestamp_from_pointer() {
        let (_d, mut s) = session();
        let img = image(&mut s, 10, "a.png");
        let m = mask(&mut s, &img, 1);
        s.state_mut().active_mask = Some(m.clone());
        s.state_mut().pending_drag = Some(PendingDragRecord { mask: m, displacement: PendingDrag { dx: 3, dy: -1 } });
        let r = resolve(BuiltinTool::Move, "move the masked object", &s, &NullLlm).unwrap();
        assert_eq!(r.args["drag"], "3,-1");

        s.state_mut().pointer_timestamp = Some(4.5);
        let d = BuiltinTool::Highlight.descriptor();
        let bound = BTreeMap::from([("video_path".to_string(), ArgSource::Artifact { id: "v".into() })]);
        let p = parse_instruction("cut this video to a TikTok video").unwrap();
        assert_eq!(resolve_arguments(&d, &p, s.state(), &NullLlm, &bound).unwrap().args["timestamp"], "4.5");
        let p = parse_instruction("cut this video at 6s").unwrap();
        assert_eq!(resolve_arguments(&d, &p, s.state(), &NullLlm, &bound).unwrap().args["timestamp"], "6");
    }

    #[test]
    fn dialogue_query_template_and_answer() {
        let (_d, mut s) = session();
        let a = image(&mut s, 10, "a.png");
        let old_mask = mask(&mut s, &a, 1);
        let _b = image(&mut s, 20, "b.png");
        let _new_mask = mask(&mut s, &a, 2);
        let d = BuiltinTool::Remove.descriptor();
        let query = argument_query(&d, &d.args.iter().collect::<Vec<_>>());
        assert_eq!(query, "What's the image_path and mask_path of the 'remove_masked_object' API?");
        let llm = ScriptedLlm::default().with(&query, &format!("image_path is a.png, mask_path is {old_mask}."));
        let r = resolve(BuiltinTool::Remove, "remove the masked object", &s, &llm).unwrap();
        assert_eq!(r.args["image_path"], a);
        assert_eq!(r.args["mask_path"], old_mask);
        assert!(matches!(r.sources["image_path"], ArgSource::Dialogue { .. }));
    }
}
