//! Language side of a turn: parse, plan, resolve arguments, validate and run.
//!
//! The rule pipeline is the planner of record. A configured language model is
//! asked for a plan first; its plan is used only when every call validates.

pub mod execute;
pub mod llm;
pub mod parse;
pub mod plan;
pub mod resolve;
pub mod select;
pub mod validate;

use thiserror::Error;

use crate::session::SessionState;
use crate::toolkit::{Registry, ToolError};

pub use execute::{dispatch, execute, ExecutionReport, Executor, SessionContext, StepFailure, StepOutcome};
pub use llm::{backend_from_spec, HttpLlm, LlmBackend, NullLlm, ScriptedLlm};
pub use parse::{parse_instruction, parse_with, Lexicon, ParsedInstruction};
pub use plan::{parse_llm_plan, plan, plan_prompt, split_clauses, ArgSource, PlanStep, PointerSlot, TaskPlan};
pub use resolve::{argument_query, resolve_arguments, Resolved};
pub use select::{score, select_tool, Selection};
pub use validate::{edit_distance, validate_and_correct, validate_value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("could not choose a tool for \"{clause}\"")]
    ClarifyNeeded { clause: String, question: String },
    #[error("missing argument `{0}`")]
    MissingArgument(String),
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: String, reason: String },
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error(transparent)]
    Tool(ToolError),
    #[error("session: {0}")]
    Session(String),
}

/// Asks the model for a plan and keeps it only if it validates; otherwise
/// falls back to the rule planner.
pub fn plan_turn(
    utterance: &str,
    registry: &Registry,
    state: &SessionState,
    llm: &dyn LlmBackend,
    lexicon: &Lexicon,
    theta: u32,
) -> Result<TaskPlan, ControllerError> {
    if !llm.is_null() {
        let completion = llm.complete(&plan_prompt(utterance, registry), &state.history_as_dialogue());
        if let Some(p) = parse_llm_plan(&completion, utterance, registry, state) {
            return Ok(p);
        }
    }
    plan(utterance, registry, lexicon, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::Session;
    use image::{Rgb, RgbImage};

    #[test]
    fn llm_plan_used_only_when_valid() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::create(dir.path().join("s"), "s").unwrap();
        let img = s.put_image(&RgbImage::from_pixel(3, 3, Rgb([0, 0, 0])), "upload", Some("image_003.png".into())).unwrap();
        let reg = Registry::builtin(2.0);
        let lex = Lexicon::default();
        let u = "caption it";
        let prompt = plan_prompt(u, &reg);

        let good = ScriptedLlm::default().with(&prompt, "1. caption(image_03.png)");
        let p = plan_turn(u, &reg, s.state(), &good, &lex, 3).unwrap();
        assert_eq!(p.tools(), ["caption"]);
        assert_eq!(p.steps[0].bindings["image_path"], ArgSource::Artifact { id: img });

        // unknown tool: the rule pipeline takes over
        let bad = ScriptedLlm::default().with(&prompt, "paint_it_black(image_003.png)");
        let p = plan_turn(u, &reg, s.state(), &bad, &lex, 3).unwrap();
        assert_eq!(p.tools(), ["caption"]);
        assert!(p.steps[0].bindings.is_empty());

        // a mask that does not exist fails validation
        let bad = ScriptedLlm::default().with(&prompt, "remove_masked_object(image_003.png, mask_9.png)");
        let p = plan_turn(u, &reg, s.state(), &bad, &lex, 3).unwrap();
        assert_eq!(p.tools(), ["caption"]);

        let chained = ScriptedLlm::default().with(&prompt, "caption(image_003.png)\nreplace_masked_object($1, x, y)");
        assert!(plan_turn(u, &reg, s.state(), &chained, &lex, 3).unwrap().steps[0].bindings.is_empty());
    }
}
