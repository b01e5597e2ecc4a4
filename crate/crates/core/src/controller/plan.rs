use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::parse::{parse_with, Lexicon};
use super::select::{select_tool, Selection};
use super::validate::validate_value;
use super::ControllerError;
use crate::session::SessionState;
use crate::toolkit::{ArgKind, Registry};

/// Session pointer state an argument can be read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerSlot {
    ActiveMask,
    PendingDrag,
    OpenDraft,
    /// Frame time of the last click on a video.
    Timestamp,
    /// Source image of the active mask.
    MaskSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ArgSource {
    Literal { value: String },
    Artifact { id: String },
    OutputOf { step: usize, slot: usize },
    PointerState { slot: PointerSlot },
    /// Named by the language model's answer to the argument query.
    Dialogue { id: String },
    /// Most recent artifact of the required kind.
    Recent { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tool: String,
    /// The clause this step was selected from.
    pub clause: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, ArgSource>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub steps: Vec<PlanStep>,
}

impl TaskPlan {
    /// Every `OutputOf` must point at a strictly earlier step.
    pub fn check(&self) -> Result<(), String> {
        for (k, step) in self.steps.iter().enumerate() {
            for (arg, src) in &step.bindings {
                if let ArgSource::OutputOf { step: j, .. } = src {
                    if *j >= k {
                        return Err(format!("step {k} `{arg}` reads step {j}, which is not earlier"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn tools(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.tool.clone()).collect()
    }
}

/// Splits on `;`, `then` and `and then` outside double quotes.
pub fn split_clauses(utterance: &str) -> Vec<String> {
    let mut clauses = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut in_quote = false;
    let flush = |cur: &mut Vec<String>, clauses: &mut Vec<String>| {
        if cur.last().is_some_and(|w| w.eq_ignore_ascii_case("and")) {
            cur.pop();
        }
        let c = cur.join(" ");
        let c = c.trim().trim_end_matches(',').trim();
        if !c.is_empty() {
            clauses.push(c.to_string());
        }
        cur.clear();
    };
    for word in utterance.split_whitespace() {
        if !in_quote && word.trim_end_matches(',').eq_ignore_ascii_case("then") {
            flush(&mut cur, &mut clauses);
            continue;
        }
        let mut piece = String::new();
        for c in word.chars() {
            match c {
                '"' => in_quote = !in_quote,
                '\u{201c}' => in_quote = true,
                '\u{201d}' => in_quote = false,
                _ => {}
            }
            if c == ';' && !in_quote {
                if !piece.is_empty() {
                    cur.push(std::mem::take(&mut piece));
                }
                flush(&mut cur, &mut clauses);
            } else {
                piece.push(c);
            }
        }
        if !piece.is_empty() {
            cur.push(piece);
        }
    }
    flush(&mut cur, &mut clauses);
    clauses
}

/// Rule planner: one step per clause, chaining image and video arguments to
/// the previous step's output when the kinds line up.
pub fn plan(utterance: &str, registry: &Registry, lexicon: &Lexicon, theta: u32) -> Result<TaskPlan, ControllerError> {
    let clauses = split_clauses(utterance);
    if clauses.is_empty() {
        return Err(ControllerError::EmptyUtterance);
    }
    let mut steps: Vec<PlanStep> = Vec::with_capacity(clauses.len());
    for clause in clauses {
        let parsed = parse_with(&clause, lexicon)?;
        let name = match select_tool(&parsed, registry, lexicon, theta) {
            Selection::Tool { name, .. } => name,
            Selection::Clarify { question } => return Err(ControllerError::ClarifyNeeded { clause, question }),
        };
        let d = registry.lookup(&name).expect("selected from registry");
        let mut bindings = BTreeMap::new();
        if let Some(prev) = steps.last() {
            let prev_kind = registry.lookup(&prev.tool).expect("planned tool").output_kind.artifact_kind();
            for slot in &d.args {
                if matches!(slot.kind, ArgKind::ImagePath | ArgKind::VideoPath) && slot.kind.artifact_kind() == Some(prev_kind) {
                    bindings.insert(slot.name.clone(), ArgSource::OutputOf { step: steps.len() - 1, slot: 0 });
                }
            }
        }
        steps.push(PlanStep { tool: name, clause, bindings });
    }
    Ok(TaskPlan { steps })
}

/// Prompt asking a language model for a plan in call syntax.
pub fn plan_prompt(utterance: &str, registry: &Registry) -> String {
    let mut p = String::from(
        "Plan the request below as tool calls, one per line, written name(arg1, arg2, ...). \
         Write $k for the output of call k (counting from 1). Tools:\n",
    );
    for d in registry.list() {
        let args: Vec<_> = d.args.iter().map(|a| a.name.as_str()).collect();
        p.push_str(&format!("{}({}): {}\n", d.name, args.join(", "), d.description));
    }
    p.push_str(&format!("Request: {utterance}"));
    p
}

/// Parses a model's plan. Accepts it only when every call names a known tool,
/// has the right arity, and every argument validates against the session.
pub fn parse_llm_plan(
    completion: &str,
    utterance: &str,
    registry: &Registry,
    state: &SessionState,
) -> Option<TaskPlan> {
    let mut steps: Vec<PlanStep> = Vec::new();
    for line in completion.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let line = line.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')' || c == '-').trim();
        let (name, rest) = line.split_once('(')?;
        let inner = rest.trim_end().strip_suffix(')')?;
        let d = registry.lookup(name.trim())?;
        let args = d.parse_input(inner).ok()?;
        let mut bindings = BTreeMap::new();
        for slot in &d.args {
            let value = &args[&slot.name];
            let src = match value.strip_prefix('$').and_then(|k| k.parse::<usize>().ok()) {
                Some(k) => {
                    let j = k.checked_sub(1)?;
                    let prev = steps.get(j)?;
                    let out = registry.lookup(&prev.tool)?.output_kind.artifact_kind();
                    if slot.kind.artifact_kind() != Some(out) {
                        return None;
                    }
                    ArgSource::OutputOf { step: j, slot: 0 }
                }
                None => match slot.kind.artifact_kind() {
                    Some(_) => ArgSource::Artifact { id: validate_value(slot, value, state).ok()? },
                    None => ArgSource::Literal { value: validate_value(slot, value, state).ok()? },
                },
            };
            bindings.insert(slot.name.clone(), src);
        }
        steps.push(PlanStep { tool: d.name.clone(), clause: utterance.to_string(), bindings });
    }
    (!steps.is_empty()).then_some(TaskPlan { steps })
}
