use super::ControllerError;
use crate::session::{Artifact, SessionState};
use crate::toolkit::builtin::{parse_drag, parse_timestamp};
use crate::toolkit::{strip_quotes, ArgKind, ArgMap, ArgSlot, ToolDescriptor};

pub const MAX_EDIT_DISTANCE: usize = 2;

/// Levenshtein distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let next = (diag + usize::from(ca != *cb)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

fn base_name(s: &str) -> &str {
    s.rsplit(['/', '\\']).next().unwrap_or(s)
}

/// Closest artifact by id or name within the distance bound; ties go to the
/// more recent artifact.
fn fuzzy_match<'a>(value: &str, candidates: &[&'a Artifact]) -> Option<&'a Artifact> {
    let value = base_name(value);
    candidates
        .iter()
        .filter_map(|a| {
            let d = a.handles().map(|h| edit_distance(value, base_name(h))).min()?;
            (d <= MAX_EDIT_DISTANCE).then_some((d, a.order, *a))
        })
        .min_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(&x.1)))
        .map(|(_, _, a)| a)
}

fn invalid(slot: &ArgSlot, reason: impl Into<String>) -> ControllerError {
    ControllerError::InvalidArgument { arg: slot.name.clone(), reason: reason.into() }
}

/// Checks one value and returns its corrected form: the canonical artifact id
/// for artifact slots, the trimmed literal otherwise.
pub fn validate_value(slot: &ArgSlot, raw: &str, state: &SessionState) -> Result<String, ControllerError> {
    let value = strip_quotes(raw);
    let Some(kind) = slot.kind.artifact_kind() else {
        return match slot.kind {
            ArgKind::Timestamp => parse_timestamp(value).map(|_| value.to_string()).map_err(|e| invalid(slot, e.to_string())),
            ArgKind::Drag => parse_drag(value).map(|_| value.to_string()).map_err(|e| invalid(slot, e.to_string())),
            _ if value.is_empty() => Err(invalid(slot, "empty")),
            _ => Ok(value.to_string()),
        };
    };
    if let Some(a) = state.lookup(value).filter(|a| a.kind == kind) {
        return Ok(a.id.clone());
    }
    let candidates = state.of_kind(kind);
    if let Some(a) = fuzzy_match(value, &candidates) {
        return Ok(a.id.clone());
    }
    if let [only] = candidates.as_slice() {
        return Ok(only.id.clone());
    }
    Err(invalid(
        slot,
        if candidates.is_empty() {
            format!("`{value}` is not a {kind} and the session holds none")
        } else {
            format!("`{value}` matches none of {} {kind} artifacts", candidates.len())
        },
    ))
}

pub fn validate_and_correct(tool: &ToolDescriptor, args: &ArgMap, state: &SessionState) -> Result<ArgMap, ControllerError> {
    let mut out = ArgMap::new();
    for slot in &tool.args {
        let raw = args
            .get(&slot.name)
            .ok_or_else(|| ControllerError::MissingArgument(slot.name.clone()))?;
        out.insert(slot.name.clone(), validate_value(slot, raw, state)?);
    }
    Ok(out)
}
