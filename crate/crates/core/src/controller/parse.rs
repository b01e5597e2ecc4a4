use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ControllerError;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "it", "its", "is", "are", "be", "was", "to", "of", "in",
    "on", "at", "for", "with", "by", "from", "and", "or", "as", "what", "which", "how", "please", "me", "my", "i",
    "you", "your", "can", "could", "would", "should", "will", "do", "does", "there", "here", "into", "then", "so",
    "some", "just", "now", "s", "like", "about", "up", "out", "we", "our", "us",
];

const ACTIONS: &[&str] = &[
    "remove", "erase", "delete", "caption", "describe", "replace", "swap", "cut", "trim", "generate", "create",
    "draw", "paint", "read", "extract", "move", "drag", "make", "highlight", "answer", "tell", "show", "fill",
    "clip", "question", "ask",
];

/// Stopwords and action words used to split an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub stopwords: BTreeSet<String>,
    pub actions: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self {
            stopwords: STOPWORDS.iter().map(|s| s.to_string()).collect(),
            actions: ACTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Lexicon {
    /// Lowercase alphanumeric runs with stopwords removed.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedInstruction {
    pub raw_text: String,
    pub content_tokens: Vec<String>,
    pub action_tokens: Vec<String>,
    pub object_tokens: Vec<String>,
    pub quoted_spans: Vec<String>,
}

impl ParsedInstruction {
    /// Whitespace-separated words of the raw text with surrounding
    /// punctuation trimmed, case preserved. Used to spot artifact names.
    pub fn raw_words(&self) -> Vec<&str> {
        self.raw_text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !(c.is_alphanumeric() || "._-/".contains(c))))
            .map(|w| w.trim_end_matches('.'))
            .filter(|w| !w.is_empty())
            .collect()
    }
}

fn is_quote(c: char) -> Option<char> {
    match c {
        '"' => Some('"'),
        '\u{201c}' => Some('\u{201d}'),
        _ => None,
    }
}

/// Splits out double-quoted spans. Returns the text outside quotes and the
/// spans in order. An unterminated quote runs to the end of the text.
pub fn extract_quoted(text: &str) -> (String, Vec<String>) {
    let mut outside = String::new();
    let mut spans = Vec::new();
    let mut cur: Option<(char, String)> = None;
    for c in text.chars() {
        match cur.as_mut() {
            Some((close, span)) => {
                if c == *close {
                    spans.push(std::mem::take(span));
                    cur = None;
                    outside.push(' ');
                } else {
                    span.push(c);
                }
            }
            None => match is_quote(c) {
                Some(close) => cur = Some((close, String::new())),
                None => outside.push(c),
            },
        }
    }
    if let Some((_, span)) = cur {
        spans.push(span);
    }
    (outside, spans)
}

pub fn parse_instruction(utterance: &str) -> Result<ParsedInstruction, ControllerError> {
    parse_with(utterance, &Lexicon::default())
}

pub fn parse_with(utterance: &str, lexicon: &Lexicon) -> Result<ParsedInstruction, ControllerError> {
    let raw = utterance.trim();
    if raw.is_empty() {
        return Err(ControllerError::EmptyUtterance);
    }
    let (outside, quoted_spans) = extract_quoted(raw);
    let content_tokens = lexicon.tokenize(&outside);
    let (action_tokens, object_tokens) = content_tokens
        .iter()
        .cloned()
        .partition(|t| lexicon.actions.contains(t));
    Ok(ParsedInstruction {
        raw_text: raw.to_string(),
        content_tokens,
        action_tokens,
        object_tokens,
        quoted_spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn verbs_and_nouns() {
        let p = parse_instruction("remove the masked object").unwrap();
        assert_eq!(p.action_tokens, ["remove"]);
        assert_eq!(p.object_tokens, ["masked", "object"]);

        let p = parse_instruction("caption this photo").unwrap();
        assert_eq!(p.action_tokens, ["caption"]);
        assert_eq!(p.object_tokens, ["photo"]);
    }

    #[test]
    fn quoted_spans_are_verbatim() {
        let p = parse_instruction("Replace it with \"a red vase\"").unwrap();
        assert_eq!(p.quoted_spans, ["a red vase"]);
        assert_eq!(p.action_tokens, ["replace"]);
        assert!(!p.content_tokens.contains(&"vase".to_string()));

        let p = parse_instruction("title it \u{201c}Sunset, Again\u{201d} please").unwrap();
        assert_eq!(p.quoted_spans, ["Sunset, Again"]);
    }

    #[test]
    fn empty_is_rejected() {
        assert_eq!(parse_instruction("   "), Err(ControllerError::EmptyUtterance));
    }

    #[test]
    fn raw_words_keep_file_names() {
        let p = parse_instruction("remove the dog in image_03.png.").unwrap();
        assert!(p.raw_words().contains(&"image_03.png"));
    }

    proptest! {
        #[test]
        fn partition_covers_content(s in "[a-zA-Z \"',.;!?]{1,60}") {
            if let Ok(p) = parse_instruction(&s) {
                let mut joined: Vec<_> = p.action_tokens.iter().chain(&p.object_tokens).cloned().collect();
                let mut content = p.content_tokens.clone();
                joined.sort();
                content.sort();
                prop_assert_eq!(joined, content);
                let lex = Lexicon::default();
                prop_assert!(p.action_tokens.iter().all(|t| lex.actions.contains(t)));
                prop_assert!(p.object_tokens.iter().all(|t| !lex.actions.contains(t)));
            }
        }

        #[test]
        fn quoted_text_never_tokenized(word in "[a-z]{3,8}") {
            let p = parse_instruction(&format!("caption \"zq{word}\"")).unwrap();
            let quoted = format!("zq{}", word);
            prop_assert!(!p.content_tokens.contains(&quoted));
            prop_assert_eq!(p.quoted_spans, vec![quoted]);
        }
    }
}
