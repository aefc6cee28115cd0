use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

pub const PATIENT_NAME: &str = "<patient_name>";
pub const DOCTOR_NAME: &str = "<doctor_name>";

/// Whose identifying information a span covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityKind {
    Patient,
    Doctor,
}

impl IdentityKind {
    pub fn placeholder(self) -> &'static str {
        match self {
            IdentityKind::Patient => PATIENT_NAME,
            IdentityKind::Doctor => DOCTOR_NAME,
        }
    }
}

/// A half-open `[start, end)` range of identifying text, in Unicode scalar
/// values (chars) of the raw message. Serialized as `[start, end, kind]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, IdentityKind)", into = "(usize, usize, IdentityKind)")]
pub struct IdentitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: IdentityKind,
}

impl IdentitySpan {
    pub fn new(start: usize, end: usize, kind: IdentityKind) -> Self {
        Self { start, end, kind }
    }
}

impl From<(usize, usize, IdentityKind)> for IdentitySpan {
    fn from((start, end, kind): (usize, usize, IdentityKind)) -> Self {
        Self { start, end, kind }
    }
}

impl From<IdentitySpan> for (usize, usize, IdentityKind) {
    fn from(s: IdentitySpan) -> Self {
        (s.start, s.end, s.kind)
    }
}

pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Normalize one utterance: replace identity spans with placeholder tokens,
/// lowercase, strip Unicode punctuation (P*), collapse whitespace.
///
/// Placeholder tokens already present in the input survive untouched, so the
/// function is idempotent on its own output.
pub fn preprocess(raw: &str, spans: &[IdentitySpan]) -> Result<String> {
    let chars: Vec<char> = raw.chars().collect();
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut prev_end = 0usize;
    for (i, span) in sorted.iter().enumerate() {
        if span.start >= span.end || span.end > chars.len() {
            return Err(Error::validation(format!(
                "identity span [{}, {}) out of bounds for text of {} chars",
                span.start,
                span.end,
                chars.len()
            )));
        }
        if i > 0 && span.start < prev_end {
            return Err(Error::validation(format!(
                "identity span [{}, {}) overlaps the previous span",
                span.start, span.end
            )));
        }
        prev_end = span.end;
    }

    let mut out = String::with_capacity(raw.len());
    let mut pos = 0usize;
    for span in &sorted {
        normalize_segment(&chars[pos..span.start], &mut out);
        out.push(' ');
        out.push_str(span.kind.placeholder());
        out.push(' ');
        pos = span.end;
    }
    normalize_segment(&chars[pos..], &mut out);

    Ok(out.split_whitespace().collect::<Vec<_>>().join(" "))
}

fn normalize_segment(segment: &[char], out: &mut String) {
    let lowered: Vec<char> = segment.iter().flat_map(|c| c.to_lowercase()).collect();
    let mut i = 0;
    while i < lowered.len() {
        if let Some(tok) = placeholder_at(&lowered[i..]) {
            out.push(' ');
            out.push_str(tok);
            out.push(' ');
            i += tok.chars().count();
            continue;
        }
        let c = lowered[i];
        if !is_punctuation(c) {
            out.push(c);
        }
        i += 1;
    }
}

fn placeholder_at(rest: &[char]) -> Option<&'static str> {
    [PATIENT_NAME, DOCTOR_NAME].into_iter().find(|tok| {
        let n = tok.len();
        rest.len() >= n && tok.chars().zip(rest).all(|(a, &b)| a == b)
    })
}

/// Whitespace tokenization of preprocessed text.
pub fn tokenize(normalized: &str) -> impl Iterator<Item = &str> {
    normalized.split_whitespace()
}
