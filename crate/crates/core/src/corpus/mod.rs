//! Conversation ingestion, utterance normalization, the frequent-response
//! set and classifier context assembly.

mod context;
mod frequent;
mod preprocess;
mod stats;

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use context::{assemble_context, assemble_tokens, ContextConfig, DOCTOR_START, PATIENT_START};
pub use frequent::{
    build_frequent_set, read_responses_tsv, write_responses_tsv, PreprocessedResponse,
    ResponseIndex, ResponseRecord,
};
pub use preprocess::{
    is_punctuation, preprocess, tokenize, IdentityKind, IdentitySpan, DOCTOR_NAME, PATIENT_NAME,
};
pub use stats::{corpus_stats, CorpusStats};

/// Dense id of a frequent response.
pub type ResponseId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Patient,
    Doctor,
}

impl Speaker {
    pub fn marker(self) -> &'static str {
        match self {
            Speaker::Patient => PATIENT_START,
            Speaker::Doctor => DOCTOR_START,
        }
    }
}

/// All messages sent consecutively by one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub index: usize,
    /// Raw message texts joined by a single space.
    pub text: String,
    pub normalized: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
}

/// One line of the corpus file, before turn merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawConversation {
    pub id: String,
    pub messages: Vec<RawMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMessage {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pii: Vec<IdentitySpan>,
}

impl Conversation {
    /// Normalize every message and merge consecutive same-speaker messages
    /// into single turns. Whitespace-only messages are dropped.
    pub fn from_raw(raw: &RawConversation) -> Result<Self> {
        let mut turns: Vec<Turn> = Vec::new();
        for msg in &raw.messages {
            let trimmed = msg.text.trim();
            if trimmed.is_empty() {
                continue;
            }
            let normalized = preprocess(&msg.text, &msg.pii)
                .map_err(|e| Error::validation(format!("conversation {}: {e}", raw.id)))?;
            match turns.last_mut() {
                Some(last) if last.speaker == msg.speaker => {
                    last.text.push(' ');
                    last.text.push_str(trimmed);
                    if !normalized.is_empty() {
                        if !last.normalized.is_empty() {
                            last.normalized.push(' ');
                        }
                        last.normalized.push_str(&normalized);
                    }
                }
                _ => turns.push(Turn {
                    speaker: msg.speaker,
                    index: turns.len(),
                    text: trimmed.to_string(),
                    normalized,
                }),
            }
        }
        if turns.is_empty() {
            return Err(Error::validation(format!(
                "conversation {} has no non-empty messages",
                raw.id
            )));
        }
        Ok(Conversation {
            id: raw.id.clone(),
            turns,
        })
    }

    pub fn doctor_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Doctor)
    }
}

/// Read a newline-delimited JSON corpus. Blank lines are ignored; errors
/// carry the 1-based line number.
pub fn read_corpus<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawConversation = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        let conv = Conversation::from_raw(&raw)
            .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        out.push(conv);
    }
    Ok(out)
}

pub fn load_corpus(path: &std::path::Path) -> Result<Vec<Conversation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(std::io::BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(speaker: Speaker, text: &str) -> RawMessage {
        RawMessage {
            speaker,
            text: text.into(),
            pii: vec![],
        }
    }

    #[test]
    fn merges_consecutive_messages() {
        let raw = RawConversation {
            id: "c1".into(),
            messages: vec![
                msg(Speaker::Patient, "Hi doc."),
                msg(Speaker::Patient, "I have a COUGH!"),
                msg(Speaker::Doctor, "   "),
                msg(Speaker::Doctor, "How long?"),
                msg(Speaker::Patient, "3 days"),
            ],
        };
        let conv = Conversation::from_raw(&raw).unwrap();
        assert_eq!(conv.turns.len(), 3);
        assert_eq!(conv.turns[0].text, "Hi doc. I have a COUGH!");
        assert_eq!(conv.turns[0].normalized, "hi doc i have a cough");
        assert_eq!(conv.turns[1].speaker, Speaker::Doctor);
        assert_eq!(conv.turns[1].normalized, "how long");
        assert_eq!(conv.turns.iter().map(|t| t.index).collect::<Vec<_>>(), [0, 1, 2]);
        for w in conv.turns.windows(2) {
            assert_ne!(w[0].speaker, w[1].speaker);
        }
    }

    #[test]
    fn rejects_empty_conversation() {
        let raw = RawConversation {
            id: "x".into(),
            messages: vec![msg(Speaker::Doctor, " ")],
        };
        assert!(Conversation::from_raw(&raw).is_err());
    }

    #[test]
    fn reads_jsonl_with_pii() {
        let data = concat!(
            r#"{"id":"a","messages":[{"speaker":"patient","text":"I'm Ann"},"#,
            r#"{"speaker":"doctor","text":"Thanks, Ann!","pii":[[8,11,"patient"]]}]}"#,
            "\n\n",
            r#"{"id":"b","messages":[{"speaker":"doctor","text":"Hello"}]}"#,
            "\n"
        );
        let convs = read_corpus(data.as_bytes(), "mem").unwrap();
        assert_eq!(convs.len(), 2);
        assert_eq!(convs[0].turns[1].normalized, "thanks <patient_name>");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let data = "{\"id\":\"a\",\"messages\":[{\"speaker\":\"doctor\",\"text\":\"ok\"}]}\nnot json\n";
        match read_corpus(data.as_bytes(), "corpus.jsonl") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
