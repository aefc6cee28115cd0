use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Conversation, ResponseId, Speaker};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessedResponse {
    pub normalized_text: String,
    /// Raw turn texts that normalize to `normalized_text`. Not persisted in
    /// the TSV form, so empty after [`read_responses_tsv`].
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub source_texts: BTreeSet<String>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: ResponseId,
    pub response: PreprocessedResponse,
}

impl ResponseRecord {
    pub fn text(&self) -> &str {
        &self.response.normalized_text
    }

    pub fn count(&self) -> u64 {
        self.response.count
    }
}

/// Count doctor turns by normalized text and keep those seen at least twice.
///
/// Ids follow descending count, ties broken by the text itself. Turns that
/// normalize to the empty string are never responses.
pub fn build_frequent_set<'a, I>(conversations: I) -> Vec<ResponseRecord>
where
    I: IntoIterator<Item = &'a Conversation>,
{
    let mut counts: HashMap<&str, (u64, BTreeSet<&str>)> = HashMap::new();
    for conv in conversations {
        for turn in conv.turns.iter().filter(|t| t.speaker == Speaker::Doctor) {
            if turn.normalized.is_empty() {
                continue;
            }
            let entry = counts.entry(turn.normalized.as_str()).or_default();
            entry.0 += 1;
            entry.1.insert(turn.text.as_str());
        }
    }
    let mut frequent: Vec<(&str, u64, BTreeSet<&str>)> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c >= 2)
        .map(|(text, (c, src))| (text, c, src))
        .collect();
    frequent.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    frequent
        .into_iter()
        .enumerate()
        .map(|(i, (text, count, src))| ResponseRecord {
            id: i as ResponseId,
            response: PreprocessedResponse {
                normalized_text: text.to_string(),
                source_texts: src.into_iter().map(str::to_string).collect(),
                count,
            },
        })
        .collect()
}

/// Lookup from normalized text to response id.
#[derive(Debug, Clone, Default)]
pub struct ResponseIndex {
    by_text: HashMap<String, ResponseId>,
}

impl ResponseIndex {
    pub fn new(records: &[ResponseRecord]) -> Self {
        Self {
            by_text: records
                .iter()
                .map(|r| (r.response.normalized_text.clone(), r.id))
                .collect(),
        }
    }

    pub fn get(&self, normalized: &str) -> Option<ResponseId> {
        self.by_text.get(normalized).copied()
    }
}

pub fn write_responses_tsv<W: Write>(mut w: W, records: &[ResponseRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}\t{}\t{}", r.id, r.response.count, r.response.normalized_text)?;
    }
    Ok(())
}

/// Parse `responseId<TAB>count<TAB>normalizedText` rows. Ids must be dense
/// and in order.
pub fn read_responses_tsv<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<ResponseRecord>> {
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(count), Some(text)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::parse(source_name, lineno, "expected 3 tab-separated columns"));
        };
        let id: ResponseId = id
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad response id {id:?}")))?;
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad count {count:?}")))?;
        if id as usize != out.len() {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("response ids must be dense; expected {}, got {id}", out.len()),
            ));
        }
        if let Some(prev) = seen.insert(text.to_string(), id) {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("duplicate text already used by response {prev}"),
            ));
        }
        out.push(ResponseRecord {
            id,
            response: PreprocessedResponse {
                normalized_text: text.to_string(),
                source_texts: BTreeSet::new(),
                count,
            },
        });
    }
    Ok(out)
}
