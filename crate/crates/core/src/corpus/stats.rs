use serde::{Deserialize, Serialize};

use super::Conversation;
use crate::error::{Error, Result};

/// Population mean and standard deviation of utterances (turns) per
/// conversation and of whitespace words per utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusStats {
    pub mean_utterances: f64,
    pub sd_utterances: f64,
    pub mean_words_per_utterance: f64,
    pub sd_words: f64,
}

pub fn corpus_stats(conversations: &[Conversation]) -> Result<CorpusStats> {
    if conversations.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let utterances: Vec<f64> = conversations.iter().map(|c| c.turns.len() as f64).collect();
    let words: Vec<f64> = conversations
        .iter()
        .flat_map(|c| c.turns.iter())
        .map(|t| t.text.split_whitespace().count() as f64)
        .collect();
    let (mean_utterances, sd_utterances) = mean_sd(&utterances);
    let (mean_words_per_utterance, sd_words) = mean_sd(&words);
    Ok(CorpusStats {
        mean_utterances,
        sd_utterances,
        mean_words_per_utterance,
        sd_words,
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
