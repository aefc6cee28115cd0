use serde::{Deserialize, Serialize};

use super::{Conversation, Turn};
use crate::error::{Error, Result};

pub const PATIENT_START: &str = "<p_start>";
pub const DOCTOR_START: &str = "<d_start>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextConfig {
    pub max_turns: usize,
    pub max_tokens: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            max_turns: 6,
            max_tokens: 304,
        }
    }
}

/// Context preceding turn `upto_turn`: the previous `max_turns` turns, each
/// prefixed with its speaker marker, truncated to the last `max_tokens`
/// tokens.
pub fn assemble_context(
    conversation: &Conversation,
    upto_turn: usize,
    config: ContextConfig,
) -> Result<Vec<String>> {
    if upto_turn >= conversation.turns.len() {
        return Err(Error::validation(format!(
            "turn {upto_turn} out of range for conversation {} with {} turns",
            conversation.id,
            conversation.turns.len()
        )));
    }
    assemble_tokens(&conversation.turns[..upto_turn], config)
}

/// Context built from the tail of `history` (all of it is "before" the
/// response being predicted).
pub fn assemble_tokens(history: &[Turn], config: ContextConfig) -> Result<Vec<String>> {
    if config.max_turns == 0 || config.max_tokens == 0 {
        return Err(Error::validation("max_turns and max_tokens must be at least 1"));
    }
    let first = history.len().saturating_sub(config.max_turns);
    let mut tokens = Vec::new();
    for turn in &history[first..] {
        tokens.push(turn.speaker.marker().to_string());
        tokens.extend(turn.normalized.split_whitespace().map(str::to_string));
    }
    if tokens.len() > config.max_tokens {
        tokens.drain(..tokens.len() - config.max_tokens);
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Speaker;
    use proptest::prelude::*;

    fn conversation(turn_texts: &[&str]) -> Conversation {
        Conversation {
            id: "t".into(),
            turns: turn_texts
                .iter()
                .enumerate()
                .map(|(i, t)| Turn {
                    speaker: if i % 2 == 0 { Speaker::Patient } else { Speaker::Doctor },
                    index: i,
                    text: (*t).into(),
                    normalized: (*t).into(),
                })
                .collect(),
        }
    }

    #[test]
    fn single_short_turn() {
        let c = conversation(&["my head", "how long"]);
        let ctx = assemble_context(&c, 1, ContextConfig::default()).unwrap();
        assert_eq!(ctx, ["<p_start>", "my", "head"]);
    }

    #[test]
    fn turn_window() {
        let c = conversation(&["a", "b", "c", "d", "e"]);
        let cfg = ContextConfig {
            max_turns: 2,
            max_tokens: 304,
        };
        let ctx = assemble_context(&c, 4, cfg).unwrap();
        assert_eq!(ctx, ["<p_start>", "c", "<d_start>", "d"]);
    }

    #[test]
    fn long_history_keeps_suffix() {
        // 400 tokens of history: two turns of 199 words plus two markers.
        let p: Vec<String> = (0..199).map(|i| format!("p{i}")).collect();
        let d: Vec<String> = (0..199).map(|i| format!("d{i}")).collect();
        let (pj, dj) = (p.join(" "), d.join(" "));
        let c = conversation(&[&pj, &dj, "next"]);
        let mut full = vec!["<p_start>".to_string()];
        full.extend(p.iter().cloned());
        full.push("<d_start>".into());
        full.extend(d.iter().cloned());
        assert_eq!(full.len(), 400);
        let ctx = assemble_context(&c, 2, ContextConfig::default()).unwrap();
        assert_eq!(ctx.len(), 304);
        assert_eq!(ctx[..], full[96..]);
    }

    #[test]
    fn rejects_preconditions() {
        let c = conversation(&["a"]);
        assert!(assemble_context(&c, 1, ContextConfig::default()).is_err());
        let bad = ContextConfig {
            max_turns: 0,
            max_tokens: 5,
        };
        assert!(assemble_context(&c, 0, bad).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_suffix_aligned(
            lens in prop::collection::vec(0usize..12, 1..10),
            max_turns in 1usize..8,
            max_tokens in 1usize..40,
        ) {
            let texts: Vec<String> = lens
                .iter()
                .enumerate()
                .map(|(t, &n)| (0..n).map(|i| format!("w{t}_{i}")).collect::<Vec<_>>().join(" "))
                .collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let mut all = refs.clone();
            all.push("reply");
            let c = conversation(&all);
            let upto = refs.len();
            let cfg = ContextConfig { max_turns, max_tokens };
            let ctx = assemble_context(&c, upto, cfg).unwrap();
            prop_assert!(ctx.len() <= max_tokens);
            let last = &c.turns[upto - 1];
            let mut tail = vec![last.speaker.marker().to_string()];
            tail.extend(last.normalized.split_whitespace().map(str::to_string));
            let k = tail.len().min(ctx.len());
            prop_assert_eq!(&ctx[ctx.len() - k..], &tail[tail.len() - k..]);
        }
    }
}
