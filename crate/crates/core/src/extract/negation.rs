//! Trigger-lexicon negation with a token-window scope.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::text::{tokenize, Token};

/// Tokens that end a negation scope.
pub const SCOPE_BREAKERS: &[&str] = &["aber", "jedoch", "sondern"];

pub const DEFAULT_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationTrigger {
    pub trigger: String,
    pub direction: ScopeDirection,
    pub window: usize,
}

impl NegationTrigger {
    pub fn new(trigger: &str, direction: ScopeDirection, window: usize) -> Self {
        NegationTrigger {
            trigger: trigger.to_string(),
            direction,
            window,
        }
    }
}

/// German seed lexicon, including the rejected-procedure triggers.
pub fn default_triggers() -> Vec<NegationTrigger> {
    use ScopeDirection::*;
    [
        ("kein", Forward),
        ("keine", Forward),
        ("keinen", Forward),
        ("nicht", Forward),
        ("ohne", Forward),
        ("ausgeschlossen", Backward),
        ("Ausschluss von", Forward),
        ("verneint", Forward),
        ("negativ", Forward),
        ("abgelehnt", Backward),
        ("verweigert", Backward),
    ]
    .into_iter()
    .map(|(t, d)| NegationTrigger::new(t, d, DEFAULT_WINDOW))
    .collect()
}

/// Token range governed by a trigger.
///
/// Forward scope covers up to `window` tokens after `trigger_index`; backward
/// scope covers up to `window` tokens before it. Either stops at the sentence
/// boundary and before a scope-breaking conjunction.
pub fn negation_scope(
    tokens: &[Token],
    trigger_index: usize,
    direction: ScopeDirection,
    window: usize,
) -> Range<usize> {
    let sentence = tokens[trigger_index].sentence;
    let stops = |t: &Token| t.sentence != sentence || SCOPE_BREAKERS.contains(&t.text.as_str());
    match direction {
        ScopeDirection::Forward => {
            let start = trigger_index + 1;
            let mut end = start;
            while end < tokens.len() && end - start < window && !stops(&tokens[end]) {
                end += 1;
            }
            start..end
        }
        ScopeDirection::Backward => {
            let end = trigger_index;
            let mut start = end;
            while start > 0 && end - start < window && !stops(&tokens[start - 1]) {
                start -= 1;
            }
            start..end
        }
    }
}

/// One trigger occurrence in a token stream.
#[derive(Debug, Clone)]
pub(crate) struct TriggerHit {
    /// Token range of the trigger phrase itself.
    pub tokens: Range<usize>,
    pub scope: Range<usize>,
}

pub(crate) fn compile_triggers(triggers: &[NegationTrigger]) -> Vec<Vec<String>> {
    triggers
        .iter()
        .map(|t| tokenize(&t.trigger).into_iter().map(|t| t.text).collect())
        .collect()
}

pub(crate) fn find_triggers(
    tokens: &[Token],
    triggers: &[NegationTrigger],
    compiled: &[Vec<String>],
) -> Vec<TriggerHit> {
    let mut hits = Vec::new();
    for i in 0..tokens.len() {
        for (trig, seq) in triggers.iter().zip(compiled) {
            if seq.is_empty() || i + seq.len() > tokens.len() {
                continue;
            }
            let window = &tokens[i..i + seq.len()];
            let same_sentence = window.iter().all(|t| t.sentence == tokens[i].sentence);
            if !same_sentence || !window.iter().zip(seq).all(|(t, s)| &t.text == s) {
                continue;
            }
            let last = i + seq.len() - 1;
            let anchor = match trig.direction {
                ScopeDirection::Forward => last,
                ScopeDirection::Backward => i,
            };
            hits.push(TriggerHit {
                tokens: i..last + 1,
                scope: negation_scope(tokens, anchor, trig.direction, trig.window),
            });
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize_sentences;

    #[test]
    fn sentence_final_trigger_has_empty_forward_scope() {
        let toks = tokenize_sentences("Befund unauffällig, kein. Neuer Satz");
        let idx = toks.iter().position(|t| t.text == "kein").unwrap();
        assert!(negation_scope(&toks, idx, ScopeDirection::Forward, 6).is_empty());
    }

    #[test]
    fn conjunction_truncates() {
        let toks = tokenize_sentences("kein X aber Y");
        assert_eq!(negation_scope(&toks, 0, ScopeDirection::Forward, 6), 1..2);
    }

    #[test]
    fn zero_window_is_empty() {
        let toks = tokenize_sentences("kein Fieber");
        assert!(negation_scope(&toks, 0, ScopeDirection::Forward, 0).is_empty());
        assert!(negation_scope(&toks, 1, ScopeDirection::Backward, 0).is_empty());
    }

    #[test]
    fn backward_scope() {
        let toks = tokenize_sentences("Fieber. Metastasen sicher ausgeschlossen");
        let idx = toks.iter().position(|t| t.text == "ausgeschlossen").unwrap();
        assert_eq!(negation_scope(&toks, idx, ScopeDirection::Backward, 6), 1..3);
        assert_eq!(negation_scope(&toks, idx, ScopeDirection::Backward, 1), 2..3);
    }

    #[test]
    fn window_limits_forward() {
        let toks = tokenize_sentences("ohne a b c d e f g h");
        assert_eq!(negation_scope(&toks, 0, ScopeDirection::Forward, 6), 1..7);
    }

    #[test]
    fn multi_token_trigger() {
        let triggers = vec![NegationTrigger::new("Ausschluss von", ScopeDirection::Forward, 6)];
        let compiled = compile_triggers(&triggers);
        let toks = tokenize_sentences("Zum Ausschluss von Metastasen");
        let hits = find_triggers(&toks, &triggers, &compiled);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].tokens, 1..3);
        assert_eq!(hits[0].scope, 3..4);
    }
}
