use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ContextNote;
use crate::embedding::tokenize;
use crate::providers::{ChatMessage, ChatProvider, ChatRequest};

/// Hits whose relevance falls below this are dropped.
pub const RELEVANCE_THRESHOLD: f64 = 0.05;
/// A later hit moves ahead of an earlier one only when its relevance is
/// higher by more than this.
pub const BLEND_MARGIN: f64 = 0.2;

/// Share of the question's distinct tokens that also occur in `text`.
pub fn token_overlap(question: &str, text: &str) -> f64 {
    let q: BTreeSet<String> = tokenize(question).into_iter().collect();
    if q.is_empty() {
        return 0.0;
    }
    let t: BTreeSet<String> = tokenize(text).into_iter().collect();
    q.intersection(&t).count() as f64 / q.len() as f64
}

/// Drops low-relevance notes and applies the blend rule to the rest.
///
/// `relevance[i]` belongs to `notes[i]`, which arrive in semantic order.
pub fn apply_relevance(notes: Vec<ContextNote>, relevance: &[f64]) -> Vec<ContextNote> {
    let mut kept: Vec<ContextNote> = notes
        .into_iter()
        .zip(relevance)
        .filter(|(_, r)| **r >= RELEVANCE_THRESHOLD)
        .map(|(mut n, r)| {
            n.relevance = Some(*r);
            n
        })
        .collect();
    let rel = |n: &ContextNote| n.relevance.unwrap_or(0.0);
    let mut swapped = true;
    while swapped {
        swapped = false;
        for i in 1..kept.len() {
            if rel(&kept[i]) > rel(&kept[i - 1]) + BLEND_MARGIN {
                kept.swap(i - 1, i);
                swapped = true;
            }
        }
    }
    kept
}

pub fn rerank_overlap(question: &str, notes: Vec<ContextNote>) -> Vec<ContextNote> {
    let relevance: Vec<f64> = notes.iter().map(|n| token_overlap(question, &n.text)).collect();
    apply_relevance(notes, &relevance)
}

pub fn rerank_prompt(question: &str, notes: &[ContextNote]) -> String {
    let mut p = format!("TASK: rerank\nQuestion: {question}\nCandidates:\n");
    for (i, n) in notes.iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, n.text));
    }
    p.push_str("Reply with one line per candidate in the form `<number>: <relevance between 0 and 1>`.");
    p
}

/// Relevance per candidate from lines like `2: 0.75`; `None` unless every
/// candidate received a score in `[0, 1]`.
pub fn parse_rerank_reply(reply: &str, count: usize) -> Option<Vec<f64>> {
    let mut scores: Vec<Option<f64>> = vec![None; count];
    for line in reply.lines() {
        let Some((n, s)) = line.split_once(':') else { continue };
        let (Ok(n), Ok(s)) = (n.trim().trim_end_matches('.').parse::<usize>(), s.trim().parse::<f64>()) else {
            continue;
        };
        if (1..=count).contains(&n) && (0.0..=1.0).contains(&s) {
            scores[n - 1] = Some(s);
        }
    }
    scores.into_iter().collect()
}

/// Provider-scored relevance with the same threshold and blend rule. Falls
/// back to token overlap when the provider fails or replies unusably.
pub fn rerank_with_provider(
    question: &str,
    notes: Vec<ContextNote>,
    chat: &dyn ChatProvider,
    model: &str,
) -> (Vec<ContextNote>, Option<String>) {
    if notes.is_empty() {
        return (notes, None);
    }
    let request = ChatRequest::structured(
        model,
        vec![
            ChatMessage::system("You rate how relevant memory notes are to a question."),
            ChatMessage::user(rerank_prompt(question, &notes)),
        ],
    );
    let problem = match chat.chat(&request) {
        Ok(resp) => match parse_rerank_reply(&resp.content, notes.len()) {
            Some(relevance) => return (apply_relevance(notes, &relevance), None),
            None => String::from("unusable rerank reply; used token overlap"),
        },
        Err(e) => format!("rerank provider failed ({e}); used token overlap"),
    };
    (rerank_overlap(question, notes), Some(problem))
}
