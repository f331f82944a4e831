//! SQuAD-style Exact Match and token-level F1.
//!
//! Answer normalization case-folds, strips punctuation characters, and
//! collapses whitespace. Unlike the original English evaluation script
//! there is no article ("a"/"an"/"the") removal: the target language has no
//! articles, and dropping lookalike words would silently delete real ones.
//! A configurable stop-token list (default empty) covers that use case.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Dataset;
use crate::textnorm::is_punctuation;

/// One model prediction keyed by the QA item id it answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPrediction {
    pub id: String,
    pub answer_text: String,
}

/// Corpus-level scores in `[0,1]`; the conventional x100 forms are
/// available via [`QaScore::scaled`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaScore {
    pub exact_match: f64,
    pub f1: f64,
}

impl QaScore {
    /// `(exact_match, f1)` multiplied by 100, leaderboard style.
    pub fn scaled(&self) -> (f64, f64) {
        (self.exact_match * 100.0, self.f1 * 100.0)
    }

    /// The report object the CLI prints: x100 at the top-level keys,
    /// fractions under `*_frac`.
    pub fn report(&self) -> serde_json::Value {
        let (em, f1) = self.scaled();
        serde_json::json!({
            "exact_match": em,
            "f1": f1,
            "exact_match_frac": self.exact_match,
            "f1_frac": self.f1,
        })
    }
}

#[derive(Debug, Error)]
pub enum QaEvalError {
    #[error("missing predictions for ids: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("gold dataset has no scorable items")]
    NothingToScore,
}

/// Evaluation knobs; `Default` matches the plain metric definitions.
#[derive(Debug, Clone, Default)]
pub struct QaEvalOptions {
    /// Tokens removed after normalization, for languages that want
    /// article-style filtering. Compared case-folded.
    pub stop_tokens: Vec<String>,
    /// Score unanswerable items too: a prediction normalizing to the empty
    /// string counts as a correct no-answer.
    pub include_unanswerable: bool,
}

/// Case-fold, strip punctuation characters, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    normalize_answer_with(s, &[])
}

/// [`normalize_answer`] plus removal of the given stop tokens.
pub fn normalize_answer_with(s: &str, stop_tokens: &[String]) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| !is_punctuation(*c)).collect();
    stripped
        .split_whitespace()
        .filter(|tok| !stop_tokens.iter().any(|st| st == tok))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 iff the normalized prediction equals some normalized gold answer.
pub fn exact_match(pred: &str, golds: &[impl AsRef<str>]) -> f64 {
    let pred = normalize_answer(pred);
    let hit = golds
        .iter()
        .any(|g| normalize_answer(g.as_ref()) == pred);
    if hit {
        1.0
    } else {
        0.0
    }
}

fn counts(tokens: &[&str]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry((*t).to_string()).or_insert(0) += 1;
    }
    m
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();
    if pred_tokens.is_empty() && gold_tokens.is_empty() {
        return 1.0;
    }
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return 0.0;
    }
    let pred_counts = counts(&pred_tokens);
    let gold_counts = counts(&gold_tokens);
    let overlap: usize = pred_counts
        .iter()
        .map(|(tok, &n)| n.min(gold_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_tokens.len() as f64;
    let recall = overlap as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-multiset F1, maximized over the gold answers.
pub fn token_f1(pred: &str, golds: &[impl AsRef<str>]) -> f64 {
    golds
        .iter()
        .map(|g| f1_single(pred, g.as_ref()))
        .fold(0.0, f64::max)
}

/// Macro-average EM and F1 over the gold dataset. Unanswerable items are
/// skipped unless `options.include_unanswerable` is set; every scored item
/// must have a prediction.
pub fn evaluate_qa(
    preds: &[QaPrediction],
    gold: &Dataset,
    options: &QaEvalOptions,
) -> Result<QaScore, QaEvalError> {
    let by_id: HashMap<&str, &str> = preds
        .iter()
        .map(|p| (p.id.as_str(), p.answer_text.as_str()))
        .collect();

    let mut missing = Vec::new();
    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut n = 0usize;
    for article in &gold.articles {
        for paragraph in &article.paragraphs {
            for qa in &paragraph.qas {
                if qa.is_impossible && !options.include_unanswerable {
                    continue;
                }
                let Some(&pred) = by_id.get(qa.id.as_str()) else {
                    missing.push(qa.id.clone());
                    continue;
                };
                n += 1;
                if qa.is_impossible {
                    // No-answer convention: empty normalized prediction.
                    let correct = normalize_answer(pred).is_empty();
                    em_sum += if correct { 1.0 } else { 0.0 };
                    f1_sum += if correct { 1.0 } else { 0.0 };
                } else {
                    let golds: Vec<String> = qa
                        .answers
                        .iter()
                        .map(|a| {
                            normalize_answer_with(&a.text, &options.stop_tokens)
                        })
                        .collect();
                    let pred_n = normalize_answer_with(pred, &options.stop_tokens);
                    em_sum += exact_match(&pred_n, &golds);
                    f1_sum += token_f1(&pred_n, &golds);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(QaEvalError::MissingPredictions(missing));
    }
    if n == 0 {
        return Err(QaEvalError::NothingToScore);
    }
    Ok(QaScore {
        exact_match: em_sum / n as f64,
        f1: f1_sum / n as f64,
    })
}

/// Parse the conventional predictions file: one JSON object mapping
/// QA item id to answer string.
pub fn parse_predictions(src: &str) -> Result<Vec<QaPrediction>, serde_json::Error> {
    let map: std::collections::BTreeMap<String, String> = serde_json::from_str(src)?;
    Ok(map
        .into_iter()
        .map(|(id, answer_text)| QaPrediction { id, answer_text })
        .collect())
}
