//! Answer-span alignment for independently translated QA data.
//!
//! Passages, questions, and answers translated separately rarely agree on
//! surface form: the passage inflects a phrase while the translated answer
//! arrives in citation form, punctuation drifts, or a name stays in the
//! source language. The cascade here tries, in order:
//!
//! 0. `direct` — the translated answer is already a substring;
//! 1. `regex` — cleanup rules applied to both sides, span mapped back to
//!    original passage coordinates;
//! 2. `lemma` — token-level lemma sequence containment;
//! 3. `stem` — the same with suffix-stripped stems;
//! 4. `source_answer` — the untranslated source answer appears verbatim
//!    (names and titles the translator should have left alone).
//!
//! The first matching step wins. Lemma and stem matches emit the passage's
//! own inflected surface form, so the extractive contract
//! `context[start..start+len] == text` holds for every resolved item.
//! Items that no step can place are discarded, not errored.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnswerSpan, Article, Dataset, Paragraph, QaItem};
use crate::textnorm::{
    apply_regex_rules, apply_regex_rules_mapped, char_len, lemmatize, slice_by_chars, stem,
    tokenize, LemmaDictionary, RegexRule, StemRuleTable, TokenSpan,
};

/// Version tag written into datasets produced by [`align_dataset`].
pub const ALIGNED_DATASET_VERSION: &str = "1.1";

/// One QA record carrying both the source-language original and its
/// independently translated counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelItem {
    pub id: String,
    /// Article the passage belongs to; resolved items are grouped by it.
    pub title: String,
    pub context_src: String,
    pub context_tr: String,
    pub question_tr: String,
    pub answer_src: String,
    /// Character index of the source answer in the source passage.
    pub answer_src_start: usize,
    pub answer_tr: String,
}

/// The cascade step that resolved an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeStep {
    Direct,
    Regex,
    Lemma,
    Stem,
    SourceAnswer,
}

impl CascadeStep {
    pub const ALL: [CascadeStep; 5] = [
        CascadeStep::Direct,
        CascadeStep::Regex,
        CascadeStep::Lemma,
        CascadeStep::Stem,
        CascadeStep::SourceAnswer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CascadeStep::Direct => "direct",
            CascadeStep::Regex => "regex",
            CascadeStep::Lemma => "lemma",
            CascadeStep::Stem => "stem",
            CascadeStep::SourceAnswer => "source_answer",
        }
    }
}

/// A resolved answer span in translated-passage coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSpan {
    /// Character index into `context_tr`.
    pub start: usize,
    /// The answer text as it appears in the passage at `start`.
    pub text: String,
}

/// Per-item alignment result. A discard is a value, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentOutcome {
    pub id: String,
    #[serde(flatten)]
    pub result: AlignmentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AlignmentResult {
    Resolved { step: CascadeStep, span: ResolvedSpan },
    Discarded { reason: String },
}

impl AlignmentOutcome {
    pub fn is_resolved(&self) -> bool {
        matches!(self.result, AlignmentResult::Resolved { .. })
    }
}

/// Exact tallies for one alignment run; `total` always equals
/// resolved-by-step counts plus `discarded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub total: usize,
    pub resolved_by_step: BTreeMap<CascadeStep, usize>,
    pub discarded: usize,
}

impl AlignmentStats {
    pub fn resolved(&self) -> usize {
        self.resolved_by_step.values().sum()
    }

    /// Stats plus per-step percentages, the report format the CLI emits.
    pub fn report(&self) -> serde_json::Value {
        let pct = |n: usize| {
            if self.total == 0 {
                0.0
            } else {
                n as f64 / self.total as f64 * 100.0
            }
        };
        let mut by_step = serde_json::Map::new();
        let mut step_pct = serde_json::Map::new();
        for step in CascadeStep::ALL {
            let n = self.resolved_by_step.get(&step).copied().unwrap_or(0);
            by_step.insert(step.name().to_string(), n.into());
            step_pct.insert(step.name().to_string(), pct(n).into());
        }
        serde_json::json!({
            "total": self.total,
            "resolved": self.resolved(),
            "discarded": self.discarded,
            "resolved_by_step": by_step,
            "resolved_by_step_pct": step_pct,
            "discarded_pct": pct(self.discarded),
        })
    }
}

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("duplicate item ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("line {line}: {message}")]
    BadInputLine { line: usize, message: String },
}

/// Resources the cascade needs; bundled defaults available via
/// [`AlignResources::bundled`].
#[derive(Debug, Clone)]
pub struct AlignResources {
    pub lemmas: LemmaDictionary,
    pub stems: StemRuleTable,
    pub rules: Vec<RegexRule>,
}

impl AlignResources {
    pub fn bundled() -> Self {
        Self {
            lemmas: LemmaDictionary::bundled(),
            stems: StemRuleTable::bundled(),
            rules: crate::textnorm::default_regex_rules().to_vec(),
        }
    }
}

/// All character indices (possibly overlapping) at which `needle` occurs in
/// `haystack`. Empty needles yield no occurrences.
fn find_occurrences(haystack: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let mut found = Vec::new();
    let mut byte_pos = 0;
    let mut char_pos = 0;
    while let Some(rel) = haystack[byte_pos..].find(needle) {
        char_pos += haystack[byte_pos..byte_pos + rel].chars().count();
        found.push(char_pos);
        // Step one character to allow overlapping occurrences.
        let step = haystack[byte_pos + rel..].chars().next().unwrap().len_utf8();
        byte_pos += rel + step;
        char_pos += 1;
    }
    found
}

/// Pick the occurrence nearest to the answer's proportionally mapped source
/// position: the search center is
/// `round(answer_src_start / len(context_src) * len(context_tr))`, distance
/// is `|start - center|`, and ties break toward the smaller index. This
/// guards against picking the wrong occurrence when the passage contains
/// the answer string several times.
pub fn locate_span(context_tr: &str, occurrences: &[usize], item: &ParallelItem) -> usize {
    assert!(
        !occurrences.is_empty(),
        "locate_span requires at least one occurrence"
    );
    let src_len = char_len(&item.context_src);
    let tr_len = char_len(context_tr);
    let center = if src_len == 0 {
        0
    } else {
        (item.answer_src_start as f64 / src_len as f64 * tr_len as f64).round() as i64
    };
    let mut best = occurrences[0];
    let mut best_dist = (occurrences[0] as i64 - center).abs();
    for &occ in &occurrences[1..] {
        let dist = (occ as i64 - center).abs();
        if dist < best_dist {
            best = occ;
            best_dist = dist;
        }
    }
    best
}

/// Find one token sequence as a contiguous subsequence of another and
/// return the character span of each match in the original text.
fn token_sequence_matches(
    hay_tokens: &[TokenSpan],
    hay_keys: &[String],
    needle_keys: &[String],
) -> Vec<(usize, usize)> {
    if needle_keys.is_empty() || hay_keys.len() < needle_keys.len() {
        return Vec::new();
    }
    let mut spans = Vec::new();
    for i in 0..=hay_keys.len() - needle_keys.len() {
        if hay_keys[i..i + needle_keys.len()] == needle_keys[..] {
            spans.push((
                hay_tokens[i].start,
                hay_tokens[i + needle_keys.len() - 1].end,
            ));
        }
    }
    spans
}

fn resolve(item: &ParallelItem, step: CascadeStep, start: usize, text: String) -> AlignmentOutcome {
    debug_assert_eq!(
        slice_by_chars(&item.context_tr, start, start + char_len(&text)).unwrap_or(""),
        text
    );
    AlignmentOutcome {
        id: item.id.clone(),
        result: AlignmentResult::Resolved {
            step,
            span: ResolvedSpan { start, text },
        },
    }
}

/// Run the cascade on one item. Steps are evaluated strictly in order and
/// the first match wins; when a step matches in several places,
/// [`locate_span`] picks the occurrence.
pub fn align_item(
    item: &ParallelItem,
    lemmas: &LemmaDictionary,
    stems: &StemRuleTable,
    rules: &[RegexRule],
) -> AlignmentOutcome {
    // An answer with no content after cleanup can never carry a span.
    let norm_answer = apply_regex_rules(&item.answer_tr, rules);
    if item.answer_tr.trim().is_empty() || norm_answer.is_empty() {
        return AlignmentOutcome {
            id: item.id.clone(),
            result: AlignmentResult::Discarded {
                reason: "empty-answer".to_string(),
            },
        };
    }

    // Step 0: direct substring.
    let occurrences = find_occurrences(&item.context_tr, &item.answer_tr);
    if !occurrences.is_empty() {
        let start = locate_span(&item.context_tr, &occurrences, item);
        return resolve(item, CascadeStep::Direct, start, item.answer_tr.clone());
    }

    // Step 1: both sides normalized, matched in normalized space, span
    // projected back to original coordinates. The stored passage stays
    // untouched; normalization is for matching only.
    {
        let norm_context = apply_regex_rules_mapped(&item.context_tr, rules);
        let norm_occurrences = find_occurrences(&norm_context.text, &norm_answer);
        let needle_len = char_len(&norm_answer);
        let spans: Vec<(usize, usize)> = norm_occurrences
            .iter()
            .map(|&s| norm_context.project_span(s, s + needle_len))
            .collect();
        if !spans.is_empty() {
            let starts: Vec<usize> = spans.iter().map(|s| s.0).collect();
            let start = locate_span(&item.context_tr, &starts, item);
            let (s, e) = spans[starts.iter().position(|&x| x == start).unwrap()];
            let text = slice_by_chars(&item.context_tr, s, e).unwrap_or("").to_string();
            return resolve(item, CascadeStep::Regex, s, text);
        }
    }

    // Steps 2 and 3: token-sequence containment on lemmas, then stems.
    // The span runs from the first matched token's start to the last
    // matched token's end in the original passage, so the emitted answer is
    // the passage's inflected form.
    let answer_tokens = tokenize(&item.answer_tr);
    let context_tokens = tokenize(&item.context_tr);
    for step in [CascadeStep::Lemma, CascadeStep::Stem] {
        let (hay_keys, needle_keys): (Vec<String>, Vec<String>) = match step {
            CascadeStep::Lemma => (
                lemmatize(&context_tokens, lemmas),
                lemmatize(&answer_tokens, lemmas),
            ),
            _ => (
                context_tokens
                    .iter()
                    .map(|t| stem(&t.surface, stems))
                    .collect(),
                answer_tokens
                    .iter()
                    .map(|t| stem(&t.surface, stems))
                    .collect(),
            ),
        };
        let spans = token_sequence_matches(&context_tokens, &hay_keys, &needle_keys);
        if !spans.is_empty() {
            let starts: Vec<usize> = spans.iter().map(|s| s.0).collect();
            let start = locate_span(&item.context_tr, &starts, item);
            let (s, e) = spans[starts.iter().position(|&x| x == start).unwrap()];
            let text = slice_by_chars(&item.context_tr, s, e).unwrap_or("").to_string();
            return resolve(item, step, s, text);
        }
    }

    // Step 4: the source-language answer survived translation verbatim.
    let occurrences = find_occurrences(&item.context_tr, &item.answer_src);
    if !occurrences.is_empty() {
        let start = locate_span(&item.context_tr, &occurrences, item);
        return resolve(
            item,
            CascadeStep::SourceAnswer,
            start,
            item.answer_src.clone(),
        );
    }

    AlignmentOutcome {
        id: item.id.clone(),
        result: AlignmentResult::Discarded {
            reason: format!("no-match:{}", CascadeStep::SourceAnswer.name()),
        },
    }
}

/// Align every item and assemble the resolved ones into a SQuAD-format
/// dataset, grouping QA items by `(title, context_tr)` in first-appearance
/// order. Outcomes come back in input order regardless of parallelism, and
/// the produced dataset always passes `validate_extractive`.
pub fn align_dataset(
    items: &[ParallelItem],
    resources: &AlignResources,
) -> Result<(Dataset, Vec<AlignmentOutcome>, AlignmentStats), AlignError> {
    let mut seen = std::collections::HashSet::new();
    let mut duplicates = Vec::new();
    for item in items {
        if !seen.insert(&item.id) {
            duplicates.push(item.id.clone());
        }
    }
    if !duplicates.is_empty() {
        duplicates.sort();
        duplicates.dedup();
        return Err(AlignError::DuplicateIds(duplicates));
    }

    let outcomes: Vec<AlignmentOutcome> = items
        .par_iter()
        .map(|item| align_item(item, &resources.lemmas, &resources.stems, &resources.rules))
        .collect();

    let mut resolved_by_step: BTreeMap<CascadeStep, usize> =
        CascadeStep::ALL.iter().map(|&s| (s, 0)).collect();
    let mut discarded = 0usize;

    // (title, context) -> position maps keep first-appearance order.
    let mut articles: Vec<Article> = Vec::new();
    let mut article_index: std::collections::HashMap<String, usize> =
        std::collections::HashMap::new();
    let mut paragraph_index: std::collections::HashMap<(usize, String), usize> =
        std::collections::HashMap::new();

    for (item, outcome) in items.iter().zip(&outcomes) {
        match &outcome.result {
            AlignmentResult::Resolved { step, span } => {
                *resolved_by_step.get_mut(step).unwrap() += 1;
                let ai = *article_index.entry(item.title.clone()).or_insert_with(|| {
                    articles.push(Article::new(item.title.clone(), Vec::new()));
                    articles.len() - 1
                });
                let pi = *paragraph_index
                    .entry((ai, item.context_tr.clone()))
                    .or_insert_with(|| {
                        articles[ai]
                            .paragraphs
                            .push(Paragraph::new(item.context_tr.clone(), Vec::new()));
                        articles[ai].paragraphs.len() - 1
                    });
                articles[ai].paragraphs[pi].qas.push(QaItem::new(
                    item.id.clone(),
                    item.question_tr.clone(),
                    vec![AnswerSpan::new(span.text.clone(), span.start)],
                ));
            }
            AlignmentResult::Discarded { .. } => discarded += 1,
        }
    }

    let stats = AlignmentStats {
        total: items.len(),
        resolved_by_step,
        discarded,
    };
    let dataset = Dataset::new(ALIGNED_DATASET_VERSION, articles);
    Ok((dataset, outcomes, stats))
}

/// Parse parallel items from JSON Lines; blank lines are skipped. Each
/// item's source-side invariant (`context_src[answer_src_start..]` starts
/// with `answer_src`) is checked here so the cascade can rely on it.
pub fn parse_parallel_jsonl(src: &str) -> Result<Vec<ParallelItem>, AlignError> {
    let mut items = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let item: ParallelItem = serde_json::from_str(raw).map_err(|e| AlignError::BadInputLine {
            line,
            message: e.to_string(),
        })?;
        let start = item.answer_src_start;
        let src_len = char_len(&item.context_src);
        let src_ok = slice_by_chars(
            &item.context_src,
            start.min(src_len),
            (start + char_len(&item.answer_src)).min(src_len),
        )
        .map(|s| s == item.answer_src)
        .unwrap_or(false);
        if !src_ok {
            return Err(AlignError::BadInputLine {
                line,
                message: format!(
                    "answer_src {:?} does not occur at answer_src_start {} of context_src",
                    item.answer_src, item.answer_src_start
                ),
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Serialize outcomes as JSON Lines, one outcome per line, input order.
pub fn outcomes_to_jsonl(outcomes: &[AlignmentOutcome]) -> String {
    let mut out = String::new();
    for outcome in outcomes {
        out.push_str(&serde_json::to_string(outcome).expect("outcome serialization is total"));
        out.push('\n');
    }
    out
}
