//! Corpus-level BLEU-1..4, METEOR, and ROUGE-L for generated questions.
//!
//! Variant choices are pinned so scores are comparable across runs:
//! classic corpus BLEU with clipped modified precisions, uniform weights,
//! and no smoothing (any zero precision zeroes the score); sentence-level
//! ROUGE-L F with β = 1.2 averaged over the corpus; METEOR with exact and
//! stem matching stages, α = 0.9, γ = 0.5, θ = 3, no synonym stage. All
//! parameters are configurable through [`QgParams`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::{stem, tokenize, StemRuleTable};

/// One candidate with its reference set, already tokenized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgPair {
    pub id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl QgPair {
    pub fn new(
        id: impl Into<String>,
        candidate: Vec<String>,
        references: Vec<Vec<String>>,
    ) -> Result<Self, QgError> {
        let id = id.into();
        if references.is_empty() {
            return Err(QgError::EmptyReferences { id });
        }
        Ok(Self {
            id,
            candidate,
            references,
        })
    }

    /// Build a pair from raw text: case-fold, then tokenize.
    pub fn from_text(
        id: impl Into<String>,
        candidate: &str,
        references: &[impl AsRef<str>],
    ) -> Result<Self, QgError> {
        let tok = |s: &str| -> Vec<String> {
            tokenize(&s.to_lowercase())
                .into_iter()
                .map(|t| t.surface)
                .collect()
        };
        Self::new(
            id,
            tok(candidate),
            references.iter().map(|r| tok(r.as_ref())).collect(),
        )
    }
}

/// Metric parameters; `Default` gives the canonical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QgParams {
    pub rouge_beta: f64,
    pub meteor_alpha: f64,
    pub meteor_gamma: f64,
    pub meteor_theta: f64,
}

impl Default for QgParams {
    fn default() -> Self {
        Self {
            rouge_beta: 1.2,
            meteor_alpha: 0.9,
            meteor_gamma: 0.5,
            meteor_theta: 3.0,
        }
    }
}

/// All six corpus scores, each in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QgScore {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Error)]
pub enum QgError {
    #[error("max_n must be between 1 and 4, got {0}")]
    InvalidMaxN(usize),
    #[error("no pairs to evaluate")]
    EmptyPairs,
    #[error("pair {id}: references must be non-empty")]
    EmptyReferences { id: String },
    #[error("line {line}: {message}")]
    BadInputLine { line: usize, message: String },
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level clipped n-gram statistics: (matched after clipping against
/// the references, total candidate n-grams).
pub fn bleu_ngram_counts(pairs: &[QgPair], n: usize) -> (u64, u64) {
    let mut clipped = 0u64;
    let mut total = 0u64;
    for pair in pairs {
        let cand = ngram_counts(&pair.candidate, n);
        let refs: Vec<HashMap<&[String], u64>> = pair
            .references
            .iter()
            .map(|r| ngram_counts(r, n))
            .collect();
        for (gram, &count) in &cand {
            let max_ref = refs
                .iter()
                .map(|r| r.get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(max_ref);
        }
        total += if pair.candidate.len() >= n {
            (pair.candidate.len() - n + 1) as u64
        } else {
            0
        };
    }
    (clipped, total)
}

/// Effective reference length: per pair, the reference length closest to
/// the candidate's; ties go to the shorter reference.
fn effective_lengths(pairs: &[QgPair]) -> (u64, u64) {
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for pair in pairs {
        let c = pair.candidate.len();
        cand_len += c as u64;
        let closest = pair
            .references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| ((l as i64 - c as i64).abs(), l))
            .expect("references are non-empty");
        ref_len += closest as u64;
    }
    (cand_len, ref_len)
}

/// Corpus BLEU with uniform weights over n-gram orders `1..=max_n`, no
/// smoothing, and the `exp(1 - r/c)` brevity penalty for short candidates.
pub fn bleu(pairs: &[QgPair], max_n: usize) -> Result<f64, QgError> {
    if !(1..=4).contains(&max_n) {
        return Err(QgError::InvalidMaxN(max_n));
    }
    if pairs.is_empty() {
        return Err(QgError::EmptyPairs);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (clipped, total) = bleu_ngram_counts(pairs, n);
        if clipped == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let (cand_len, ref_len) = effective_lengths(pairs);
    if cand_len == 0 {
        return Ok(0.0);
    }
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * (log_sum / max_n as f64).exp())
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence ROUGE-L: LCS-based F-score with recall weighted by `beta`,
/// maximized over the references. Zero when nothing is shared.
pub fn rouge_l(candidate: &[String], references: &[Vec<String>], beta: f64) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let beta_sq = beta * beta;
    references
        .iter()
        .map(|r| {
            if r.is_empty() {
                return 0.0;
            }
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            ((1.0 + beta_sq) * rec * p) / (rec + beta_sq * p)
        })
        .fold(0.0, f64::max)
}

/// A unigram alignment between candidate and reference: how many tokens
/// matched and in how many contiguous chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorAlignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Node budget for the chunk-minimizing search; beyond it the greedy
/// alignment stands. Sentence-sized inputs never get near this.
const METEOR_SEARCH_BUDGET: u64 = 2_000_000;

/// Two-stage alignment: maximal exact matching first, then maximal stem
/// matching over the leftovers, then the fewest chunks among alignments
/// achieving those counts.
///
/// Match counts follow from per-class tallies: equal surfaces form complete
/// bipartite blocks, so every maximum exact matching uses
/// `min(count_cand(w), count_ref(w))` pairs per surface `w`, and the stem
/// stage likewise takes `min` of the leftover counts per stem class. Chunk
/// minimization is a bounded backtracking search over which positions pair
/// with which, seeded by a greedy in-order assignment.
pub fn meteor_alignment(
    candidate: &[String],
    reference: &[String],
    stems: &StemRuleTable,
) -> MeteorAlignment {
    let cand_stems: Vec<String> = candidate.iter().map(|t| stem(t, stems)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|t| stem(t, stems)).collect();

    let mut cand_count: HashMap<&str, usize> = HashMap::new();
    for t in candidate {
        *cand_count.entry(t).or_insert(0) += 1;
    }
    let mut ref_count: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *ref_count.entry(t).or_insert(0) += 1;
    }

    let mut exact_quota: HashMap<&str, usize> = HashMap::new();
    for (&w, &c) in &cand_count {
        let e = c.min(ref_count.get(w).copied().unwrap_or(0));
        if e > 0 {
            exact_quota.insert(w, e);
        }
    }

    // Leftover counts per stem class after the exact stage. Equal-surface
    // tokens are interchangeable, so only the per-surface excess matters.
    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    {
        let mut remaining = cand_count.clone();
        for (i, t) in candidate.iter().enumerate() {
            let e = exact_quota.get(t.as_str()).copied().unwrap_or(0);
            let r = remaining.get_mut(t.as_str()).unwrap();
            if *r > e {
                *cand_left.entry(&cand_stems[i]).or_insert(0) += 1;
                *r -= 1;
            }
        }
        let mut remaining = ref_count.clone();
        for (j, t) in reference.iter().enumerate() {
            let e = exact_quota.get(t.as_str()).copied().unwrap_or(0);
            let r = remaining.get_mut(t.as_str()).unwrap();
            if *r > e {
                *ref_left.entry(&ref_stems[j]).or_insert(0) += 1;
                *r -= 1;
            }
        }
    }

    let mut stem_quota: HashMap<String, usize> = HashMap::new();
    for (s, &c) in &cand_left {
        let q = c.min(ref_left.get(s).copied().unwrap_or(0));
        if q > 0 {
            stem_quota.insert((*s).to_string(), q);
        }
    }

    let matches: usize =
        exact_quota.values().sum::<usize>() + stem_quota.values().sum::<usize>();
    if matches == 0 {
        return MeteorAlignment {
            matches: 0,
            chunks: 0,
        };
    }

    let greedy = greedy_pairs(candidate, reference, &cand_stems, &ref_stems, &exact_quota, &stem_quota);
    debug_assert_eq!(greedy.len(), matches);
    let mut best_chunks = count_chunks(&greedy);

    if reference.len() <= 128 {
        let mut ctx = ChunkSearch {
            candidate,
            reference,
            cand_stems: &cand_stems,
            ref_stems: &ref_stems,
            target: matches,
            best_chunks,
            budget: METEOR_SEARCH_BUDGET,
        };
        let mut exact_q = exact_quota.clone();
        let mut stem_q = stem_quota.clone();
        ctx.dfs(0, 0u128, 0, None, 0, &mut exact_q, &mut stem_q);
        best_chunks = ctx.best_chunks;
    }

    MeteorAlignment {
        matches,
        chunks: best_chunks,
    }
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut last: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        if last != Some((i.wrapping_sub(1), j.wrapping_sub(1))) {
            chunks += 1;
        }
        last = Some((i, j));
    }
    chunks
}

/// Quota-respecting in-order assignment; always realizes the maximal match
/// count, with no claim about chunks.
fn greedy_pairs(
    candidate: &[String],
    reference: &[String],
    cand_stems: &[String],
    ref_stems: &[String],
    exact_quota: &HashMap<&str, usize>,
    stem_quota: &HashMap<String, usize>,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut used_ref = vec![false; reference.len()];
    let mut exact_q = exact_quota.clone();
    let mut cand_exact = vec![false; candidate.len()];

    for (i, t) in candidate.iter().enumerate() {
        if let Some(q) = exact_q.get_mut(t.as_str()) {
            if *q > 0 {
                if let Some(j) = (0..reference.len())
                    .find(|&j| !used_ref[j] && reference[j] == *t)
                {
                    used_ref[j] = true;
                    *q -= 1;
                    cand_exact[i] = true;
                    pairs.push((i, j));
                }
            }
        }
    }
    let mut stem_q = stem_quota.clone();
    for i in 0..candidate.len() {
        if cand_exact[i] {
            continue;
        }
        if let Some(q) = stem_q.get_mut(cand_stems[i].as_str()) {
            if *q > 0 {
                if let Some(j) = (0..reference.len()).find(|&j| {
                    !used_ref[j]
                        && ref_stems[j] == cand_stems[i]
                        && reference[j] != candidate[i]
                }) {
                    used_ref[j] = true;
                    *q -= 1;
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort();
    pairs
}

struct ChunkSearch<'a> {
    candidate: &'a [String],
    reference: &'a [String],
    cand_stems: &'a [String],
    ref_stems: &'a [String],
    target: usize,
    best_chunks: usize,
    budget: u64,
}

impl ChunkSearch<'_> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &mut self,
        i: usize,
        used: u128,
        matched: usize,
        last: Option<(usize, usize)>,
        chunks: usize,
        exact_q: &mut HashMap<&str, usize>,
        stem_q: &mut HashMap<String, usize>,
    ) {
        if self.budget == 0 || chunks >= self.best_chunks {
            return;
        }
        self.budget -= 1;
        if matched + (self.candidate.len() - i) < self.target {
            return;
        }
        if i == self.candidate.len() {
            if matched == self.target && chunks < self.best_chunks {
                self.best_chunks = chunks;
            }
            return;
        }

        let word = &self.candidate[i];
        let cstem = &self.cand_stems[i];

        // Try the chunk-continuing reference first so good bounds appear
        // early.
        let mut order: Vec<usize> = (0..self.reference.len()).collect();
        if let Some((pi, pj)) = last {
            if pi + 1 == i && pj + 1 < self.reference.len() {
                order.retain(|&j| j != pj + 1);
                order.insert(0, pj + 1);
            }
        }

        for &j in &order {
            if used & (1u128 << j) != 0 {
                continue;
            }
            let is_exact = self.reference[j] == *word;
            let allowed = if is_exact {
                exact_q.get(word.as_str()).copied().unwrap_or(0) > 0
            } else {
                self.ref_stems[j] == *cstem
                    && stem_q.get(cstem.as_str()).copied().unwrap_or(0) > 0
            };
            if !allowed {
                continue;
            }
            let next_chunks = if last == Some((i.wrapping_sub(1), j.wrapping_sub(1))) {
                chunks
            } else {
                chunks + 1
            };
            if is_exact {
                *exact_q.get_mut(word.as_str()).unwrap() -= 1;
            } else {
                *stem_q.get_mut(cstem.as_str()).unwrap() -= 1;
            }
            self.dfs(
                i + 1,
                used | (1u128 << j),
                matched + 1,
                Some((i, j)),
                next_chunks,
                exact_q,
                stem_q,
            );
            if is_exact {
                *exact_q.get_mut(word.as_str()).unwrap() += 1;
            } else {
                *stem_q.get_mut(cstem.as_str()).unwrap() += 1;
            }
        }

        // Leave position i unmatched.
        self.dfs(i + 1, used, matched, last, chunks, exact_q, stem_q);
    }
}

/// Sentence METEOR against one reference.
fn meteor_single(
    candidate: &[String],
    reference: &[String],
    stems: &StemRuleTable,
    params: &QgParams,
) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let alignment = meteor_alignment(candidate, reference, stems);
    if alignment.matches == 0 {
        return 0.0;
    }
    let m = alignment.matches as f64;
    let precision = m / candidate.len() as f64;
    let recall = m / reference.len() as f64;
    let f_mean =
        precision * recall / (params.meteor_alpha * precision + (1.0 - params.meteor_alpha) * recall);
    let penalty = params.meteor_gamma * (alignment.chunks as f64 / m).powf(params.meteor_theta);
    f_mean * (1.0 - penalty)
}

/// Sentence METEOR, maximized over the references.
pub fn meteor(
    candidate: &[String],
    references: &[Vec<String>],
    stems: &StemRuleTable,
    params: &QgParams,
) -> f64 {
    references
        .iter()
        .map(|r| meteor_single(candidate, r, stems, params))
        .fold(0.0, f64::max)
}

/// All six metrics over the same pairs. ROUGE-L and METEOR are means of
/// sentence scores; BLEU-k reuses the corpus n-gram statistics up to k.
pub fn evaluate_qg(
    pairs: &[QgPair],
    stems: &StemRuleTable,
    params: &QgParams,
) -> Result<QgScore, QgError> {
    if pairs.is_empty() {
        return Err(QgError::EmptyPairs);
    }
    for pair in pairs {
        if pair.references.is_empty() {
            return Err(QgError::EmptyReferences {
                id: pair.id.clone(),
            });
        }
    }

    let precisions: Vec<Option<f64>> = (1..=4)
        .map(|n| {
            let (clipped, total) = bleu_ngram_counts(pairs, n);
            (clipped > 0 && total > 0).then(|| clipped as f64 / total as f64)
        })
        .collect();
    let (cand_len, ref_len) = effective_lengths(pairs);
    let bp = if cand_len == 0 {
        0.0
    } else if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    let bleu_k = |k: usize| -> f64 {
        let mut log_sum = 0.0;
        for p in &precisions[..k] {
            match p {
                Some(p) => log_sum += p.ln(),
                None => return 0.0,
            }
        }
        if cand_len == 0 {
            0.0
        } else {
            bp * (log_sum / k as f64).exp()
        }
    };

    let n = pairs.len() as f64;
    let rouge = pairs
        .iter()
        .map(|p| rouge_l(&p.candidate, &p.references, params.rouge_beta))
        .sum::<f64>()
        / n;
    let met = pairs
        .iter()
        .map(|p| meteor(&p.candidate, &p.references, stems, params))
        .sum::<f64>()
        / n;

    Ok(QgScore {
        bleu_1: bleu_k(1),
        bleu_2: bleu_k(2),
        bleu_3: bleu_k(3),
        bleu_4: bleu_k(4),
        meteor: met,
        rouge_l: rouge,
    })
}

/// Parse pairs from JSON Lines: `{"id": ..., "candidate": "...",
/// "references": ["...", ...]}`. Candidate and references may be strings
/// (tokenized here) or pre-tokenized arrays.
pub fn parse_qg_jsonl(src: &str) -> Result<Vec<QgPair>, QgError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum TextOrTokens {
        Text(String),
        Tokens(Vec<String>),
    }
    #[derive(Deserialize)]
    struct Line {
        id: String,
        candidate: TextOrTokens,
        references: Vec<TextOrTokens>,
    }
    let mut pairs = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(raw).map_err(|e| QgError::BadInputLine {
            line,
            message: e.to_string(),
        })?;
        let to_tokens = |t: TextOrTokens| -> Vec<String> {
            match t {
                TextOrTokens::Text(s) => tokenize(&s.to_lowercase())
                    .into_iter()
                    .map(|t| t.surface)
                    .collect(),
                TextOrTokens::Tokens(v) => v,
            }
        };
        let candidate = to_tokens(parsed.candidate);
        let references: Vec<Vec<String>> =
            parsed.references.into_iter().map(to_tokens).collect();
        pairs.push(QgPair::new(parsed.id, candidate, references)?);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn pair(cand: &str, refs: &[&str]) -> QgPair {
        QgPair::new(
            "p",
            toks(cand),
            refs.iter().map(|r| toks(r)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn bleu_identity_is_one() {
        let pairs = vec![pair("mikä on suomen pääkaupunki", &["mikä on suomen pääkaupunki"])];
        for n in 1..=4 {
            assert!((bleu(&pairs, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bleu_hand_computed_case() {
        // p1 = 3/4, p2 = 2/3, p3 = 1/3, p4 = 0.
        let pairs = vec![pair("a b c e", &["a b c d"])];
        assert_eq!(bleu(&pairs, 4).unwrap(), 0.0);
        let b2 = bleu(&pairs, 2).unwrap();
        assert!((b2 - (0.75f64 * (2.0 / 3.0)).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn bleu_rejects_bad_max_n() {
        let pairs = vec![pair("a", &["a"])];
        assert!(matches!(bleu(&pairs, 0), Err(QgError::InvalidMaxN(0))));
        assert!(matches!(bleu(&pairs, 5), Err(QgError::InvalidMaxN(5))));
    }

    #[test]
    fn rouge_hand_computed_case() {
        // LCS = 3, P = 1, R = 3/4, beta = 1.2.
        let score = rouge_l(&toks("a c d"), &[toks("a b c d")], 1.2);
        let expected = (1.0 + 1.44) * 0.75 * 1.0 / (0.75 + 1.44 * 1.0);
        assert!((score - expected).abs() < 1e-9);
        assert!((score - 0.8356).abs() < 1e-4);
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        assert_eq!(rouge_l(&toks("a b c"), &[toks("a b c")], 1.2), 1.0);
        assert_eq!(rouge_l(&toks("a b"), &[toks("x y")], 1.2), 0.0);
        assert_eq!(rouge_l(&[], &[toks("x")], 1.2), 0.0);
    }

    #[test]
    fn meteor_identical_five_tokens() {
        let stems = StemRuleTable::bundled();
        let params = QgParams::default();
        let cand = toks("kuinka pitkäksi puu voi kasvaa");
        let score = meteor(&cand, std::slice::from_ref(&cand), &stems, &params);
        assert!((score - 0.996).abs() < 1e-9);
    }

    #[test]
    fn meteor_zero_matches() {
        let stems = StemRuleTable::bundled();
        let params = QgParams::default();
        assert_eq!(
            meteor(&toks("x y"), &[toks("q w")], &stems, &params),
            0.0
        );
    }

    #[test]
    fn meteor_stem_stage_matches_inflected_form() {
        let stems = StemRuleTable::bundled();
        let alignment = meteor_alignment(&toks("talon"), &toks("talossa"), &stems);
        assert_eq!(alignment.matches, 1);
        assert_eq!(alignment.chunks, 1);
    }

    #[test]
    fn meteor_prefers_fewer_chunks() {
        let stems = StemRuleTable::bundled();
        // "a b" occurs contiguously in the reference; the aligner must pick
        // the contiguous occurrence (1 chunk), not split across the two "a"s.
        let alignment = meteor_alignment(&toks("a b"), &toks("a x a b"), &stems);
        assert_eq!(alignment.matches, 2);
        assert_eq!(alignment.chunks, 1);
    }

    #[test]
    fn evaluate_identity_scores() {
        let stems = StemRuleTable::bundled();
        let params = QgParams::default();
        let pairs = vec![
            pair("mikä on suomen suurin kaupunki", &["mikä on suomen suurin kaupunki"]),
            pair("kuka voitti sodan vuonna 1945", &["kuka voitti sodan vuonna 1945"]),
        ];
        let score = evaluate_qg(&pairs, &stems, &params).unwrap();
        assert_eq!(score.bleu_1, 1.0);
        assert_eq!(score.bleu_4, 1.0);
        assert_eq!(score.rouge_l, 1.0);
        assert!(score.meteor >= 0.99);
    }

    #[test]
    fn evaluate_empty_is_error() {
        let stems = StemRuleTable::bundled();
        assert!(matches!(
            evaluate_qg(&[], &stems, &QgParams::default()),
            Err(QgError::EmptyPairs)
        ));
    }

    #[test]
    fn evaluate_disjoint_pair_scores_zero() {
        let stems = StemRuleTable::bundled();
        let score = evaluate_qg(&[pair("xq wq", &["zz yy"])], &stems, &QgParams::default()).unwrap();
        assert_eq!(score.bleu_1, 0.0);
        assert_eq!(score.bleu_4, 0.0);
        assert_eq!(score.rouge_l, 0.0);
        assert_eq!(score.meteor, 0.0);
    }

    #[test]
    fn parse_jsonl_accepts_text_and_tokens() {
        let src = concat!(
            r#"{"id":"a","candidate":"Mikä on?","references":["Mikä on?"]}"#,
            "\n",
            r#"{"id":"b","candidate":["mikä","on"],"references":[["mikä","on"]]}"#,
            "\n"
        );
        let pairs = parse_qg_jsonl(src).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].candidate, vec!["mikä", "on", "?"]);
        assert_eq!(pairs[1].candidate, vec!["mikä", "on"]);
    }

    // Quadratic n-gram counter with no hashing, used as the oracle.
    fn oracle_ngram_counts(cand: &[String], refs: &[Vec<String>], n: usize) -> (u64, u64) {
        if cand.len() < n {
            return (0, 0);
        }
        let windows: Vec<&[String]> = cand.windows(n).collect();
        let mut clipped = 0u64;
        for (i, w) in windows.iter().enumerate() {
            if windows[..i].iter().any(|prev| prev == w) {
                continue; // count each distinct n-gram once
            }
            let cand_count = windows.iter().filter(|x| x == &w).count() as u64;
            let max_ref = refs
                .iter()
                .map(|r| {
                    if r.len() < n {
                        0
                    } else {
                        r.windows(n).filter(|x| x == w).count() as u64
                    }
                })
                .max()
                .unwrap_or(0);
            clipped += cand_count.min(max_ref);
        }
        (clipped, windows.len() as u64)
    }

    fn oracle_lcs(a: &[String], b: &[String]) -> usize {
        fn go(
            a: &[String],
            b: &[String],
            i: usize,
            j: usize,
            memo: &mut HashMap<(usize, usize), usize>,
        ) -> usize {
            if i == a.len() || j == b.len() {
                return 0;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let v = if a[i] == b[j] {
                1 + go(a, b, i + 1, j + 1, memo)
            } else {
                go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
            };
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut HashMap::new())
    }

    fn token_seq() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[ab]{1,2}", 0..12)
    }

    proptest! {
        #[test]
        fn ngram_counts_match_oracle(cand in token_seq(), r1 in token_seq(), r2 in token_seq()) {
            let pair = QgPair::new("x", cand.clone(), vec![r1.clone(), r2.clone()]).unwrap();
            for n in 1..=4usize {
                let got = bleu_ngram_counts(std::slice::from_ref(&pair), n);
                let want = oracle_ngram_counts(&cand, &[r1.clone(), r2.clone()], n);
                prop_assert_eq!(got, want, "n = {}", n);
            }
        }

        #[test]
        fn lcs_matches_oracle(a in token_seq(), b in token_seq()) {
            prop_assert_eq!(lcs_len(&a, &b), oracle_lcs(&a, &b));
        }

        #[test]
        fn scores_stay_in_unit_interval(cand in token_seq(), refr in token_seq()) {
            prop_assume!(!refr.is_empty());
            let stems = StemRuleTable::bundled();
            let params = QgParams::default();
            let pair = QgPair::new("x", cand, vec![refr]).unwrap();
            let score = evaluate_qg(&[pair], &stems, &params).unwrap();
            for v in [score.bleu_1, score.bleu_2, score.bleu_3, score.bleu_4, score.meteor, score.rouge_l] {
                prop_assert!((0.0..=1.0).contains(&v), "out of range: {}", v);
            }
        }
    }
}
