//! Model-agnostic input assembly and greedy decoding state machines.
//!
//! Three fine-tuning input schemes live here:
//!
//! * span-extraction QA: `[CLS] passage [SEP] question`, answered by an
//!   (argmax start, argmax end) pair over per-position scores;
//! * masked sequential question generation: the passage with `[HL]`
//!   markers around the answer, then
//!   `[CLS] P_HL [SEP] q̂₁ … q̂ₖ [MASK]` re-scored once per generated
//!   token until `[SEP]` is predicted;
//! * causal prompting: a three-line `Context/Question/Answer` template
//!   (QA) or `Context/Answer/Question` (QG), optionally with `[HL]`
//!   markers, continued token by token until a stop token.
//!
//! The model itself is abstracted behind [`Scorer`]: anything that can
//! score the next/masked position over a [`Vocabulary`] drives the loops —
//! a test stub, or an external process speaking line-delimited JSON.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

/// Default generation budget for question decoding; generous next to the
/// ~7-word questions these corpora average.
pub const DEFAULT_QUESTION_MAX_LEN: usize = 64;
/// Default generation budget for causal continuations (answers are short).
pub const DEFAULT_CONTINUATION_MAX_LEN: usize = 32;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const HL: &str = "[HL]";
pub const PAD: &str = "[PAD]";

const CONTROL_TOKENS: [&str; 5] = [CLS, SEP, MASK, HL, PAD];

/// An indexed token list that always contains the five control tokens
/// (`[CLS]`, `[SEP]`, `[MASK]`, `[HL]`, `[PAD]`) and no duplicates.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Build from an explicit token list; the control tokens must all be
    /// present and no surface may repeat.
    pub fn new(tokens: Vec<String>) -> Result<Self, GenError> {
        let mut index = HashMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), TokenId(i as u32)).is_some() {
                return Err(GenError::DuplicateToken(tok.clone()));
            }
        }
        for control in CONTROL_TOKENS {
            if !index.contains_key(control) {
                return Err(GenError::MissingControlToken(control));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Control tokens first, then the given words deduplicated in order.
    pub fn with_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = CONTROL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in words {
            let w = w.into();
            if seen.insert(w.clone()) {
                tokens.push(w);
            }
        }
        Self::new(tokens).expect("constructed vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.tokens[id.0 as usize]
    }

    pub fn surfaces(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&id| self.surface(id).to_string()).collect()
    }

    pub fn cls(&self) -> TokenId {
        self.index[CLS]
    }

    pub fn sep(&self) -> TokenId {
        self.index[SEP]
    }

    pub fn mask(&self) -> TokenId {
        self.index[MASK]
    }

    pub fn hl(&self) -> TokenId {
        self.index[HL]
    }

    pub fn pad(&self) -> TokenId {
        self.index[PAD]
    }

    pub fn is_control(&self, id: TokenId) -> bool {
        CONTROL_TOKENS.contains(&self.surface(id))
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("vocabulary is missing control token {0}")]
    MissingControlToken(&'static str),
    #[error("duplicate vocabulary token {0:?}")]
    DuplicateToken(String),
    #[error("scorer returned {got} scores for a vocabulary of {expected}")]
    ScorerWidth { expected: usize, got: usize },
    #[error("answer range ({start}, {end}) invalid for passage of {len} tokens")]
    InvalidRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("no valid (start, end) pair under the given constraints")]
    NoValidSpan,
    #[error("max_len must be at least 1")]
    ZeroMaxLen,
    #[error("prompt kind {kind} requires {field}")]
    MissingField {
        kind: &'static str,
        field: &'static str,
    },
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("scorer I/O: {0}")]
    ScorerIo(String),
}

/// Which position the scorer is asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorePosition {
    /// The final `[MASK]` token of the input.
    Mask,
    /// The continuation after the last input token.
    Next,
}

/// Scores the next/masked token over a vocabulary. Implementations must be
/// usable from several threads at once (`&self` receivers; interior
/// mutability where state is unavoidable).
pub trait Scorer {
    fn score(
        &self,
        input: &[String],
        position: ScorePosition,
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>, GenError>;
}

/// Deterministic test scorer: emits a fixed token sequence one-hot, then
/// keeps repeating the final element once the sequence is exhausted.
pub struct StubScorer {
    sequence: Vec<String>,
    cursor: Mutex<usize>,
}

impl StubScorer {
    pub fn new<I, S>(sequence: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            sequence: sequence.into_iter().map(Into::into).collect(),
            cursor: Mutex::new(0),
        }
    }
}

impl Scorer for StubScorer {
    fn score(
        &self,
        _input: &[String],
        _position: ScorePosition,
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>, GenError> {
        let mut cursor = self.cursor.lock().unwrap();
        let surface = self
            .sequence
            .get(*cursor)
            .or_else(|| self.sequence.last())
            .ok_or(GenError::ScorerIo("stub sequence is empty".to_string()))?;
        *cursor += 1;
        let id = vocab
            .token_id(surface)
            .ok_or_else(|| GenError::UnknownToken(surface.clone()))?;
        let mut scores = vec![0.0; vocab.len()];
        scores[id.0 as usize] = 1.0;
        Ok(scores)
    }
}

/// Scorer backed by an external process speaking the adapter protocol:
/// one JSON request per line on stdin —
/// `{"tokens": [...], "position": "mask"|"next"}` — answered by one JSON
/// response per line on stdout — `{"scores": [...]}` with exactly one
/// score per vocabulary entry.
pub struct ProcessScorer {
    child: Mutex<ProcessHandle>,
}

struct ProcessHandle {
    _child: Child,
    stdin: std::process::ChildStdin,
    stdout: BufReader<std::process::ChildStdout>,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    tokens: &'a [String],
    position: ScorePosition,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl ProcessScorer {
    /// Spawn `command` through `sh -c`, keeping it alive for the scorer's
    /// lifetime.
    pub fn spawn(command: &str) -> Result<Self, GenError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| GenError::ScorerIo(format!("spawn {command:?}: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| GenError::ScorerIo("no stdin".to_string()))?;
        let stdout = BufReader::new(
            child
                .stdout
                .take()
                .ok_or_else(|| GenError::ScorerIo("no stdout".to_string()))?,
        );
        Ok(Self {
            child: Mutex::new(ProcessHandle {
                _child: child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Scorer for ProcessScorer {
    fn score(
        &self,
        input: &[String],
        position: ScorePosition,
        vocab: &Vocabulary,
    ) -> Result<Vec<f64>, GenError> {
        let mut handle = self.child.lock().unwrap();
        let request = serde_json::to_string(&ScoreRequest {
            tokens: input,
            position,
        })
        .expect("request serialization is total");
        writeln!(handle.stdin, "{request}")
            .and_then(|_| handle.stdin.flush())
            .map_err(|e| GenError::ScorerIo(e.to_string()))?;
        let mut line = String::new();
        handle
            .stdout
            .read_line(&mut line)
            .map_err(|e| GenError::ScorerIo(e.to_string()))?;
        if line.is_empty() {
            return Err(GenError::ScorerIo("scorer closed its stdout".to_string()));
        }
        let response: ScoreResponse =
            serde_json::from_str(&line).map_err(|e| GenError::ScorerIo(e.to_string()))?;
        if response.scores.len() != vocab.len() {
            return Err(GenError::ScorerWidth {
                expected: vocab.len(),
                got: response.scores.len(),
            });
        }
        Ok(response.scores)
    }
}

/// Greedy argmax with ties broken toward the lowest vocabulary index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Span-extraction QA input: `[CLS] ⧺ passage ⧺ [SEP] ⧺ question`.
pub fn build_qa_input(
    vocab: &Vocabulary,
    passage: &[TokenId],
    question: &[TokenId],
) -> Vec<TokenId> {
    let mut input = Vec::with_capacity(passage.len() + question.len() + 2);
    input.push(vocab.cls());
    input.extend_from_slice(passage);
    input.push(vocab.sep());
    input.extend_from_slice(question);
    input
}

/// Best `(start, end)` pair with `start <= end`,
/// `end - start < max_answer_len`, and neither endpoint excluded,
/// maximizing `start_scores[start] + end_scores[end]`. Ties prefer the
/// smaller start, then the smaller end. `excluded` may be empty (nothing
/// excluded) or one flag per position.
pub fn extract_answer_span(
    start_scores: &[f64],
    end_scores: &[f64],
    max_answer_len: usize,
    excluded: &[bool],
) -> Result<(usize, usize), GenError> {
    let n = start_scores.len();
    if n == 0 || n != end_scores.len() || (!excluded.is_empty() && excluded.len() != n) {
        return Err(GenError::NoValidSpan);
    }
    let is_excluded = |i: usize| !excluded.is_empty() && excluded[i];

    // Sliding-window maximum of start scores over the last
    // `max_answer_len` positions; front of the deque is the best start for
    // the current end. Equal scores keep the earlier index.
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut best: Option<(f64, usize, usize)> = None;
    for end in 0..n {
        if !is_excluded(end) {
            while let Some(&back) = deque.back() {
                if start_scores[back] < start_scores[end] {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(end);
        }
        while let Some(&front) = deque.front() {
            if end >= max_answer_len && front <= end - max_answer_len {
                deque.pop_front();
            } else {
                break;
            }
        }
        if is_excluded(end) {
            continue;
        }
        if let Some(&start) = deque.front() {
            let sum = start_scores[start] + end_scores[end];
            let better = match best {
                None => true,
                Some((best_sum, best_start, best_end)) => {
                    sum > best_sum
                        || (sum == best_sum
                            && (start < best_start || (start == best_start && end < best_end)))
                }
            };
            if better {
                best = Some((sum, start, end));
            }
        }
    }
    best.map(|(_, s, e)| (s, e)).ok_or(GenError::NoValidSpan)
}

/// [`extract_answer_span`] over an assembled QA input, excluding the
/// control-token positions.
pub fn extract_answer_span_for_input(
    vocab: &Vocabulary,
    input: &[TokenId],
    start_scores: &[f64],
    end_scores: &[f64],
    max_answer_len: usize,
) -> Result<(usize, usize), GenError> {
    let excluded: Vec<bool> = input.iter().map(|&t| vocab.is_control(t)).collect();
    extract_answer_span(start_scores, end_scores, max_answer_len, &excluded)
}

/// A passage with `[HL]` markers around the answer span.
#[derive(Debug, Clone, PartialEq)]
pub struct HighlightedPassage {
    /// Passage tokens including the two `[HL]` markers.
    pub tokens: Vec<TokenId>,
    /// The highlighted range in the *original* passage coordinates.
    pub answer_range: (usize, usize),
}

impl HighlightedPassage {
    /// Remove the markers, recovering the original passage tokens.
    pub fn stripped(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        self.tokens
            .iter()
            .copied()
            .filter(|&t| t != vocab.hl())
            .collect()
    }
}

/// Insert `[HL]` before `start` and after `end` (inclusive token indices).
/// Marking the answer disambiguates passages where it occurs repeatedly.
pub fn highlight(
    vocab: &Vocabulary,
    passage: &[TokenId],
    answer_range: (usize, usize),
) -> Result<HighlightedPassage, GenError> {
    let (start, end) = answer_range;
    if start > end || end >= passage.len() {
        return Err(GenError::InvalidRange {
            start,
            end,
            len: passage.len(),
        });
    }
    let mut tokens = Vec::with_capacity(passage.len() + 2);
    tokens.extend_from_slice(&passage[..start]);
    tokens.push(vocab.hl());
    tokens.extend_from_slice(&passage[start..=end]);
    tokens.push(vocab.hl());
    tokens.extend_from_slice(&passage[end + 1..]);
    Ok(HighlightedPassage {
        tokens,
        answer_range,
    })
}

/// The growing question during masked sequential decoding.
#[derive(Debug, Clone)]
pub struct DecodeState {
    pub passage: HighlightedPassage,
    pub question_so_far: Vec<TokenId>,
    pub finished: bool,
}

impl DecodeState {
    pub fn new(passage: HighlightedPassage) -> Self {
        Self {
            passage,
            question_so_far: Vec::new(),
            finished: false,
        }
    }

    /// `[CLS] ⧺ P_HL ⧺ [SEP] ⧺ Q̂ ⧺ [MASK]` — while decoding the input
    /// always ends with exactly one `[MASK]`.
    pub fn assemble_input(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        let mut input =
            Vec::with_capacity(self.passage.tokens.len() + self.question_so_far.len() + 3);
        input.push(vocab.cls());
        input.extend_from_slice(&self.passage.tokens);
        input.push(vocab.sep());
        input.extend_from_slice(&self.question_so_far);
        input.push(vocab.mask());
        input
    }
}

/// One decoding step for trace export: the assembled input and the token
/// the scorer chose for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub input: Vec<String>,
    pub chosen: String,
}

/// A finished decode plus its per-step trace.
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub tokens: Vec<TokenId>,
    pub steps: Vec<DecodeStep>,
}

/// Masked sequential question generation: re-score the `[MASK]` slot,
/// append the argmax token, stop at `[SEP]` or after `max_len` tokens.
/// Returns the question without the terminating `[SEP]`.
pub fn decode_hlsqg(
    vocab: &Vocabulary,
    passage: &HighlightedPassage,
    scorer: &dyn Scorer,
    max_len: usize,
) -> Result<DecodeOutput, GenError> {
    if max_len == 0 {
        return Err(GenError::ZeroMaxLen);
    }
    let mut state = DecodeState::new(passage.clone());
    let mut steps = Vec::new();
    while !state.finished {
        let input = state.assemble_input(vocab);
        let surfaces = vocab.surfaces(&input);
        let scores = scorer.score(&surfaces, ScorePosition::Mask, vocab)?;
        if scores.len() != vocab.len() {
            return Err(GenError::ScorerWidth {
                expected: vocab.len(),
                got: scores.len(),
            });
        }
        let chosen = TokenId(argmax(&scores) as u32);
        steps.push(DecodeStep {
            input: surfaces,
            chosen: vocab.surface(chosen).to_string(),
        });
        if chosen == vocab.sep() {
            state.finished = true;
        } else {
            state.question_so_far.push(chosen);
            if state.question_so_far.len() >= max_len {
                state.finished = true;
            }
        }
    }
    Ok(DecodeOutput {
        tokens: state.question_so_far,
        steps,
    })
}

/// Causal prompt layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    /// `Context:` / `Question:` / `Answer:` — the answer is generated.
    Qa,
    /// `Context:` / `Answer:` / `Question:` — the question is generated.
    Qg,
    /// Like `Qg`, with `[HL]` markers around the answer in the context.
    Hlqg,
}

impl PromptKind {
    pub fn name(self) -> &'static str {
        match self {
            PromptKind::Qa => "qa",
            PromptKind::Qg => "qg",
            PromptKind::Hlqg => "hlqg",
        }
    }
}

/// Insert `[HL]` markers around whitespace tokens `start..=end` of the
/// passage text.
fn highlight_text(passage: &str, range: (usize, usize)) -> Result<String, GenError> {
    let words: Vec<&str> = passage.split_whitespace().collect();
    let (start, end) = range;
    if start > end || end >= words.len() {
        return Err(GenError::InvalidRange {
            start,
            end,
            len: words.len(),
        });
    }
    let mut out: Vec<&str> = Vec::with_capacity(words.len() + 2);
    out.extend_from_slice(&words[..start]);
    out.push(HL);
    out.extend_from_slice(&words[start..=end]);
    out.push(HL);
    out.extend_from_slice(&words[end + 1..]);
    Ok(out.join(" "))
}

/// Build the inference prompt: three labeled lines with the target line's
/// value left empty for the model to fill in.
pub fn build_causal_prompt(
    kind: PromptKind,
    passage: &str,
    question: Option<&str>,
    answer: Option<&str>,
    answer_range: Option<(usize, usize)>,
) -> Result<String, GenError> {
    match kind {
        PromptKind::Qa => {
            let question = question.ok_or(GenError::MissingField {
                kind: "qa",
                field: "question",
            })?;
            Ok(format!("Context: {passage}\nQuestion: {question}\nAnswer:"))
        }
        PromptKind::Qg => {
            let answer = answer.ok_or(GenError::MissingField {
                kind: "qg",
                field: "answer",
            })?;
            Ok(format!("Context: {passage}\nAnswer: {answer}\nQuestion:"))
        }
        PromptKind::Hlqg => {
            let answer = answer.ok_or(GenError::MissingField {
                kind: "hlqg",
                field: "answer",
            })?;
            let range = answer_range.ok_or(GenError::MissingField {
                kind: "hlqg",
                field: "answer_range",
            })?;
            let highlighted = highlight_text(passage, range)?;
            Ok(format!(
                "Context: {highlighted}\nAnswer: {answer}\nQuestion:"
            ))
        }
    }
}

/// Build the training form of the prompt (target value filled in) and the
/// character range of the target section, i.e. everything after the final
/// label. Training losses are meant to cover only that range.
pub fn build_training_prompt(
    kind: PromptKind,
    passage: &str,
    question: Option<&str>,
    answer: Option<&str>,
    answer_range: Option<(usize, usize)>,
) -> Result<(String, std::ops::Range<usize>), GenError> {
    let prompt = build_causal_prompt(kind, passage, question, answer, answer_range)?;
    let target = match kind {
        PromptKind::Qa => answer.ok_or(GenError::MissingField {
            kind: "qa",
            field: "answer",
        })?,
        PromptKind::Qg | PromptKind::Hlqg => question.ok_or(GenError::MissingField {
            kind: kind.name(),
            field: "question",
        })?,
    };
    let full = format!("{prompt} {target}");
    let start = prompt.len() + 1;
    Ok((full, start..start + target.len()))
}

/// Tokenize a prompt for the scorer: whitespace-split within lines, with
/// an explicit `"\n"` token between lines so a newline can stop decoding.
pub fn prompt_tokens(prompt: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for (i, line) in prompt.lines().enumerate() {
        if i > 0 {
            tokens.push("\n".to_string());
        }
        tokens.extend(line.split_whitespace().map(str::to_string));
    }
    tokens
}

/// A decoded causal continuation plus its per-step trace.
#[derive(Debug, Clone)]
pub struct CausalOutput {
    /// The continuation tokens joined with single spaces, stop excluded.
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub steps: Vec<DecodeStep>,
}

/// Greedy left-to-right continuation: extend the prompt one argmax token
/// at a time until `stop` is produced or `max_len` tokens are out. Only
/// generated tokens must be in the vocabulary; the prompt itself is passed
/// through as plain token strings.
pub fn decode_causal(
    vocab: &Vocabulary,
    prompt: &str,
    scorer: &dyn Scorer,
    max_len: usize,
    stop: TokenId,
) -> Result<CausalOutput, GenError> {
    if max_len == 0 {
        return Err(GenError::ZeroMaxLen);
    }
    let mut input = prompt_tokens(prompt);
    let mut generated = Vec::new();
    let mut steps = Vec::new();
    while generated.len() < max_len {
        let scores = scorer.score(&input, ScorePosition::Next, vocab)?;
        if scores.len() != vocab.len() {
            return Err(GenError::ScorerWidth {
                expected: vocab.len(),
                got: scores.len(),
            });
        }
        let chosen = TokenId(argmax(&scores) as u32);
        steps.push(DecodeStep {
            input: input.clone(),
            chosen: vocab.surface(chosen).to_string(),
        });
        if chosen == stop {
            break;
        }
        generated.push(chosen);
        input.push(vocab.surface(chosen).to_string());
    }
    Ok(CausalOutput {
        text: vocab.surfaces(&generated).join(" "),
        tokens: generated,
        steps,
    })
}
