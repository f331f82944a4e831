//! SQuAD-format data model, parsing, canonical serialization, and
//! extractive-contract validation.
//!
//! The JSON schema is the usual one:
//!
//! ```json
//! {"version": "...", "data": [{"title": "...", "paragraphs": [
//!     {"context": "...", "qas": [{"id": "...", "question": "...",
//!      "is_impossible": false, "answers": [{"text": "...", "answer_start": 0}]}]}]}]}
//! ```
//!
//! `answer_start` is a 0-based *character* index into the paragraph context
//! (Unicode scalar values, not bytes). Unknown JSON keys are preserved on
//! parse and re-emitted on serialize, so the tooling is a safe pass-through
//! for extended schemas. Parsing checks structural invariants only; the
//! substring contract is checked separately by [`validate_extractive`] so
//! broken pre-alignment data can still be loaded for repair.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::textnorm::{char_len, slice_by_chars};

type Extra = Map<String, Value>;

/// A whole corpus: a version tag plus articles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: String,
    #[serde(rename = "data")]
    pub articles: Vec<Article>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<QaItem>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    /// Absent in SQuAD v1.1 files; defaults to answerable.
    #[serde(default)]
    pub is_impossible: bool,
    pub answers: Vec<AnswerSpan>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    /// 0-based character index into the owning paragraph's context.
    pub answer_start: usize,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Dataset {
    pub fn new(version: impl Into<String>, articles: Vec<Article>) -> Self {
        Self {
            version: version.into(),
            articles,
            extra: Extra::new(),
        }
    }

    /// Total number of QA items across all articles.
    pub fn qa_count(&self) -> usize {
        self.articles
            .iter()
            .flat_map(|a| &a.paragraphs)
            .map(|p| p.qas.len())
            .sum()
    }

    pub fn article_count(&self) -> usize {
        self.articles.len()
    }
}

impl Article {
    pub fn new(title: impl Into<String>, paragraphs: Vec<Paragraph>) -> Self {
        Self {
            title: title.into(),
            paragraphs,
            extra: Extra::new(),
        }
    }
}

impl Paragraph {
    pub fn new(context: impl Into<String>, qas: Vec<QaItem>) -> Self {
        Self {
            context: context.into(),
            qas,
            extra: Extra::new(),
        }
    }
}

impl QaItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answers: Vec<AnswerSpan>,
    ) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            is_impossible: false,
            answers,
            extra: Extra::new(),
        }
    }
}

impl AnswerSpan {
    pub fn new(text: impl Into<String>, answer_start: usize) -> Self {
        Self {
            text: text.into(),
            answer_start,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    /// Malformed JSON; offsets point at the first byte that failed.
    #[error("malformed JSON at byte {byte_offset} (line {line}, column {column}): {message}")]
    Json {
        byte_offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    /// Well-formed JSON that does not fit the schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    /// Structural invariant violations (duplicate ids, empty titles, ...).
    #[error("structural invariants violated:\n{}", .0.join("\n"))]
    Structure(Vec<String>),
}

/// Parse a SQuAD-format JSON document.
///
/// Checks every structural invariant except the answer-substring contract,
/// which [`validate_extractive`] reports separately so that intentionally
/// broken (pre-alignment) data can be loaded for repair.
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset, CorpusError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let dataset: Dataset = match serde_path_to_error::deserialize(&mut de) {
        Ok(d) => d,
        Err(err) => return Err(classify_json_error(bytes, err)),
    };
    check_structure(&dataset)?;
    Ok(dataset)
}

fn classify_json_error(
    bytes: &[u8],
    err: serde_path_to_error::Error<serde_json::Error>,
) -> CorpusError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    use serde_json::error::Category;
    match inner.classify() {
        Category::Syntax | Category::Eof | Category::Io => {
            let (line, column) = (inner.line(), inner.column());
            CorpusError::Json {
                byte_offset: byte_offset_of(bytes, line, column),
                line,
                column,
                message: strip_position_suffix(&inner.to_string()),
            }
        }
        Category::Data => {
            let message = strip_position_suffix(&inner.to_string());
            // "missing field `answers`" points at the owning object; extend
            // the path with the field name so the report names the key.
            let path = match message.strip_prefix("missing field `") {
                Some(rest) => match rest.split('`').next() {
                    Some(field) if path == "." => field.to_string(),
                    Some(field) => format!("{path}.{field}"),
                    None => path,
                },
                None => path,
            };
            CorpusError::Schema { path, message }
        }
    }
}

/// serde_json reports 1-based line and column; recover the byte offset.
fn byte_offset_of(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen_lines = 1;
    let mut line_start = 0;
    if line > 1 {
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'\n' {
                seen_lines += 1;
                if seen_lines == line {
                    line_start = i + 1;
                    break;
                }
            }
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn strip_position_suffix(msg: &str) -> String {
    match msg.find(" at line ") {
        Some(pos) => msg[..pos].to_string(),
        None => msg.to_string(),
    }
}

fn check_structure(d: &Dataset) -> Result<(), CorpusError> {
    let mut problems = Vec::new();
    let mut titles = std::collections::HashSet::new();
    let mut ids = std::collections::HashSet::new();
    for article in &d.articles {
        if article.title.is_empty() {
            problems.push("article with empty title".to_string());
        }
        if !titles.insert(&article.title) {
            problems.push(format!("duplicate article title {:?}", article.title));
        }
        for paragraph in &article.paragraphs {
            if paragraph.context.is_empty() {
                problems.push(format!("empty context in article {:?}", article.title));
            }
            for qa in &paragraph.qas {
                if !ids.insert(&qa.id) {
                    problems.push(format!("duplicate QA id {:?}", qa.id));
                }
                if !qa.is_impossible && qa.answers.is_empty() {
                    problems.push(format!("answerable QA {:?} has no answers", qa.id));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::Structure(problems))
    }
}

/// Serialize to canonical UTF-8 JSON: compact, keys in declaration order
/// (`version`, `data`; `title`, `paragraphs`; `context`, `qas`; `id`,
/// `question`, `is_impossible`, `answers`; `text`, `answer_start`), with
/// preserved unknown keys re-emitted after the known ones in sorted order.
/// Two serializations of equal datasets are byte-identical.
pub fn serialize_dataset(d: &Dataset) -> Vec<u8> {
    serde_json::to_vec(d).expect("dataset serialization is total")
}

/// One failed answer-substring check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub qa_id: String,
    /// What the answer span claims the text is.
    pub expected: String,
    /// What `context[answer_start .. answer_start+len(text)]` actually is
    /// (clamped to the context end when the span overruns it).
    pub actual: String,
    pub answer_start: usize,
    pub article_title: String,
}

/// Check the extractive-QA contract: every answer must be a substring of
/// its passage at the recorded character offset. Returns one violation per
/// failing answer span; an empty result means the dataset is
/// extractive-valid.
pub fn validate_extractive(d: &Dataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    for article in &d.articles {
        for paragraph in &article.paragraphs {
            let context_len = char_len(&paragraph.context);
            for qa in &paragraph.qas {
                for answer in &qa.answers {
                    let len = char_len(&answer.text);
                    let start = answer.answer_start;
                    let end = (start + len).min(context_len);
                    let actual = slice_by_chars(&paragraph.context, start.min(context_len), end)
                        .unwrap_or("")
                        .to_string();
                    if start + len > context_len || actual != answer.text {
                        violations.push(Violation {
                            qa_id: qa.id.clone(),
                            expected: answer.text.clone(),
                            actual,
                            answer_start: start,
                            article_title: article.title.clone(),
                        });
                    }
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "version": "v1",
        "data": [{
            "title": "Kongo",
            "paragraphs": [{
                "context": "Kinshasa on Kongon demokraattisen tasavallan pääkaupunki.",
                "qas": [{
                    "id": "q1",
                    "question": "Minkä maan pääkaupunki Kinshasa on?",
                    "answers": [{"text": "Kinshasa", "answer_start": 0}]
                }]
            }]
        }]
    }"#;

    #[test]
    fn parse_minimal() {
        let d = parse_dataset(MINIMAL.as_bytes()).unwrap();
        assert_eq!(d.articles.len(), 1);
        assert_eq!(d.articles[0].paragraphs.len(), 1);
        assert_eq!(d.articles[0].paragraphs[0].qas.len(), 1);
        assert!(!d.articles[0].paragraphs[0].qas[0].is_impossible);
    }

    #[test]
    fn parse_impossible_item() {
        let json = r#"{"version":"v2","data":[{"title":"t","paragraphs":[{"context":"c",
            "qas":[{"id":"q1","question":"?","is_impossible":true,"answers":[]}]}]}]}"#;
        let d = parse_dataset(json.as_bytes()).unwrap();
        assert!(d.articles[0].paragraphs[0].qas[0].is_impossible);
        assert!(d.articles[0].paragraphs[0].qas[0].answers.is_empty());
    }

    #[test]
    fn missing_answers_is_schema_error_with_path() {
        let json = r#"{"version":"v1","data":[{"title":"t","paragraphs":[{"context":"c",
            "qas":[{"id":"q1","question":"?"}]}]}]}"#;
        match parse_dataset(json.as_bytes()).unwrap_err() {
            CorpusError::Schema { path, .. } => {
                assert_eq!(path, "data[0].paragraphs[0].qas[0].answers");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let json = "{\"version\": \"v1\",\n  \"data\": [}";
        match parse_dataset(json.as_bytes()).unwrap_err() {
            CorpusError::Json { byte_offset, .. } => {
                assert_eq!(&json[byte_offset..byte_offset + 1], "}");
            }
            other => panic!("expected json error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let json = r#"{"version":"v1","data":[{"title":"t","paragraphs":[{"context":"c",
            "qas":[{"id":"q1","question":"?","answers":[{"text":"c","answer_start":0}]},
                   {"id":"q1","question":"??","answers":[{"text":"c","answer_start":0}]}]}]}]}"#;
        match parse_dataset(json.as_bytes()).unwrap_err() {
            CorpusError::Structure(problems) => {
                assert!(problems.iter().any(|p| p.contains("duplicate QA id")));
            }
            other => panic!("expected structure error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_unknown_keys() {
        let json = r#"{"version":"v1","extra_top":true,"data":[{"title":"t","custom":7,
            "paragraphs":[{"context":"c","qas":[{"id":"q1","question":"?","answers":
            [{"text":"c","answer_start":0,"score":0.5}],"note":"x"}]}]}]}"#;
        let d = parse_dataset(json.as_bytes()).unwrap();
        assert_eq!(d.extra["extra_top"], Value::Bool(true));
        let bytes = serialize_dataset(&d);
        let d2 = parse_dataset(&bytes).unwrap();
        assert_eq!(d, d2);
        assert_eq!(bytes, serialize_dataset(&d2));
    }

    #[test]
    fn empty_article_list_serializes() {
        let d = Dataset::new("v1", vec![]);
        assert_eq!(serialize_dataset(&d), br#"{"version":"v1","data":[]}"#);
    }

    #[test]
    fn validate_clean_dataset_is_empty() {
        let d = parse_dataset(MINIMAL.as_bytes()).unwrap();
        assert!(validate_extractive(&d).is_empty());
    }

    #[test]
    fn validate_reports_nominative_answer_not_in_passage() {
        // Translated answer in nominative case vs. genitive in the passage.
        let d = Dataset::new(
            "v1",
            vec![Article::new(
                "Kongo",
                vec![Paragraph::new(
                    "Pääkaupunki Brazzaville sijaitsee vastapäätä Kongon demokraattisen tasavallan pääkaupunkia Kinshasaa.",
                    vec![QaItem::new(
                        "q1",
                        "Minkä maan pääkaupunki Kinshasa on?",
                        vec![AnswerSpan::new("Kongon demokraattinen tasavalta", 45)],
                    )],
                )],
            )],
        );
        let violations = validate_extractive(&d);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].qa_id, "q1");
        assert_eq!(violations[0].expected, "Kongon demokraattinen tasavalta");
    }

    #[test]
    fn validate_off_by_one_shows_shifted_slice() {
        let context = "Kinshasa on pääkaupunki.";
        let d = Dataset::new(
            "v1",
            vec![Article::new(
                "t",
                vec![Paragraph::new(
                    context,
                    vec![QaItem::new(
                        "q1",
                        "?",
                        vec![AnswerSpan::new("pääkaupunki", 13)],
                    )],
                )],
            )],
        );
        let violations = validate_extractive(&d);
        assert_eq!(violations.len(), 1);
        // The reported slice is exactly context[13..13+11] by characters.
        assert_eq!(violations[0].actual, "ääkaupunki.");
    }

    #[test]
    fn validate_out_of_range_span() {
        let d = Dataset::new(
            "v1",
            vec![Article::new(
                "t",
                vec![Paragraph::new(
                    "abc",
                    vec![QaItem::new("q1", "?", vec![AnswerSpan::new("abc", 2)])],
                )],
            )],
        );
        let violations = validate_extractive(&d);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].actual, "c");
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let answer = ("[a-zä]{1,6}", 0usize..40).prop_map(|(text, start)| AnswerSpan {
            text,
            answer_start: start,
            extra: Extra::new(),
        });
        let qa = (
            "[a-z0-9]{8}",
            "\\PC{0,20}",
            prop::collection::vec(answer, 0..3),
            any::<bool>(),
        )
            .prop_map(|(id, question, answers, impossible)| QaItem {
                id,
                question,
                is_impossible: impossible || answers.is_empty(),
                answers,
                extra: Extra::new(),
            });
        let paragraph =
            ("\\PC{1,60}", prop::collection::vec(qa, 0..3)).prop_map(|(context, qas)| Paragraph {
                context,
                qas,
                extra: Extra::new(),
            });
        let article = ("[A-Za-z]{1,12}", prop::collection::vec(paragraph, 0..3)).prop_map(
            |(title, paragraphs)| Article {
                title,
                paragraphs,
                extra: Extra::new(),
            },
        );
        ("v[0-9]", prop::collection::vec(article, 0..4)).prop_map(|(version, mut articles)| {
            // Force the uniqueness invariants the generator cannot promise.
            for (i, a) in articles.iter_mut().enumerate() {
                a.title = format!("{}-{i}", a.title);
                for (j, p) in a.paragraphs.iter_mut().enumerate() {
                    for (k, q) in p.qas.iter_mut().enumerate() {
                        q.id = format!("{}-{i}-{j}-{k}", q.id);
                    }
                }
            }
            Dataset {
                version,
                articles,
                extra: Extra::new(),
            }
        })
    }

    proptest! {
        #[test]
        fn round_trip_identity(d in arb_dataset()) {
            let bytes = serialize_dataset(&d);
            let parsed = parse_dataset(&bytes).unwrap();
            prop_assert_eq!(&parsed, &d);
            prop_assert_eq!(serialize_dataset(&parsed), bytes);
        }

        #[test]
        fn validate_agrees_with_brute_force(d in arb_dataset()) {
            let violations = validate_extractive(&d);
            let mut expected = 0usize;
            for a in &d.articles {
                for p in &a.paragraphs {
                    let ctx: Vec<char> = p.context.chars().collect();
                    for qa in &p.qas {
                        for ans in &qa.answers {
                            let text: Vec<char> = ans.text.chars().collect();
                            let ok = ans.answer_start + text.len() <= ctx.len()
                                && ctx[ans.answer_start..ans.answer_start + text.len()] == text[..];
                            if !ok {
                                expected += 1;
                            }
                        }
                    }
                }
            }
            prop_assert_eq!(violations.len(), expected);
        }
    }
}
