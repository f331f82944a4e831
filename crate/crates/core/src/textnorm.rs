//! Offset-preserving tokenization, regex-rule normalization, dictionary
//! lemmatization, and suffix-stripping stemming.
//!
//! Everything in this module works in *character* (Unicode scalar value)
//! indices, never bytes, so spans survive round-trips through non-ASCII
//! text. Tokens remember where they came from, which lets a match found on
//! lemmas or stems be mapped back to a character span of the original text.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

const BUNDLED_LEMMA_TSV: &str = include_str!("../resources/lemma_fi.tsv");
const BUNDLED_STEM_RULES: &str = include_str!("../resources/stem_rules_fi.tsv");

/// Errors raised while loading normalization resources.
#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("lemma dictionary line {line}: expected \"surface<TAB>lemma\"")]
    BadLemmaEntry { line: usize },
    #[error("stem rule line {line}: expected \"suffix<TAB>min_stem_len\"")]
    BadStemRule { line: usize },
    #[error("regex rule line {line}: expected \"pattern<TAB>replacement<TAB>description\"")]
    BadRegexRule { line: usize },
    #[error("regex rule line {line}: pattern does not compile: {source}")]
    BadPattern {
        line: usize,
        #[source]
        source: regex::Error,
    },
}

/// Slice `s` by character indices, returning `None` when out of range.
pub fn slice_by_chars(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut byte_start = None;
    let mut byte_end = None;
    let mut count = 0;
    for (b, _) in s.char_indices() {
        if count == start {
            byte_start = Some(b);
        }
        if count == end {
            byte_end = Some(b);
        }
        count += 1;
    }
    if count == start {
        byte_start = Some(s.len());
    }
    if count == end {
        byte_end = Some(s.len());
    }
    Some(&s[byte_start?..byte_end?])
}

/// Number of characters (Unicode scalar values) in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Punctuation predicate used by the tokenizer and the QA answer
/// normalizer: ASCII punctuation plus the typographic marks that show up
/// in machine-translated text.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“'
                | '”'
                | '„'
                | '‘'
                | '’'
                | '‚'
                | '«'
                | '»'
                | '–'
                | '—'
                | '‒'
                | '―'
                | '¿'
                | '¡'
                | '·'
                | '−'
        )
}

/// A token together with its character offsets into the text it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub surface: String,
    /// Character index of the first character.
    pub start: usize,
    /// Character index one past the last character.
    pub end: usize,
}

/// Split `text` into [`TokenSpan`]s.
///
/// Rules: split on Unicode whitespace; detach leading and trailing
/// punctuation characters as single-character tokens; keep interior
/// punctuation attached; keep a trailing `.` attached when it directly
/// follows a digit, so ordinal dates like `21.` stay one token.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        emit_chunk(&chars, chunk_start, i, &mut tokens);
    }
    tokens
}

fn emit_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<TokenSpan>) {
    let mut core_start = start;
    while core_start < end && is_punctuation(chars[core_start]) {
        out.push(TokenSpan {
            surface: chars[core_start].to_string(),
            start: core_start,
            end: core_start + 1,
        });
        core_start += 1;
    }
    let mut core_end = end;
    while core_end > core_start {
        let c = chars[core_end - 1];
        if !is_punctuation(c) {
            break;
        }
        if c == '.' && core_end - 1 > core_start && chars[core_end - 2].is_ascii_digit() {
            break;
        }
        core_end -= 1;
    }
    if core_end > core_start {
        out.push(TokenSpan {
            surface: chars[core_start..core_end].iter().collect(),
            start: core_start,
            end: core_end,
        });
    }
    for k in core_end..end {
        out.push(TokenSpan {
            surface: chars[k].to_string(),
            start: k,
            end: k + 1,
        });
    }
}

/// One compiled normalization rule: a pattern, its replacement (capture
/// groups `$1`..`$9` allowed), and a short description for reports.
#[derive(Debug, Clone)]
pub struct RegexRule {
    pub pattern: Regex,
    pub replacement: String,
    pub description: String,
}

impl RegexRule {
    pub fn new(pattern: &str, replacement: &str, description: &str) -> Result<Self, regex::Error> {
        Ok(Self {
            pattern: Regex::new(pattern)?,
            replacement: replacement.to_string(),
            description: description.to_string(),
        })
    }
}

/// Version tag of the bundled rule set; bump when the rules change.
pub const DEFAULT_REGEX_RULES_VERSION: &str = "v1";

/// The bundled cleanup rules, applied in order:
/// 1. curly/angled double quotes to `"`
/// 2. curly single quotes to `'`
/// 3. dash variants to `-`
/// 4. collapse whitespace runs to a single space
/// 5. drop whitespace before `, . : ; ? !`
/// 6. restore the space after a comma that lost it in rule 5 (commas
///    between digits are decimal separators and stay untouched)
/// 7. trim leading/trailing whitespace
///
/// Rule 5 only deletes and rule 6's inserted space never lands before
/// punctuation, so one pass reaches a fixpoint: the set is idempotent.
pub fn default_regex_rules() -> &'static [RegexRule] {
    static RULES: OnceLock<Vec<RegexRule>> = OnceLock::new();
    RULES.get_or_init(|| {
        vec![
            RegexRule::new("[“”„«»]", "\"", "double quotes to ASCII").unwrap(),
            RegexRule::new("[‘’‚]", "'", "single quotes to ASCII").unwrap(),
            RegexRule::new("[–—‒―−]", "-", "dashes to ASCII hyphen").unwrap(),
            RegexRule::new(r"\s+", " ", "collapse whitespace runs").unwrap(),
            RegexRule::new(r"\s+([,.:;?!])", "$1", "no space before punctuation").unwrap(),
            RegexRule::new(r",([^\s\d,])", ", $1", "space after comma").unwrap(),
            RegexRule::new(r"^\s+|\s+$", "", "trim").unwrap(),
        ]
    })
}

/// Parse rules from text, one per line: `pattern<TAB>replacement<TAB>description`.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_regex_rules(src: &str) -> Result<Vec<RegexRule>, ResourceError> {
    let mut rules = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let mut parts = raw.splitn(3, '\t');
        let pattern = parts.next().ok_or(ResourceError::BadRegexRule { line })?;
        let replacement = parts.next().ok_or(ResourceError::BadRegexRule { line })?;
        let description = parts.next().unwrap_or("");
        let rule = RegexRule::new(pattern, replacement, description)
            .map_err(|source| ResourceError::BadPattern { line, source })?;
        rules.push(rule);
    }
    Ok(rules)
}

/// Apply `rules` in order, each globally.
pub fn apply_regex_rules(text: &str, rules: &[RegexRule]) -> String {
    let mut current = text.to_string();
    for rule in rules {
        current = rule
            .pattern
            .replace_all(&current, rule.replacement.as_str())
            .into_owned();
    }
    current
}

/// The result of [`apply_regex_rules_mapped`]: normalized text plus, for
/// every normalized character, the character range of the original text it
/// was derived from. Spans found in the normalized text can be projected
/// back onto the original.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    pub text: String,
    ranges: Vec<(usize, usize)>,
    original_char_len: usize,
}

impl NormalizedText {
    /// Map a character span `[start, end)` of the normalized text back to a
    /// character span of the original text. Replacement characters carry the
    /// full original range of the match that produced them, so projected
    /// spans can be slightly wider than the matched text but never narrower.
    pub fn project_span(&self, start: usize, end: usize) -> (usize, usize) {
        if start >= end {
            let p = self
                .ranges
                .get(start)
                .map(|r| r.0)
                .unwrap_or(self.original_char_len);
            return (p, p);
        }
        (self.ranges[start].0, self.ranges[end - 1].1)
    }
}

/// Like [`apply_regex_rules`], but tracks where every output character came
/// from. The two routes produce identical text.
pub fn apply_regex_rules_mapped(text: &str, rules: &[RegexRule]) -> NormalizedText {
    let mut cur_text = text.to_string();
    let mut cur_ranges: Vec<(usize, usize)> = (0..char_len(text)).map(|i| (i, i + 1)).collect();
    let original_char_len = cur_ranges.len();

    for rule in rules {
        let byte_to_char: HashMap<usize, usize> = cur_text
            .char_indices()
            .enumerate()
            .map(|(ci, (b, _))| (b, ci))
            .chain(std::iter::once((cur_text.len(), char_len(&cur_text))))
            .collect();

        let mut next_text = String::new();
        let mut next_ranges = Vec::with_capacity(cur_ranges.len());
        let mut copied_until = 0; // char index into cur_text

        let cur_chars: Vec<char> = cur_text.chars().collect();
        for caps in rule.pattern.captures_iter(&cur_text) {
            let mat = caps.get(0).unwrap();
            let m_start = byte_to_char[&mat.start()];
            let m_end = byte_to_char[&mat.end()];
            for k in copied_until..m_start {
                next_text.push(cur_chars[k]);
                next_ranges.push(cur_ranges[k]);
            }
            let mut expanded = String::new();
            caps.expand(&rule.replacement, &mut expanded);
            let span = if m_end > m_start {
                (cur_ranges[m_start].0, cur_ranges[m_end - 1].1)
            } else {
                let p = cur_ranges
                    .get(m_start)
                    .map(|r| r.0)
                    .unwrap_or(original_char_len);
                (p, p)
            };
            for c in expanded.chars() {
                next_text.push(c);
                next_ranges.push(span);
            }
            copied_until = m_end;
        }
        for k in copied_until..cur_chars.len() {
            next_text.push(cur_chars[k]);
            next_ranges.push(cur_ranges[k]);
        }
        cur_text = next_text;
        cur_ranges = next_ranges;
    }

    NormalizedText {
        text: cur_text,
        ranges: cur_ranges,
        original_char_len,
    }
}

/// Case-folded surface form to lemma lookup. Absent keys fall back to the
/// case-folded input, which keeps the pipeline total even when the
/// dictionary does not know a word (proper nouns, mostly).
#[derive(Debug, Clone, Default)]
pub struct LemmaDictionary {
    entries: HashMap<String, String>,
}

impl LemmaDictionary {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        Self {
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.into().to_lowercase(), v.into().to_lowercase()))
                .collect(),
        }
    }

    /// Parse a TSV dictionary: `surface<TAB>lemma`, one entry per line,
    /// `#` comments and blank lines allowed. Entries are case-folded.
    pub fn from_tsv(src: &str) -> Result<Self, ResourceError> {
        let mut entries = HashMap::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = raw.splitn(2, '\t');
            let surface = parts
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or(ResourceError::BadLemmaEntry { line })?;
            let lemma = parts
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or(ResourceError::BadLemmaEntry { line })?;
            entries.insert(surface.to_lowercase(), lemma.to_lowercase());
        }
        Ok(Self { entries })
    }

    /// The dictionary shipped with the crate: common Finnish inflected
    /// forms. Small on purpose; swap in a real morphological analyzer's
    /// output for production corpora.
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_LEMMA_TSV).expect("bundled lemma dictionary is well-formed")
    }

    pub fn lemma_of(&self, surface: &str) -> String {
        let folded = surface.to_lowercase();
        self.entries.get(&folded).cloned().unwrap_or(folded)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One lemma per token; unknown tokens pass through case-folded.
pub fn lemmatize(tokens: &[TokenSpan], dict: &LemmaDictionary) -> Vec<String> {
    tokens.iter().map(|t| dict.lemma_of(&t.surface)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StemRule {
    pub suffix: String,
    pub min_stem_len: usize,
}

/// Ordered suffix-stripping rules. Longest suffixes win; the input order
/// breaks ties among equal lengths.
#[derive(Debug, Clone)]
pub struct StemRuleTable {
    rules: Vec<StemRule>,
    pub default_min_stem_len: usize,
}

impl StemRuleTable {
    pub fn new<I, S>(rules: I, default_min_stem_len: usize) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut rules: Vec<StemRule> = rules
            .into_iter()
            .map(|(suffix, min_stem_len)| StemRule {
                suffix: suffix.into(),
                min_stem_len,
            })
            .collect();
        rules.sort_by_key(|r| std::cmp::Reverse(char_len(&r.suffix)));
        Self {
            rules,
            default_min_stem_len,
        }
    }

    /// Parse rules from text: `suffix<TAB>min_stem_len` per line; the second
    /// column may be omitted and defaults to `default_min_stem_len`.
    pub fn from_rules_text(src: &str, default_min_stem_len: usize) -> Result<Self, ResourceError> {
        let mut rules = Vec::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = raw.splitn(2, '\t');
            let suffix = parts
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or(ResourceError::BadStemRule { line })?;
            let min = match parts.next().map(str::trim).filter(|s| !s.is_empty()) {
                Some(s) => s
                    .parse::<usize>()
                    .ok()
                    .filter(|&m| m >= 1)
                    .ok_or(ResourceError::BadStemRule { line })?,
                None => default_min_stem_len,
            };
            rules.push((suffix.to_string(), min));
        }
        Ok(Self::new(rules, default_min_stem_len))
    }

    /// The bundled table: common Finnish case endings with a minimum stem
    /// length of 2.
    pub fn bundled() -> Self {
        Self::from_rules_text(BUNDLED_STEM_RULES, 2).expect("bundled stem rules are well-formed")
    }

    pub fn rules(&self) -> &[StemRule] {
        &self.rules
    }
}

/// Case-fold, then strip the first applicable suffix (longest first) whose
/// removal leaves at least `min_stem_len` characters. Single pass; the
/// result is always a prefix of the case-folded input.
pub fn stem(token: &str, table: &StemRuleTable) -> String {
    let folded = token.to_lowercase();
    let folded_len = char_len(&folded);
    for rule in &table.rules {
        let suffix_len = char_len(&rule.suffix);
        if folded_len >= suffix_len
            && folded.ends_with(rule.suffix.as_str())
            && folded_len - suffix_len >= rule.min_stem_len
        {
            return folded[..folded.len() - rule.suffix.len()].to_string();
        }
    }
    folded
}
