//! Deterministic article-level shuffling and splitting, plus corpus
//! statistics.
//!
//! Splitting at article granularity keeps every QA pair of an article in
//! the same partition, so no passage leaks between train and test. The
//! permutation is fully specified for reproducibility across machines and
//! implementations: a ChaCha8 stream keyed by the 64-bit seed written
//! little-endian into the first 8 bytes of an otherwise zero 32-byte key,
//! driving a descending Fisher–Yates shuffle with `j = next_u64() % (i+1)`.
//! The permutation depends only on the seed and the article count, never on
//! article content.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Dataset;

/// Train/dev/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, dev: f64, test: f64, seed: u64) -> Result<Self, SplitError> {
        let spec = Self {
            train,
            dev,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        for f in [self.train, self.dev, self.test] {
            if !(0.0..=1.0).contains(&f) || !f.is_finite() {
                return Err(SplitError::BadFractions {
                    train: self.train,
                    dev: self.dev,
                    test: self.test,
                });
            }
        }
        if (self.train + self.dev + self.test - 1.0).abs() > 1e-9 {
            return Err(SplitError::BadFractions {
                train: self.train,
                dev: self.dev,
                test: self.test,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("fractions ({train}, {dev}, {test}) must lie in [0,1] and sum to 1")]
    BadFractions { train: f64, dev: f64, test: f64 },
    #[error("need at least 3 articles to split, got {0}")]
    TooFewArticles(usize),
}

/// The seeded permutation of `0..n` used by [`split_dataset`].
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Shuffle articles with the seeded permutation, then cut by cumulative
/// fractions: train takes `floor(n*f_train)` articles, dev takes
/// `floor(n*f_dev)`, test takes the rest. Same seed, same partition.
pub fn split_dataset(
    d: &Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset, Dataset), SplitError> {
    spec.validate()?;
    let n = d.articles.len();
    if n < 3 {
        return Err(SplitError::TooFewArticles(n));
    }
    let perm = seeded_permutation(n, spec.seed);
    let n_train = (n as f64 * spec.train).floor() as usize;
    let n_dev = (n as f64 * spec.dev).floor() as usize;

    let pick = |range: std::ops::Range<usize>| -> Dataset {
        Dataset::new(
            d.version.clone(),
            range.map(|i| d.articles[perm[i]].clone()).collect(),
        )
    };
    Ok((
        pick(0..n_train),
        pick(n_train..n_train + n_dev),
        pick(n_train + n_dev..n),
    ))
}

/// Corpus statistics: counts plus average whitespace-token lengths of
/// passages, questions, and answers. The answer average covers answerable
/// items only (first answer of each) and is absent when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub qa_pairs: usize,
    pub articles: usize,
    pub paragraphs: usize,
    pub avg_passage_words: Option<f64>,
    pub avg_question_words: Option<f64>,
    pub avg_answer_words: Option<f64>,
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn average(total: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| total as f64 / n as f64)
}

pub fn corpus_stats(d: &Dataset) -> CorpusStats {
    let mut paragraphs = 0usize;
    let mut passage_words = 0usize;
    let mut questions = 0usize;
    let mut question_words = 0usize;
    let mut answerable = 0usize;
    let mut answer_words = 0usize;
    for article in &d.articles {
        for paragraph in &article.paragraphs {
            paragraphs += 1;
            passage_words += word_count(&paragraph.context);
            for qa in &paragraph.qas {
                questions += 1;
                question_words += word_count(&qa.question);
                if !qa.is_impossible {
                    if let Some(first) = qa.answers.first() {
                        answerable += 1;
                        answer_words += word_count(&first.text);
                    }
                }
            }
        }
    }
    CorpusStats {
        qa_pairs: questions,
        articles: d.articles.len(),
        paragraphs,
        avg_passage_words: average(passage_words, paragraphs),
        avg_question_words: average(question_words, questions),
        avg_answer_words: average(answer_words, answerable),
    }
}
