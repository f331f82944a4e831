//! Toolkit for building and evaluating extractive-QA corpora in the SQuAD
//! JSON format.
//!
//! The crate covers the full data path for a machine-translated QA corpus:
//!
//! * [`corpus`] — the SQuAD data model, parsing, canonical serialization,
//!   and extractive-contract validation.
//! * [`textnorm`] — offset-preserving tokenization, regex cleanup rules,
//!   dictionary lemmatization, and suffix-stripping stemming.
//! * [`align`] — the normalization cascade that resolves an independently
//!   translated answer to a character span of the translated passage.
//! * [`split`] — deterministic article-level train/dev/test splitting.
//! * [`qa_metrics`] — SQuAD-style Exact Match and token F1.
//! * [`qg_metrics`] — corpus BLEU-1..4, METEOR, and ROUGE-L.
//! * [`genloop`] — input assembly and greedy decoding state machines for
//!   span-extraction QA, masked sequential question generation, and
//!   prompt-based causal generation, driven by a pluggable scorer.

pub mod align;
pub mod corpus;
pub mod genloop;
pub mod qa_metrics;
pub mod qg_metrics;
pub mod split;
pub mod textnorm;
