//! `qakit` — command-line front end for the corpus toolkit.
//!
//! Subcommands: `align`, `validate`, `split`, `stats`, `eval-qa`,
//! `eval-qg`, `gen`. All reports are machine-readable JSON; errors go to
//! stderr as single-line JSON. Exit codes: 0 success, 1 validation/data
//! failures, 2 usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use qakit_core::align::{align_dataset, outcomes_to_jsonl, parse_parallel_jsonl, AlignResources};
use qakit_core::corpus::{parse_dataset, serialize_dataset, validate_extractive};
use qakit_core::genloop::{
    build_causal_prompt, build_qa_input, decode_causal, decode_hlsqg, extract_answer_span_for_input,
    highlight, DecodeStep, ProcessScorer, PromptKind, Scorer, StubScorer, Vocabulary,
};
use qakit_core::qa_metrics::{evaluate_qa, parse_predictions, QaEvalOptions};
use qakit_core::qg_metrics::{evaluate_qg, parse_qg_jsonl, QgParams};
use qakit_core::split::{corpus_stats, split_dataset, SplitSpec};
use qakit_core::textnorm::{parse_regex_rules, LemmaDictionary, StemRuleTable};

#[derive(Parser)]
#[command(name = "qakit", version, about = "SQuAD-format QA corpus toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align translated answers to passage spans and emit a SQuAD dataset.
    Align(AlignArgs),
    /// Check the extractive contract of a SQuAD dataset.
    Validate(IoArgs),
    /// Shuffle articles and split into train/dev/test files.
    Split(SplitArgs),
    /// Corpus statistics: counts and average word lengths.
    Stats(IoArgs),
    /// Exact Match / token F1 of predictions against a gold dataset.
    EvalQa(EvalQaArgs),
    /// BLEU-1..4, METEOR, ROUGE-L of candidates against references.
    EvalQg(EvalQgArgs),
    /// Build prompts and run greedy decoding with a pluggable scorer.
    Gen(GenArgs),
}

#[derive(Args)]
struct ResourceArgs {
    /// Lemma dictionary TSV (surface<TAB>lemma); bundled default.
    #[arg(long)]
    lemma_dict: Option<PathBuf>,
    /// Stem rules (suffix<TAB>min_stem_len); bundled default.
    #[arg(long)]
    stem_rules: Option<PathBuf>,
    /// Regex rules (pattern<TAB>replacement<TAB>description); bundled default.
    #[arg(long)]
    regex_rules: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    /// Parallel items, JSON Lines.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output SQuAD JSON; outcomes and stats land next to it as
    /// <out>.outcomes.jsonl and <out>.stats.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    resources: ResourceArgs,
}

#[derive(Args)]
struct IoArgs {
    /// SQuAD JSON input.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// SQuAD JSON input.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output base path; writes <out>-train.json, <out>-dev.json,
    /// <out>-test.json and <out>-stats.json.
    #[arg(long)]
    out: PathBuf,
    /// Train,dev,test fractions summing to 1.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    fractions: String,
    /// Shuffle seed.
    #[arg(long, default_value_t = 13)]
    seed: u64,
}

#[derive(Args)]
struct EvalQaArgs {
    /// Gold SQuAD JSON.
    #[arg(long = "in")]
    input: PathBuf,
    /// Predictions: one JSON object mapping QA id to answer string.
    #[arg(long)]
    pred: PathBuf,
    /// Score unanswerable items too (empty prediction = correct no-answer).
    #[arg(long)]
    include_unanswerable: bool,
    /// Comma-separated tokens to drop after normalization.
    #[arg(long)]
    stop_tokens: Option<String>,
}

#[derive(Args)]
struct EvalQgArgs {
    /// Pairs as JSON Lines: {"id", "candidate", "references": [...]}.
    #[arg(long = "in")]
    input: PathBuf,
    /// Stem rules for METEOR's stem stage; bundled default.
    #[arg(long)]
    stem_rules: Option<PathBuf>,
    /// JSON file overriding metric parameters
    /// (rouge_beta, meteor_alpha, meteor_gamma, meteor_theta).
    #[arg(long)]
    metric_params: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Requests as JSON Lines; see the README for the request schema.
    #[arg(long = "in")]
    input: PathBuf,
    /// Responses JSONL; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// "stub" (per-request stub tokens) or "exec:CMD" (adapter protocol
    /// over the child's stdin/stdout).
    #[arg(long, default_value = "stub")]
    scorer: String,
    /// Vocabulary file for exec scorers, one token per line; control
    /// tokens are prepended in fixed order.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Maximum generated tokens; defaults to 64 for question decoding and
    /// 32 for causal continuations.
    #[arg(long)]
    max_len: Option<usize>,
    /// Maximum span length for qa_span requests.
    #[arg(long, default_value_t = 30)]
    max_answer_len: usize,
    /// Write decode traces (one step per line) here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn emit(&self) -> ExitCode {
        let (kind, message, code) = match self {
            Failure::Usage(m) => ("usage", m, 2),
            Failure::Data(m) => ("data", m, 1),
        };
        eprintln!("{}", serde_json::json!({"error": message, "kind": kind}));
        ExitCode::from(code)
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Failure::Usage(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_resources(args: &ResourceArgs) -> Result<AlignResources, Failure> {
    let mut resources = AlignResources::bundled();
    if let Some(path) = &args.lemma_dict {
        resources.lemmas = LemmaDictionary::from_tsv(&read_file(path)?).map_err(usage)?;
    }
    if let Some(path) = &args.stem_rules {
        resources.stems = StemRuleTable::from_rules_text(&read_file(path)?, 2).map_err(usage)?;
    }
    if let Some(path) = &args.regex_rules {
        resources.rules = parse_regex_rules(&read_file(path)?).map_err(usage)?;
    }
    Ok(resources)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(failure) => failure.emit(),
    }
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Align(args) => cmd_align(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Split(args) => cmd_split(args),
        Command::Stats(args) => cmd_stats(args),
        Command::EvalQa(args) => cmd_eval_qa(args),
        Command::EvalQg(args) => cmd_eval_qg(args),
        Command::Gen(args) => cmd_gen(args),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_align(args: AlignArgs) -> Result<ExitCode, Failure> {
    let resources = load_resources(&args.resources)?;
    let items = parse_parallel_jsonl(&read_file(&args.input)?).map_err(data)?;
    let (dataset, outcomes, stats) = align_dataset(&items, &resources).map_err(data)?;
    write_file(&args.out, &serialize_dataset(&dataset))?;
    write_file(
        &sibling(&args.out, ".outcomes.jsonl"),
        outcomes_to_jsonl(&outcomes).as_bytes(),
    )?;
    write_file(
        &sibling(&args.out, ".stats.json"),
        serde_json::to_string_pretty(&stats.report())
            .unwrap()
            .as_bytes(),
    )?;
    println!("{}", stats.report());
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: IoArgs) -> Result<ExitCode, Failure> {
    let dataset = parse_dataset(&read_bytes(&args.input)?).map_err(data)?;
    let violations = validate_extractive(&dataset);
    println!("{}", serde_json::to_string(&violations).unwrap());
    if violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Failure::Usage(format!(
            "--fractions expects three comma-separated numbers, got {s:?}"
        )));
    }
    let mut values = [0.0; 3];
    for (v, p) in values.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse::<f64>()
            .map_err(|e| Failure::Usage(format!("bad fraction {p:?}: {e}")))?;
    }
    Ok((values[0], values[1], values[2]))
}

fn cmd_split(args: SplitArgs) -> Result<ExitCode, Failure> {
    let (train_f, dev_f, test_f) = parse_fractions(&args.fractions)?;
    let spec = SplitSpec::new(train_f, dev_f, test_f, args.seed).map_err(usage)?;
    let dataset = parse_dataset(&read_bytes(&args.input)?).map_err(data)?;
    let (train, dev, test) = split_dataset(&dataset, &spec).map_err(data)?;

    let base = args.out.to_string_lossy();
    let with_suffix = |suffix: &str| PathBuf::from(format!("{base}{suffix}"));
    write_file(&with_suffix("-train.json"), &serialize_dataset(&train))?;
    write_file(&with_suffix("-dev.json"), &serialize_dataset(&dev))?;
    write_file(&with_suffix("-test.json"), &serialize_dataset(&test))?;
    let stats = serde_json::json!({
        "train": corpus_stats(&train),
        "dev": corpus_stats(&dev),
        "test": corpus_stats(&test),
    });
    let pretty = serde_json::to_string_pretty(&stats).unwrap();
    write_file(&with_suffix("-stats.json"), pretty.as_bytes())?;
    println!("{stats}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(args: IoArgs) -> Result<ExitCode, Failure> {
    let dataset = parse_dataset(&read_bytes(&args.input)?).map_err(data)?;
    println!("{}", serde_json::to_string(&corpus_stats(&dataset)).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval_qa(args: EvalQaArgs) -> Result<ExitCode, Failure> {
    let gold = parse_dataset(&read_bytes(&args.input)?).map_err(data)?;
    let preds = parse_predictions(&read_file(&args.pred)?).map_err(data)?;
    let options = QaEvalOptions {
        stop_tokens: args
            .stop_tokens
            .map(|s| s.split(',').map(|t| t.trim().to_lowercase()).collect())
            .unwrap_or_default(),
        include_unanswerable: args.include_unanswerable,
    };
    let score = evaluate_qa(&preds, &gold, &options).map_err(data)?;
    println!("{}", score.report());
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize, Default)]
struct PartialQgParams {
    rouge_beta: Option<f64>,
    meteor_alpha: Option<f64>,
    meteor_gamma: Option<f64>,
    meteor_theta: Option<f64>,
}

fn cmd_eval_qg(args: EvalQgArgs) -> Result<ExitCode, Failure> {
    let pairs = parse_qg_jsonl(&read_file(&args.input)?).map_err(data)?;
    let stems = match &args.stem_rules {
        Some(path) => StemRuleTable::from_rules_text(&read_file(path)?, 2).map_err(usage)?,
        None => StemRuleTable::bundled(),
    };
    let mut params = QgParams::default();
    if let Some(path) = &args.metric_params {
        let overrides: PartialQgParams = serde_json::from_str(&read_file(path)?).map_err(usage)?;
        params.rouge_beta = overrides.rouge_beta.unwrap_or(params.rouge_beta);
        params.meteor_alpha = overrides.meteor_alpha.unwrap_or(params.meteor_alpha);
        params.meteor_gamma = overrides.meteor_gamma.unwrap_or(params.meteor_gamma);
        params.meteor_theta = overrides.meteor_theta.unwrap_or(params.meteor_theta);
    }
    let score = evaluate_qg(&pairs, &stems, &params).map_err(data)?;
    println!("{}", serde_json::to_string(&score).unwrap());
    Ok(ExitCode::SUCCESS)
}

/// One `gen` request. `kind` selects the shape:
/// - "hlsqg": passage + answer_start/answer_end (whitespace-token indices),
///   decoded with the masked sequential loop;
/// - "qa" | "qg" | "hlqg": causal prompt building, decoded when a scorer
///   applies ("qa" needs question; "qg"/"hlqg" need answer, "hlqg" also the
///   token range);
/// - "qa_span": passage + question + externally produced start/end scores
///   over the assembled input, answered by the best valid span.
#[derive(Deserialize)]
struct GenRequest {
    #[serde(default)]
    id: Option<String>,
    kind: String,
    passage: String,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    answer_start: Option<usize>,
    #[serde(default)]
    answer_end: Option<usize>,
    #[serde(default)]
    stub: Option<Vec<String>>,
    #[serde(default)]
    start_scores: Option<Vec<f64>>,
    #[serde(default)]
    end_scores: Option<Vec<f64>>,
    #[serde(default)]
    max_len: Option<usize>,
}

enum ScorerChoice {
    Stub,
    Exec(ProcessScorer),
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Failure> {
    let scorer_choice = if args.scorer == "stub" {
        ScorerChoice::Stub
    } else if let Some(cmd) = args.scorer.strip_prefix("exec:") {
        ScorerChoice::Exec(ProcessScorer::spawn(cmd).map_err(usage)?)
    } else {
        return Err(Failure::Usage(format!(
            "--scorer must be \"stub\" or \"exec:CMD\", got {:?}",
            args.scorer
        )));
    };
    let exec_vocab = match (&scorer_choice, &args.vocab) {
        (ScorerChoice::Exec(_), Some(path)) => Some(Vocabulary::with_words(
            read_file(path)?.lines().map(str::to_string),
        )),
        (ScorerChoice::Exec(_), None) => {
            return Err(Failure::Usage(
                "--vocab is required with an exec scorer".to_string(),
            ))
        }
        _ => None,
    };

    let mut responses = Vec::new();
    let mut traces: Vec<serde_json::Value> = Vec::new();
    for (idx, raw) in read_file(&args.input)?.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let request: GenRequest = serde_json::from_str(raw)
            .map_err(|e| Failure::Data(format!("line {}: {e}", idx + 1)))?;
        let id = request.id.clone().unwrap_or_else(|| format!("{}", idx + 1));
        let (response, steps) =
            handle_gen_request(&request, &id, &scorer_choice, exec_vocab.as_ref(), &args)
                .map_err(|e| Failure::Data(format!("request {id}: {e}")))?;
        responses.push(response);
        for (step_idx, step) in steps.iter().enumerate() {
            traces.push(serde_json::json!({
                "id": id,
                "step": step_idx,
                "input": step.input,
                "chosen": step.chosen,
            }));
        }
    }

    let mut out = String::new();
    for response in &responses {
        out.push_str(&response.to_string());
        out.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    if let Some(path) = &args.trace {
        let mut trace_out = String::new();
        for t in &traces {
            trace_out.push_str(&t.to_string());
            trace_out.push('\n');
        }
        write_file(path, trace_out.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn handle_gen_request(
    request: &GenRequest,
    id: &str,
    scorer_choice: &ScorerChoice,
    exec_vocab: Option<&Vocabulary>,
    args: &GenArgs,
) -> Result<(serde_json::Value, Vec<DecodeStep>), String> {
    let question_max_len = request
        .max_len
        .or(args.max_len)
        .unwrap_or(qakit_core::genloop::DEFAULT_QUESTION_MAX_LEN);
    let continuation_max_len = request
        .max_len
        .or(args.max_len)
        .unwrap_or(qakit_core::genloop::DEFAULT_CONTINUATION_MAX_LEN);
    let passage_words: Vec<String> = request
        .passage
        .split_whitespace()
        .map(str::to_string)
        .collect();

    // The stub vocabulary covers everything a request can mention.
    let build_vocab = || -> Vocabulary {
        let mut words = passage_words.clone();
        words.push("\n".to_string());
        for text in [&request.question, &request.answer].into_iter().flatten() {
            words.extend(text.split_whitespace().map(str::to_string));
        }
        if let Some(stub) = &request.stub {
            words.extend(stub.iter().cloned());
        }
        Vocabulary::with_words(words)
    };
    let owned_vocab;
    let vocab: &Vocabulary = match exec_vocab {
        Some(v) => v,
        None => {
            owned_vocab = build_vocab();
            &owned_vocab
        }
    };
    let stub_scorer;
    let scorer: Option<&dyn Scorer> = match scorer_choice {
        ScorerChoice::Exec(process) => Some(process),
        ScorerChoice::Stub => match &request.stub {
            Some(tokens) => {
                stub_scorer = StubScorer::new(tokens.clone());
                Some(&stub_scorer)
            }
            None => None,
        },
    };

    match request.kind.as_str() {
        "hlsqg" => {
            let (start, end) = (
                request.answer_start.ok_or("hlsqg requires answer_start")?,
                request.answer_end.ok_or("hlsqg requires answer_end")?,
            );
            let passage_ids: Vec<_> = passage_words
                .iter()
                .map(|w| {
                    vocab
                        .token_id(w)
                        .ok_or(format!("token {w:?} not in vocabulary"))
                })
                .collect::<Result<_, _>>()?;
            let highlighted =
                highlight(vocab, &passage_ids, (start, end)).map_err(|e| e.to_string())?;
            let scorer = scorer.ok_or("hlsqg decoding needs a scorer (stub tokens or exec)")?;
            let decoded =
                decode_hlsqg(vocab, &highlighted, scorer, question_max_len).map_err(|e| e.to_string())?;
            let question = vocab.surfaces(&decoded.tokens).join(" ");
            Ok((
                serde_json::json!({"id": id, "kind": "hlsqg", "question": question}),
                decoded.steps,
            ))
        }
        kind @ ("qa" | "qg" | "hlqg") => {
            let prompt_kind = match kind {
                "qa" => PromptKind::Qa,
                "qg" => PromptKind::Qg,
                _ => PromptKind::Hlqg,
            };
            let range = match (request.answer_start, request.answer_end) {
                (Some(s), Some(e)) => Some((s, e)),
                _ => None,
            };
            let prompt = build_causal_prompt(
                prompt_kind,
                &request.passage,
                request.question.as_deref(),
                request.answer.as_deref(),
                range,
            )
            .map_err(|e| e.to_string())?;
            match scorer {
                Some(scorer) => {
                    let stop = vocab
                        .token_id("\n")
                        .ok_or("vocabulary lacks the newline stop token")?;
                    let decoded = decode_causal(vocab, &prompt, scorer, continuation_max_len, stop)
                        .map_err(|e| e.to_string())?;
                    Ok((
                        serde_json::json!({
                            "id": id, "kind": kind,
                            "prompt": prompt,
                            "continuation": decoded.text,
                        }),
                        decoded.steps,
                    ))
                }
                None => Ok((
                    serde_json::json!({"id": id, "kind": kind, "prompt": prompt}),
                    Vec::new(),
                )),
            }
        }
        "qa_span" => {
            let question = request
                .question
                .as_deref()
                .ok_or("qa_span requires question")?;
            let start_scores = request
                .start_scores
                .as_deref()
                .ok_or("qa_span requires start_scores")?;
            let end_scores = request
                .end_scores
                .as_deref()
                .ok_or("qa_span requires end_scores")?;
            let question_words: Vec<String> =
                question.split_whitespace().map(str::to_string).collect();
            let mut words = passage_words.clone();
            words.extend(question_words.iter().cloned());
            let local_vocab = Vocabulary::with_words(words);
            let to_ids = |ws: &[String]| -> Vec<_> {
                ws.iter()
                    .map(|w| local_vocab.token_id(w).unwrap())
                    .collect()
            };
            let input = build_qa_input(
                &local_vocab,
                &to_ids(&passage_words),
                &to_ids(&question_words),
            );
            if start_scores.len() != input.len() || end_scores.len() != input.len() {
                return Err(format!(
                    "expected {} scores per side (assembled input length), got {}/{}",
                    input.len(),
                    start_scores.len(),
                    end_scores.len()
                ));
            }
            let (s, e) = extract_answer_span_for_input(
                &local_vocab,
                &input,
                start_scores,
                end_scores,
                args.max_answer_len,
            )
            .map_err(|e| e.to_string())?;
            let answer = local_vocab.surfaces(&input[s..=e]).join(" ");
            Ok((
                serde_json::json!({
                    "id": id, "kind": "qa_span",
                    "input": local_vocab.surfaces(&input),
                    "span": [s, e],
                    "answer": answer,
                }),
                Vec::new(),
            ))
        }
        other => Err(format!("unknown request kind {other:?}")),
    }
}
