//! End-to-end tests driving the `qakit` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qakit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qakit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

/// One parallel item per cascade step, in step order.
const FIVE_STEP_ITEMS: &str = concat!(
    r#"{"id":"step-direct","title":"Kongo","context_src":"Kinshasa is the capital of the Congo.","context_tr":"Kinshasa on Kongon pääkaupunki.","question_tr":"Mikä on Kongon pääkaupunki?","answer_src":"Kinshasa","answer_src_start":0,"answer_tr":"Kinshasa"}"#,
    "\n",
    r#"{"id":"step-regex","title":"Kalevala","context_src":"He said \"Kalevala\" is the national epic.","context_tr":"Hän sanoi ”Kalevala” olevan kansalliseepos.","question_tr":"Mikä on kansalliseepos?","answer_src":"\"Kalevala\"","answer_src_start":8,"answer_tr":"\"Kalevala\""}"#,
    "\n",
    r#"{"id":"step-lemma","title":"Kongo","context_src":"The capital, Brazzaville, is located immediately across from Kinshasa, the capital of the Democratic Republic of the Congo","context_tr":"Pääkaupunki Brazzaville sijaitsee vastapäätä Kongon demokraattisen tasavallan pääkaupunkia Kinshasaa.","question_tr":"Minkä maan pääkaupunki Kinshasa on?","answer_src":"Democratic Republic of the Congo","answer_src_start":90,"answer_tr":"Kongon demokraattinen tasavalta"}"#,
    "\n",
    r#"{"id":"step-stem","title":"Helsinki","context_src":"The train arrived from Helsinki late at night.","context_tr":"Juna saapui Helsingistä myöhään illalla.","question_tr":"Mistä juna saapui?","answer_src":"Helsinki","answer_src_start":23,"answer_tr":"Helsingissä"}"#,
    "\n",
    r#"{"id":"step-source","title":"Elokuvat","context_src":"In 2008 the movie The Dark Knight premiered in the United States.","context_tr":"Vuonna 2008 elokuva The Dark Knight sai ensi-iltansa Yhdysvalloissa.","question_tr":"Mikä elokuva sai ensi-iltansa vuonna 2008?","answer_src":"The Dark Knight","answer_src_start":18,"answer_tr":"Pimeä ritari"}"#,
    "\n",
);

#[test]
fn align_resolves_one_item_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("items.jsonl");
    let out = dir.path().join("aligned.json");
    write(&input, FIVE_STEP_ITEMS);

    let output = qakit(&[
        "align",
        "--in",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");

    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("aligned.stats.json")).unwrap())
            .unwrap();
    for step in ["direct", "regex", "lemma", "stem", "source_answer"] {
        assert_eq!(
            stats["resolved_by_step"][step], 1,
            "step {step} in {stats}"
        );
    }
    assert_eq!(stats["total"], 5);
    assert_eq!(stats["discarded"], 0);

    // The produced dataset satisfies the extractive contract.
    let validate = qakit(&["validate", "--in", out.to_str().unwrap()]);
    assert!(validate.status.success(), "{validate:?}");

    // Outcomes: one line per item, in input order.
    let outcomes = fs::read_to_string(dir.path().join("aligned.outcomes.jsonl")).unwrap();
    assert_eq!(outcomes.lines().count(), 5);
    let first: serde_json::Value = serde_json::from_str(outcomes.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], "step-direct");
    assert_eq!(first["step"], "direct");
}

const MISMATCH_DATASET: &str = r#"{
  "version": "v1.1",
  "data": [{
    "title": "Kongon demokraattinen tasavalta",
    "paragraphs": [{
      "context": "Pääkaupunki Brazzaville sijaitsee Kongo-joen varrella maan eteläosassa, vastapäätä Kongon demokraattisen tasavallan pääkaupunkia Kinshasaa.",
      "qas": [{
        "id": "q1",
        "question": "Minkä maan pääkaupunki Kinshasa on?",
        "answers": [{"text": "Kongon demokraattinen tasavalta", "answer_start": 84}]
      }]
    }]
  }]
}"#;

#[test]
fn validate_reports_translation_mismatch_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("broken.json");
    write(&input, MISMATCH_DATASET);

    let output = qakit(&["validate", "--in", input.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let violations = stdout_json(&output);
    assert_eq!(violations.as_array().unwrap().len(), 1);
    assert_eq!(violations[0]["qa_id"], "q1");
    assert_eq!(violations[0]["expected"], "Kongon demokraattinen tasavalta");
}

fn ten_article_dataset() -> String {
    let articles: Vec<String> = (0..10)
        .map(|i| {
            format!(
                r#"{{"title":"artikkeli-{i}","paragraphs":[{{"context":"kappale {i} tekstiä","qas":[{{"id":"q-{i}","question":"mikä {i}?","answers":[{{"text":"kappale","answer_start":0}}]}}]}}]}}"#
            )
        })
        .collect();
    format!(r#"{{"version":"v1","data":[{}]}}"#, articles.join(","))
}

#[test]
fn split_writes_three_disjoint_files_plus_stats() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corpus.json");
    write(&input, &ten_article_dataset());
    let base = dir.path().join("out");

    let output = qakit(&[
        "split",
        "--in",
        input.to_str().unwrap(),
        "--out",
        base.to_str().unwrap(),
        "--fractions",
        "0.8,0.1,0.1",
        "--seed",
        "13",
    ]);
    assert!(output.status.success(), "{output:?}");

    let mut titles = std::collections::HashSet::new();
    let counts: Vec<usize> = ["train", "dev", "test"]
        .iter()
        .map(|split| {
            let path = dir.path().join(format!("out-{split}.json"));
            let parsed: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
            let data = parsed["data"].as_array().unwrap();
            for a in data {
                assert!(titles.insert(a["title"].as_str().unwrap().to_string()));
            }
            data.len()
        })
        .collect();
    assert_eq!(counts, vec![8, 1, 1]);
    assert_eq!(titles.len(), 10);
    assert!(dir.path().join("out-stats.json").exists());

    // Same seed, same partition bytes.
    let rerun_base = dir.path().join("rerun");
    qakit(&[
        "split",
        "--in",
        input.to_str().unwrap(),
        "--out",
        rerun_base.to_str().unwrap(),
        "--fractions",
        "0.8,0.1,0.1",
        "--seed",
        "13",
    ]);
    for split in ["train", "dev", "test"] {
        let a = fs::read(dir.path().join(format!("out-{split}.json"))).unwrap();
        let b = fs::read(dir.path().join(format!("rerun-{split}.json"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn stats_reports_hand_computed_averages() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.json");
    write(
        &input,
        r#"{"version":"v1","data":[{"title":"t","paragraphs":[{"context":"a b c","qas":[{"id":"q1","question":"x y","answers":[{"text":"c","answer_start":4}]}]}]}]}"#,
    );
    let output = qakit(&["stats", "--in", input.to_str().unwrap()]);
    assert!(output.status.success());
    let stats = stdout_json(&output);
    assert_eq!(stats["qa_pairs"], 1);
    assert_eq!(stats["avg_passage_words"], 3.0);
    assert_eq!(stats["avg_question_words"], 2.0);
    assert_eq!(stats["avg_answer_words"], 1.0);
}

#[test]
fn eval_qa_perfect_predictions_score_100() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.json");
    let preds = dir.path().join("preds.json");
    write(
        &gold,
        r#"{"version":"v1","data":[{"title":"t","paragraphs":[{"context":"maalla liikkumiseen ja muuta","qas":[
            {"id":"q1","question":"Mihin evät eivät sovellu?","answers":[{"text":"maalla liikkumiseen","answer_start":0}]},
            {"id":"q2","question":"Mitä muuta?","answers":[{"text":"muuta","answer_start":23}]}]}]}]}"#,
    );
    write(
        &preds,
        r#"{"q1": "maalla liikkumiseen.", "q2": "muuta"}"#,
    );
    let output = qakit(&[
        "eval-qa",
        "--in",
        gold.to_str().unwrap(),
        "--pred",
        preds.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let score = stdout_json(&output);
    assert_eq!(score["exact_match"], 100.0);
    assert_eq!(score["f1"], 100.0);
}

#[test]
fn eval_qa_missing_prediction_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.json");
    let preds = dir.path().join("preds.json");
    write(
        &gold,
        r#"{"version":"v1","data":[{"title":"t","paragraphs":[{"context":"a b","qas":[{"id":"q1","question":"?","answers":[{"text":"a","answer_start":0}]}]}]}]}"#,
    );
    write(&preds, r#"{}"#);
    let output = qakit(&[
        "eval-qa",
        "--in",
        gold.to_str().unwrap(),
        "--pred",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("q1"));
}

#[test]
fn eval_qg_identity_pairs_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pairs.jsonl");
    write(
        &input,
        concat!(
            r#"{"id":"a","candidate":"Kuinka pitkiksi jättiläismetsäkarjut voivat kasvaa?","references":["Kuinka pitkiksi jättiläismetsäkarjut voivat kasvaa?"]}"#,
            "\n"
        ),
    );
    let output = qakit(&["eval-qg", "--in", input.to_str().unwrap()]);
    assert!(output.status.success(), "{output:?}");
    let score = stdout_json(&output);
    assert_eq!(score["bleu_1"], 1.0);
    assert_eq!(score["bleu_4"], 1.0);
    assert_eq!(score["rouge_l"], 1.0);
    assert!(score["meteor"].as_f64().unwrap() > 0.99);
}

#[test]
fn gen_hlsqg_with_stub_scorer_decodes_question() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("requests.jsonl");
    let trace = dir.path().join("trace.jsonl");
    write(
        &input,
        concat!(
            r#"{"id":"g1","kind":"hlsqg","passage":"Kinshasa on Kongon pääkaupunki.","answer_start":0,"answer_end":0,"stub":["Minkä","maan","pääkaupunki","Kinshasa","on","?","[SEP]"]}"#,
            "\n"
        ),
    );
    let output = qakit(&[
        "gen",
        "--in",
        input.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let response = stdout_json(&output);
    assert_eq!(response["question"], "Minkä maan pääkaupunki Kinshasa on ?");

    let trace_text = fs::read_to_string(&trace).unwrap();
    assert_eq!(trace_text.lines().count(), 7);
    for line in trace_text.lines() {
        let step: serde_json::Value = serde_json::from_str(line).unwrap();
        let input = step["input"].as_array().unwrap();
        assert_eq!(input.last().unwrap(), "[MASK]");
    }
}

#[test]
fn gen_builds_causal_prompts_and_continuations() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("requests.jsonl");
    write(
        &input,
        concat!(
            r#"{"id":"p1","kind":"qa","passage":"Hylkeet ovat sileitä.","question":"Millaisia hylkeet ovat?"}"#,
            "\n",
            r#"{"id":"p2","kind":"qa","passage":"Hylkeet ovat sileitä.","question":"Millaisia hylkeet ovat?","stub":["sileitä","\n"]}"#,
            "\n",
            r#"{"id":"p3","kind":"hlqg","passage":"Ne kasvavat 210 senttimetriä pitkiksi.","answer":"210 senttimetriä","answer_start":2,"answer_end":3}"#,
            "\n"
        ),
    );
    let output = qakit(&["gen", "--in", input.to_str().unwrap()]);
    assert!(output.status.success(), "{output:?}");
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&output.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        lines[0]["prompt"],
        "Context: Hylkeet ovat sileitä.\nQuestion: Millaisia hylkeet ovat?\nAnswer:"
    );
    assert_eq!(lines[1]["continuation"], "sileitä");
    assert_eq!(
        lines[2]["prompt"],
        "Context: Ne kasvavat [HL] 210 senttimetriä [HL] pitkiksi.\nAnswer: 210 senttimetriä\nQuestion:"
    );
}

#[test]
fn gen_qa_span_uses_external_scores() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("requests.jsonl");
    // Input assembles to [CLS] p0 p1 p2 [SEP] q0 -> 6 positions.
    write(
        &input,
        concat!(
            r#"{"id":"s1","kind":"qa_span","passage":"evät ovat heikot","question":"millaiset?","start_scores":[9.0,0.1,0.8,0.1,9.0,0.1],"end_scores":[9.0,0.1,0.1,0.9,9.0,0.1]}"#,
            "\n"
        ),
    );
    let output = qakit(&["gen", "--in", input.to_str().unwrap()]);
    assert!(output.status.success(), "{output:?}");
    let response = stdout_json(&output);
    assert_eq!(response["span"], serde_json::json!([2, 3]));
    assert_eq!(response["answer"], "ovat heikot");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corpus.json");
    write(&input, &ten_article_dataset());

    // Malformed --fractions.
    let output = qakit(&[
        "split",
        "--in",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--fractions",
        "0.8,0.2",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["kind"], "usage");

    // Missing input file.
    let output = qakit(&["stats", "--in", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));

    // Unknown subcommand (clap).
    let output = qakit(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn align_does_not_mutate_its_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("items.jsonl");
    write(&input, FIVE_STEP_ITEMS);
    let before = fs::read(&input).unwrap();
    qakit(&[
        "align",
        "--in",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("aligned.json").to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&input).unwrap(), before);
}

#[test]
fn gen_exec_scorer_speaks_the_adapter_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let vocab_path = dir.path().join("vocab.txt");
    // Control tokens are prepended by the CLI; the file lists the rest.
    write(&vocab_path, "kinshasa\non\nmikä\n?\n");

    // External scorer: replays a fixed script, one-hot over the vocabulary
    // it loads from the same file (controls first, same order as the CLI).
    let scorer_path = dir.path().join("scorer.py");
    write(
        &scorer_path,
        r#"import json, sys
vocab = ["[CLS]", "[SEP]", "[MASK]", "[HL]", "[PAD]"]
vocab += [l.rstrip("\n") for l in open(sys.argv[1]) if l.strip()]
script = ["mikä", "on", "?", "[SEP]"]
step = 0
for line in sys.stdin:
    request = json.loads(line)
    assert request["position"] == "mask"
    assert request["tokens"].count("[MASK]") == 1
    scores = [0.0] * len(vocab)
    scores[vocab.index(script[min(step, len(script) - 1)])] = 1.0
    step += 1
    print(json.dumps({"scores": scores}), flush=True)
"#,
    );

    let input = dir.path().join("requests.jsonl");
    write(
        &input,
        concat!(
            r#"{"id":"x1","kind":"hlsqg","passage":"kinshasa on","answer_start":0,"answer_end":0}"#,
            "\n"
        ),
    );
    let output = qakit(&[
        "gen",
        "--in",
        input.to_str().unwrap(),
        "--scorer",
        &format!("exec:python3 {} {}", scorer_path.display(), vocab_path.display()),
        "--vocab",
        vocab_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let response = stdout_json(&output);
    assert_eq!(response["question"], "mikä on ?");
}

#[test]
fn gen_exec_scorer_without_vocab_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("requests.jsonl");
    write(&input, "{\"kind\":\"hlsqg\",\"passage\":\"a\",\"answer_start\":0,\"answer_end\":0}\n");
    let output = qakit(&[
        "gen",
        "--in",
        input.to_str().unwrap(),
        "--scorer",
        "exec:cat",
    ]);
    assert_eq!(output.status.code(), Some(2));
}
