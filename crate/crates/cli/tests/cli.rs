use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::Value;

fn fixtures() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures"].iter().collect()
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trialagent"))
        .args(args)
        .env_remove("CA_API_BASE")
        .env_remove("CA_API_KEY")
        .env_remove("CA_MODEL")
        .output()
        .expect("run trialagent")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| panic!("{e}: {}", stderr(output)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

/// Serves chat completions that always answer `reply`; returns the base URL.
fn fake_provider(reply: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut writer = stream;
                loop {
                    let mut length = 0;
                    let mut line = String::new();
                    loop {
                        line.clear();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            length = v.trim().parse().unwrap();
                        }
                        if line == "\r\n" {
                            break;
                        }
                    }
                    let mut body = vec![0; length];
                    reader.read_exact(&mut body).unwrap();
                    let payload = serde_json::json!({
                        "choices": [{"message": {"role": "assistant", "content": reply}}]
                    })
                    .to_string();
                    let response = format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
                        payload.len()
                    );
                    if writer.write_all(response.as_bytes()).is_err() {
                        return;
                    }
                }
            });
        }
    });
    base
}

#[test]
fn ingest_reports_rows_and_digests() {
    let output = run(&["ingest", "--trials", &fixture("data/history.csv"), "--drugbank", &fixture("data/drugbank.tsv")]);
    assert!(output.status.success(), "{}", stderr(&output));
    let manifest = json(&output);
    assert_eq!(manifest[0]["kind"], "trials");
    assert_eq!(manifest[0]["rows"], 8);
    assert_eq!(manifest[0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest[1]["rows"], 6);
}

#[test]
fn ingest_missing_column_is_a_usage_error_naming_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "t.csv", "trial_id,phase,drugs,diseases,label\nA,phase 1,x,y,1\n");
    let output = run(&["ingest", "--trials", &csv]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("criteria"), "{}", stderr(&output));
}

#[test]
fn lenient_ingest_skips_and_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "t.csv",
        "trial_id,phase,drugs,diseases,criteria,label\nA,phase 1,x,y,,1\nB,phase 1,,y,,0\nC,phase 2,z,w,,7\n",
    );
    assert_eq!(run(&["ingest", "--trials", &csv]).status.code(), Some(2));
    let output = run(&["ingest", "--lenient", "--trials", &csv]);
    assert!(output.status.success());
    let manifest = json(&output);
    assert_eq!(manifest[0]["rows"], 1);
    assert_eq!(manifest[0]["warnings"].as_array().unwrap().len(), 2);
}

#[test]
fn predict_without_cassette_file_is_a_usage_error() {
    let output = run(&["predict", "--trial", &fixture("case_study/trial.json"), "--cassette", "/nonexistent/c.json"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn predict_without_any_backend_is_a_usage_error() {
    let output = run(&["predict", "--trial", &fixture("case_study/trial.json")]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("CA_API_BASE"));
}

#[test]
fn predict_unwritable_output_is_a_usage_error() {
    let output = run(&[
        "predict",
        "--trial",
        &fixture("case_study/trial.json"),
        "--cassette",
        &fixture("cassettes/malformed_plan.json"),
        "--out",
        "/nonexistent/dir/result.json",
    ]);
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
}

#[test]
fn predict_writes_out_file_and_pretty_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let output = run(&[
        "predict",
        "--trial",
        &fixture("case_study/trial.json"),
        "--cassette",
        &fixture("cassettes/malformed_plan.json"),
        "--out",
        out.to_str().unwrap(),
        "--pretty",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(output.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("{\n"));
    let result: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(result["probability"], 0.3);
}

#[test]
fn replay_with_a_different_model_name_mismatches() {
    let output = run(&[
        "predict",
        "--trial",
        &fixture("case_study/trial.json"),
        "--cassette",
        &fixture("cassettes/malformed_plan.json"),
        "--model",
        "another-model",
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("replay"), "{}", stderr(&output));
}

#[test]
fn record_then_replay_round_trips() {
    let base = fake_provider("Short answer.\nPrediction: 0.6");
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("rec.json");
    let cassette = cassette.to_str().unwrap();
    let inline = [
        "predict", "--trial-id", "R1", "--drug", "aspirin", "--disease", "stroke", "--phase", "phase 3",
    ];

    let mut args = inline.to_vec();
    args.extend(["--backend", "record", "--cassette", cassette, "--api-base", &base]);
    let recorded = run(&args);
    assert!(recorded.status.success(), "{}", stderr(&recorded));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(cassette).unwrap()).unwrap();
    assert_eq!(saved.as_array().unwrap().len(), 5);

    let mut args = inline.to_vec();
    args.extend(["--cassette", cassette]);
    let replayed = run(&args);
    assert!(replayed.status.success(), "{}", stderr(&replayed));
    assert_eq!(recorded.stdout, replayed.stdout);
    assert_eq!(json(&replayed)["decision"], 1);
}

#[test]
fn live_backend_reads_the_endpoint_from_the_environment() {
    let base = fake_provider("Prediction: 0.2");
    let output = Command::new(env!("CARGO_BIN_EXE_trialagent"))
        .args(["predict", "--trial", &fixture("case_study/trial.json")])
        .env("CA_API_BASE", &base)
        .env_remove("CA_MODEL")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(json(&output)["probability"], 0.2);
}

#[test]
fn evaluate_counts_a_missing_cassette_as_one_failure() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["EV001", "EV002", "EV003"] {
        std::fs::copy(fixtures().join(format!("eval/cassettes/{id}.json")), dir.path().join(format!("{id}.json"))).unwrap();
    }
    let results = dir.path().join("results.jsonl");
    let output = run(&[
        "evaluate",
        "--trials",
        &fixture("eval/trials.csv"),
        "--cassette",
        dir.path().to_str().unwrap(),
        "--history",
        &fixture("data/history.csv"),
        "--enrollment-model",
        &fixture("data/enrollment_model.json"),
        "--results",
        results.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let metrics = json(&output);
    assert_eq!((metrics["n"].as_u64(), metrics["failures"].as_u64()), (Some(3), Some(1)));
    let lines: Vec<Value> =
        std::fs::read_to_string(&results).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["trial_id"], "EV004");
    assert!(lines[3]["error"].as_str().unwrap().contains("EV004.json"));
}

#[test]
fn evaluate_where_everything_fails_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&["evaluate", "--trials", &fixture("eval/trials.csv"), "--cassette", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn evaluate_unlabeled_trials_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "t.csv", "trial_id,phase,drugs,diseases,criteria,label\nA,phase 1,x,y,,\n");
    let output = run(&["evaluate", "--trials", &csv, "--cassette", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("no outcome label"));
}

#[test]
fn tool_run_reports_errors_with_exit_one() {
    let output = run(&["tool", "run", "retrieval_drugbank", "--arg", "drug_name=Nonexistium", "--drugbank", &fixture("data/drugbank.tsv")]);
    assert_eq!(output.status.code(), Some(1));
    let result = json(&output);
    assert_eq!(result["is_error"], true);
    assert!(result["content"].as_str().unwrap().contains("not found"));
}

#[test]
fn tool_run_hetionet_pretty_prints_paths() {
    let output = run(&[
        "tool",
        "run",
        "retrieval_hetionet",
        "--arg",
        "drug_name=Aggrenox capsule",
        "--arg",
        "disease_name=cerebrovascular accident",
        "--hetionet",
        &fixture("data/hetionet.tsv"),
        "--pretty",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.starts_with("Found 2 path(s)"), "{text}");
}

#[test]
fn tool_run_enrollment_needs_a_trial() {
    let output = run(&["tool", "run", "enrollment_prediction_model", "--enrollment-model", &fixture("data/enrollment_model.json")]);
    assert_eq!(output.status.code(), Some(2));
    let output = run(&[
        "tool",
        "run",
        "enrollment_prediction_model",
        "--trial",
        &fixture("case_study/trial.json"),
        "--enrollment-model",
        &fixture("data/enrollment_model.json"),
        "--pretty",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(String::from_utf8(output.stdout).unwrap().trim(), "Predicted enrollment failure rate: 0.3597");
}

#[test]
fn tool_list_names_all_five_tools() {
    let output = run(&["tool", "list"]);
    let schemas = json(&output);
    assert_eq!(schemas.as_array().unwrap().len(), 5);
}

#[test]
fn train_enrollment_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let output = run(&["train-enrollment", "--trials", &fixture("data/history.csv"), "--epochs", "50", "--out", model.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    let summary = json(&output);
    assert_eq!(summary["examples"], 8);
    assert_eq!(summary["label_source"], "outcome_label_proxy");

    // the trained model drives the enrollment tool
    let output = run(&[
        "tool",
        "run",
        "enrollment_prediction_model",
        "--trial",
        &fixture("case_study/trial.json"),
        "--enrollment-model",
        model.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
}

#[test]
fn train_enrollment_single_class_exits_one_and_empty_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let one_class = write(dir.path(), "one.csv", "trial_id,phase,drugs,diseases,criteria,label\nA,phase 1,x,y,,1\nB,phase 1,x,y,,1\n");
    let output = run(&["train-enrollment", "--trials", &one_class, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let empty = write(dir.path(), "none.csv", "trial_id,phase,drugs,diseases,criteria,label\nA,phase 1,x,y,,\n");
    let output = run(&["train-enrollment", "--trials", &empty, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn config_file_supplies_paths_relative_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("data/history.csv"), dir.path().join("history.csv")).unwrap();
    let config = write(dir.path(), "run.toml", "history = \"history.csv\"\n");
    let output = run(&["tool", "run", "disease_historical_statistics", "--arg", "disease_name=cerebrovascular accident", "--config", &config, "--pretty"]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(String::from_utf8(output.stdout).unwrap().starts_with("Historical failure rate 0.5 "));
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(run(&["evaluate", "--parallelism", "zero"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--parallelism", "0", "--trials", &fixture("eval/trials.csv")]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn tool_run_on_the_minimal_graph_renders_one_path() {
    let output = run(&[
        "tool",
        "run",
        "retrieval_hetionet",
        "--arg",
        "drug_name=Aspirin",
        "--arg",
        "disease_name=stroke",
        "--hetionet",
        &fixture("data/minimal_hetionet.tsv"),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let content = json(&output)["content"].as_str().unwrap().to_string();
    assert!(content.starts_with("Found 1 path(s)"), "{content}");
    assert!(content.contains("Aspirin(Compound) -[treats>]- stroke(Disease)"), "{content}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let ingest = || run(&["ingest", "--trials", &fixture("eval/trials.csv"), "--hetionet", &fixture("data/hetionet.tsv")]).stdout;
    assert_eq!(ingest(), ingest());

    let dir = tempfile::tempdir().unwrap();
    let train = |name: &str| {
        let out = dir.path().join(name);
        let output = run(&["train-enrollment", "--trials", &fixture("data/history.csv"), "--epochs", "40", "--out", out.to_str().unwrap()]);
        assert!(output.status.success(), "{}", stderr(&output));
        std::fs::read(out).unwrap()
    };
    assert_eq!(train("a.json"), train("b.json"));
}

#[test]
fn help_documents_precedence_and_exit_codes() {
    let help = String::from_utf8(run(&["--help"]).stdout).unwrap();
    assert!(help.contains("flags > environment > config file > defaults"), "{help}");
    assert!(help.contains("Exit status"));
}
