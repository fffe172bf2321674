use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use perceptkit_core::corpus::{Corpus, Item};
use perceptkit_core::metrics::{judgments_to_ndjson, Judgment, JudgmentSet};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/study1").join(name)
}

fn perceptkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perceptkit"))
        .args(args)
        .env_remove("PERCEPTKIT_SERVER")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = perceptkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn decode_fixture(out: &Path, extra: &[&str]) -> Value {
    let (plan, responses, corpus) = (fixture("plan.json"), fixture("responses.ndjson"), fixture("corpus.json"));
    let mut args = vec![
        "decode",
        "--plan",
        s(&plan),
        "--responses",
        s(&responses),
        "--corpus",
        s(&corpus),
        "-o",
        s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn decode_on_the_study1_fixture_reports_precision_recall_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let report = decode_fixture(dir.path(), &[]);
    for field in ["precision", "recall", "speedup"] {
        assert!(report[field].is_number(), "missing {field}: {report}");
    }
    // conventional 1.7s x 3 workers against 0.1s x 5 workers
    assert!((report["speedup"].as_f64().unwrap() - 1.7 * 3.0 / (0.1 * 5.0)).abs() < 1e-12);
    assert!(report["precision"].as_f64().unwrap() >= 0.95);

    let written = read_json(&dir.path().join("decode.json"));
    assert_eq!(written, report);
    // the fixture's own simulate run decoded the same data identically
    assert_eq!(written, read_json(&fixture("decode.json")));

    let ev = &report["evaluation"];
    let tp = ev["true_positives"].as_f64().unwrap();
    let fp = ev["false_positives"].as_f64().unwrap();
    let fn_ = ev["false_negatives"].as_f64().unwrap();
    assert_eq!(report["precision"].as_f64().unwrap(), tp / (tp + fp));
    assert_eq!(report["recall"].as_f64().unwrap(), tp / (tp + fn_));

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "decode");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["scores.csv", "decode.json"]);
    let scores = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert!(scores.starts_with("item_id,llr,posterior,predicted,is_positive\n"));
    assert_eq!(scores.lines().count(), 1001);
}

#[test]
fn fixed_threshold_flag_disables_tuning() {
    let dir = tempfile::tempdir().unwrap();
    let report = decode_fixture(dir.path(), &["--threshold", "0.5"]);
    assert_eq!(report["threshold"], 0.5);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["target_precision"], Value::Null);
    assert_eq!(manifest["config"]["decoder"]["threshold"], 0.5);
}

#[test]
fn hype_score_of_all_correct_evaluators_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sets: Vec<JudgmentSet> = (0..4)
        .map(|e| JudgmentSet {
            evaluator_id: format!("e{e}"),
            judgments: (0..100).map(|i| Judgment::new(format!("x{i}"), i % 2 == 0, i % 2 == 0)).collect(),
        })
        .collect();
    let path = dir.path().join("j.ndjson");
    std::fs::write(&path, judgments_to_ndjson(&sets)).unwrap();
    let out = dir.path().join("out");
    let score = ok(&["hype-score", "--judgments", s(&path), "--bootstrap-iters", "200", "-o", s(&out)]);
    assert_eq!(score["overall_error_pct"], 0.0);
    assert_eq!(score["fakes_error_pct"], 0.0);
    assert_eq!(score["reals_error_pct"], 0.0);
    assert_eq!((score["ci_lo"].as_f64(), score["ci_hi"].as_f64()), (Some(0.0), Some(0.0)));
    let csv = std::fs::read_to_string(out.join("per_evaluator.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let q = ok(&["qualify", "--judgments", s(&path), "-o", s(&dir.path().join("q"))]);
    assert_eq!((q["evaluators"].as_u64(), q["passed"].as_u64()), (Some(4), Some(4)));
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let out = perceptkit(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = perceptkit(&["decode", "--plan"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = perceptkit(&["bootstrap", "--scores", "/nonexistent/scores.txt", "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let one = dir.path().join("one.txt");
    std::fs::write(&one, "3.0\n").unwrap();
    let out = perceptkit(&["bootstrap", "--scores", s(&one), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

fn output_digests(dir: &Path) -> Value {
    read_json(&dir.join("manifest.json"))["outputs"].clone()
}

#[test]
fn simulate_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        ok(&["--jobs", jobs, "simulate", "--n-items", "400", "--seed", "11", "-o", s(&out)]);
        output_digests(&out)
    };
    let a = run("a", "1");
    let b = run("b", "4");
    assert_eq!(a, b);
    assert_eq!(a.as_array().unwrap().len(), 5);

    let out = dir.path().join("c");
    ok(&["simulate", "--n-items", "400", "--seed", "12", "-o", s(&out)]);
    assert_ne!(output_digests(&out), a);
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n_items": 300, "seed": 5, "redundancy": 3}"#).unwrap();
    let out = dir.path().join("o");
    let report = ok(&["simulate", "--config", s(&cfg), "--seed", "9", "-o", s(&out)]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["n_items"], 300);
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["redundancy"], 3);
    assert_eq!(m["config"]["positive_fraction"], 0.05);
    assert_eq!(m["seeds"]["master"], 9);
    assert_eq!(report["redundancy"], 3);
    assert_eq!(report["n_items"], 300);
}

#[test]
fn calibrate_recovers_the_simulated_delay() {
    let dir = tempfile::tempdir().unwrap();
    let (plan, responses) = (fixture("plan.json"), fixture("responses.ndjson"));
    let m = ok(&["calibrate", "--plan", s(&plan), "--responses", s(&responses), "-o", s(dir.path())]);
    assert!((m["mu_ms"].as_f64().unwrap() - 378.0).abs() < 40.0, "{m}");
    assert!(m["sigma_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(read_json(&dir.path().join("delay_model.json")), m);
}

#[test]
fn cascade_with_a_perfect_labeler() {
    let dir = tempfile::tempdir().unwrap();
    let items: Vec<Item> = (0..60)
        .map(|i| {
            let class = if i < 30 { "a" } else if i < 50 { "b" } else { "c" };
            Item::new(format!("i{i:02}"), format!("m/{i}")).with_class(class)
        })
        .collect();
    let corpus = dir.path().join("corpus.json");
    std::fs::write(&corpus, Corpus::new(items).unwrap().to_json()).unwrap();
    let out = dir.path().join("o");
    let r = ok(&["cascade", "--corpus", s(&corpus), "-o", s(&out)]);
    assert_eq!(r["class_order"], serde_json::json!(["a", "b", "c"]));
    // residual sizes 60, 30, 10
    assert_eq!(r["item_views"], 100);
    assert_eq!(r["worker_seconds"].as_f64().unwrap(), 100.0 * 0.1 * 5.0);
    assert_eq!(r["correct_assignments"], 60);
    assert_eq!(r["unassigned"], 0);
    let full = read_json(&out.join("cascade.json"));
    assert_eq!(full["assignments"].as_object().unwrap().len(), 60);
    assert_eq!(full["passes"].as_array().unwrap().len(), 3);
}

#[test]
fn staircase_sim_writes_trials_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok(&["staircase-sim", "--evaluators", "3", "--block-len", "40", "--blocks", "2", "--seed", "4", "-o", s(dir.path())]);
    assert_eq!(r["n_evaluators"], 3);
    let trials = std::fs::read_to_string(dir.path().join("trials.ndjson")).unwrap();
    assert_eq!(trials.lines().count(), 3 * 2 * 40);
    let score = read_json(&dir.path().join("time_score.json"));
    let ms = score["model_score_ms"].as_f64().unwrap();
    assert!((100.0..=1000.0).contains(&ms));
}

#[test]
fn reports_render_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("");
    let t1 = dir.path().join("t1");
    let rows = ok(&["report", "--table", "table1", "--input", &format!("All Concepts={}", s(&fx)), "-o", s(&t1)]);
    assert_eq!(rows[0]["task"], "All Concepts");
    assert_eq!(rows[0]["rsvp_time_s"], 0.1);
    assert!((rows[0]["speedup"].as_f64().unwrap() - 10.2).abs() < 1e-12);
    let csv = std::fs::read_to_string(t1.join("table1.csv")).unwrap();
    assert!(csv.starts_with("task,conv_time_s,conv_redundancy,rsvp_time_s,redundancy,precision,recall,speedup\n"));

    let weak = dir.path().join("weak");
    let strong = dir.path().join("strong");
    ok(&["hype-score", "--simulate", "6", "--bootstrap-iters", "100", "--seed", "1", "-o", s(&weak)]);
    let cfg = dir.path().join("guess.json");
    std::fs::write(&cfg, r#"{"evaluator": {"threshold_tau_ms": 300.0, "slope": 0.3, "guess_rate": 0.5, "lapse_rate": 0.0, "untimed_accuracy": 0.5}}"#).unwrap();
    ok(&["hype-score", "--config", s(&cfg), "--simulate", "6", "--bootstrap-iters", "100", "--seed", "1", "-o", s(&strong)]);
    let t3 = dir.path().join("t3");
    let rows = ok(&[
        "report",
        "--table",
        "table3",
        "--input",
        &format!("weak={}", s(&weak)),
        "--input",
        &format!("strong={}", s(&strong.join("score.json"))),
        "-o",
        s(&t3),
    ]);
    assert_eq!(rows[0]["model"], "strong");
    assert_eq!(rows[0]["rank"], 1);
    assert!(rows[0]["hype_inf_pct"].as_f64().unwrap() > rows[1]["hype_inf_pct"].as_f64().unwrap());
    assert!(std::fs::read_to_string(t3.join("table3.csv"))
        .unwrap()
        .starts_with("rank,model,hype_inf_pct,fakes_error_pct,reals_error_pct,std,ci_lo,ci_hi\n"));
}

async fn start_server() -> (String, tempfile::TempDir, tokio::sync::oneshot::Sender<()>) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(perceptkit_service::SessionStore::open(dir.path()).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(perceptkit_service::serve_with_shutdown(listener, store, async {
        let _ = rx.await;
    }));
    (base, dir, tx)
}

#[tokio::test(flavor = "multi_thread")]
async fn server_offload_matches_local_results() {
    let (base, _data, _stop) = start_server().await;
    let dir = tempfile::tempdir().unwrap();
    let (local, remote) = (dir.path().join("local"), dir.path().join("remote"));
    let remote_args = dir.path().to_path_buf();
    let base2 = base.clone();
    let (a, b) = tokio::task::spawn_blocking(move || {
        let a = decode_fixture(&local, &[]);
        let b = decode_fixture(&remote, &["--server", &base2]);
        (a, b)
    })
    .await
    .unwrap();
    assert_eq!(a, b);
    let m = read_json(&remote_args.join("remote/manifest.json"));
    assert_eq!(m["server"], base.as_str());
    assert_eq!(
        output_digests(&remote_args.join("local")),
        output_digests(&remote_args.join("remote"))
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn session_commands_drive_the_service() {
    let (base, _data, _stop) = start_server().await;
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    tokio::task::spawn_blocking(move || {
        let spec = root.join("spec.json");
        let images: Vec<Value> = (0..4)
            .map(|i| serde_json::json!({"item_id": format!("img{i}"), "media_ref": format!("m/{i}"), "is_fake": i % 2 == 0}))
            .collect();
        std::fs::write(&spec, serde_json::json!({"task_kind": "hype_inf", "images": images}).to_string()).unwrap();
        let session = ok(&["--server", &base, "session", "create", "--spec", s(&spec), "--participant", "w1"]);
        let id = session["id"].as_str().unwrap().to_string();

        let events: String = (0..4)
            .map(|i| {
                serde_json::json!({
                    "session_id": id, "seq": i + 1, "t_ms": 1000.0 * (i + 1) as f64, "kind": "judgment",
                    "payload": {"item_id": format!("img{i}"), "judged_fake": i % 2 == 0}
                })
                .to_string()
                    + "\n"
            })
            .collect();
        let ev = root.join("events.ndjson");
        std::fs::write(&ev, events).unwrap();
        let ack = ok(&["--server", &base, "session", "append", &id, "--events", s(&ev)]);
        assert_eq!(ack["last_seq"], 4);

        let view = ok(&["--server", &base, "session", "show", &id]);
        assert_eq!(view["progress"]["complete"], true);

        let out = root.join("export");
        let fin = ok(&["--server", &base, "session", "finalize", &id, "-o", s(&out)]);
        assert_eq!(fin["state"], "finalized");
        let judgments = out.join("judgments.ndjson");
        assert_eq!(std::fs::read_to_string(out.join("events.ndjson")).unwrap().lines().count(), 4);

        let list = ok(&["--server", &base, "session", "list"]);
        assert_eq!(list.as_array().unwrap().len(), 1);

        let score = ok(&["hype-score", "--judgments", s(&judgments), "--bootstrap-iters", "50", "-o", s(&root.join("score"))]);
        assert_eq!(score["overall_error_pct"], 0.0);

        let again = perceptkit(&["--server", &base, "session", "append", &id, "--events", s(&ev)]);
        assert_eq!(again.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&again.stderr).contains("finalized"));

        let no_server = perceptkit(&["session", "list"]);
        assert_eq!(no_server.status.code(), Some(1));
    })
    .await
    .unwrap();
}
