use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

fn docasd(args: &[&str]) -> Output {
    docasd_env(args, &[])
}

fn docasd_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_docasd"));
    cmd.args(args).env("RUST_LOG", "error");
    for (key, _) in std::env::vars().filter(|(k, _)| k.starts_with("DOCASD_")) {
        cmd.env_remove(key);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn oracle_eval() -> String {
    format!("oracle-matrix:{}", fixture("realworld-zhen/oracle.json"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn correlate_wmt20_rankings() {
    let out = docasd(&[
        "correlate",
        "--auto",
        &fixture("wmt20-zhen/asd20.json"),
        "--human",
        &fixture("wmt20-zhen/mqm.json"),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out).lines().next(),
        Some("pearson_on_ranks=0.929 kendall=0.810")
    );

    let out = docasd(&[
        "correlate",
        "--auto",
        &fixture("wmt20-zhen/comet20.json"),
        "--human",
        &fixture("wmt20-zhen/mqm.json"),
    ]);
    assert_eq!(
        stdout(&out).lines().next(),
        Some("pearson_on_ranks=0.679 kendall=0.524")
    );
}

#[test]
fn correlate_kiwi_backbone_as_json() {
    let out = docasd(&[
        "correlate",
        "--json",
        "--auto",
        &fixture("wmt20-zhen/asdkiwi.json"),
        "--human",
        &fixture("wmt20-zhen/mqm.json"),
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["pearson_on_ranks"].as_f64().unwrap() - 0.964).abs() < 0.001);
    assert!((report["kendall_tau"].as_f64().unwrap() - 0.905).abs() < 0.001);
    assert_eq!(report["K"], 7);
}

#[test]
fn correlate_mismatched_systems() {
    let out = docasd(&[
        "correlate",
        "--auto",
        &fixture("realworld-zhen/asd20.json"),
        "--human",
        &fixture("wmt20-zhen/mqm.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("VolcTrans") && err.contains("Qwen3-32B"),
        "{err}"
    );
}

#[test]
fn align_worked_example() {
    let out = docasd(&[
        "align",
        "--metric-align",
        &format!("oracle-matrix:{}", fixture("worked-example/oracle.json")),
        "--src",
        &fixture("worked-example/source.txt"),
        "--tgt",
        &fixture("worked-example/target.txt"),
        "--src-lang",
        "zh",
        "--tgt-lang",
        "en",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path\t(0,0) (1,1) (3,2) (3,3) (5,4)");
    assert_eq!(lines[2], "placeholders\t2");
    assert_eq!(lines[5], "2\t[]\t");
    assert_eq!(
        lines[6],
        "3\t[2,3]\tThe children's reading area has comfortable seats and bright lighting. It has attracted many families."
    );
}

#[test]
fn evaluate_reproduces_realworld_column() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = docasd(&[
        "evaluate",
        "--corpus",
        &fixture("realworld-zhen/corpus.jsonl"),
        "--metric-align",
        "lexical",
        "--metric-eval",
        &oracle_eval(),
        "--workers",
        "3",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "system\tscore\trank\n\
         Qwen3-32B\t0.5203\t1\n\
         Qwen2.5-72B\t0.5181\t2\n\
         Qwen3-8B\t0.5041\t4\n\
         Qwen2.5-32B\t0.5096\t3\n\
         Qwen2.5-14B\t0.4939\t5\n\
         Qwen2.5-7B\t0.4906\t6\n"
    );

    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["documents"].as_array().unwrap().len(), 12);
    assert_eq!(json["config_echo"]["metric_align"], "lexical");
    assert_eq!(json["skipped"].as_array().unwrap().len(), 0);

    let rank = docasd(&["rank", "--report", report.to_str().unwrap()]);
    assert!(rank.status.success());
    assert_eq!(stdout(&rank), stdout(&out));
    assert!(stderr(&rank).is_empty(), "{}", stderr(&rank));

    let corr = docasd(&[
        "correlate",
        "--auto",
        report.to_str().unwrap(),
        "--human",
        &fixture("realworld-zhen/human.json"),
    ]);
    assert!(
        stdout(&corr).starts_with("pearson_on_ranks=0.943 "),
        "{}",
        stdout(&corr)
    );
}

#[test]
fn single_window_size() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = docasd(&[
        "evaluate",
        "--corpus",
        &fixture("realworld-zhen/corpus.jsonl"),
        "--metric-align",
        "lexical",
        "--metric-eval",
        &oracle_eval(),
        "--ks",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for doc in json["documents"].as_array().unwrap() {
        let keys: Vec<&String> = doc["result"]["per_k"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["1"]);
    }
}

#[test]
fn corpus_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.jsonl", "");
    let out = docasd(&["evaluate", "--corpus", &empty, "--metric-eval", "lexical"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("empty"));

    let bad = write(
        dir.path(),
        "bad.jsonl",
        "{\"doc_id\": \"a\", \"src\": \"x.\", \"tgt\": \"y.\", \"src_lang\": \"en\", \"tgt_lang\": \"en\"}\n{oops\n",
    );
    let out = docasd(&["evaluate", "--corpus", &bad, "--metric-eval", "lexical"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn skipped_documents_fail_only_under_strict() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(
        dir.path(),
        "corpus.jsonl",
        concat!(
            r#"{"doc_id": "ok", "src": "One. Two.", "tgt": "One [sys:Qwen3-8B]. Two [sys:Qwen3-8B].", "src_lang": "en", "tgt_lang": "en"}"#,
            "\n",
            r#"{"doc_id": "unscorable", "src": "One. Two.", "tgt": "One. Two.", "src_lang": "en", "tgt_lang": "en"}"#,
            "\n"
        ),
    );
    let args = [
        "evaluate",
        "--corpus",
        &corpus,
        "--metric-align",
        "lexical",
        "--metric-eval",
        &oracle_eval(),
    ];
    let out = docasd(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("skipped 1 document"));

    let strict: Vec<&str> = args.iter().copied().chain(["--strict"]).collect();
    assert_eq!(docasd(&strict).status.code(), Some(2));
}

#[test]
fn unreachable_sidecar_exits_3() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "docasd.toml",
        &format!(
            "sidecar_url = \"http://127.0.0.1:{port}\"\nretry_attempts = 1\nretry_backoff_ms = 1\n"
        ),
    );
    let out = docasd(&[
        "evaluate",
        "--config",
        &config,
        "--corpus",
        &fixture("realworld-zhen/corpus.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("unavailable"));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        vec!["frobnicate"],
        vec!["evaluate"],
        vec!["--dp-mode", "sideways", "segment", "--lang", "en"],
        vec!["--ks", "2,5", "segment", "--lang", "en"],
        vec!["--metric-eval", "bleu", "segment", "--lang", "en"],
    ] {
        let out = docasd(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
    let help = docasd(&["--help"]);
    assert!(help.status.success());
    assert!(stdout(&help).contains("evaluate"));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "docasd.toml",
        "ks = [1, 2]\nmetric_align = \"lexical\"\nmetric_eval = \"lexical\"\n",
    );
    let report = dir.path().join("r.json");
    let corpus = fixture("realworld-zhen/corpus.jsonl");
    let run = |extra: &[&str], env: &[(&str, &str)]| {
        let mut args = vec![
            "evaluate",
            "--config",
            &config,
            "--corpus",
            &corpus,
            "--report",
            report.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let out = docasd_env(&args, env);
        assert!(out.status.success(), "{}", stderr(&out));
        let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        json["config_echo"]["ks"].clone()
    };
    assert_eq!(run(&[], &[]), serde_json::json!([1, 2]));
    assert_eq!(run(&[], &[("DOCASD_KS", "3")]), serde_json::json!([3]));
    assert_eq!(
        run(&["--ks", "4,1"], &[("DOCASD_KS", "3")]),
        serde_json::json!([1, 4])
    );

    let bad = write(dir.path(), "bad.toml", "kz = [1]\n");
    let out = docasd(&["--config", &bad, "segment", "--lang", "en"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prefpairs_one_triplet_per_untied_record() {
    let dir = tempfile::tempdir().unwrap();
    let full = "The bridge opened in May. Traffic doubled within a week. Shops nearby reported more customers.";
    let short = "The bridge opened in May. Shops nearby reported more customers.";
    let line = |id: &str, a: &str, b: &str| {
        serde_json::json!({"doc_id": id, "src": full, "candidates": {"x": a, "y": b}, "src_lang": "en", "tgt_lang": "en"})
            .to_string()
    };
    let corpus = write(
        dir.path(),
        "pairs.jsonl",
        &[
            line("d1", full, short),
            line("d2", short, full),
            line("tied", full, full),
        ]
        .join("\n"),
    );
    let out_path = dir.path().join("triplets.jsonl");
    let out = docasd(&[
        "prefpairs",
        "--corpus",
        &corpus,
        "--metric-align",
        "lexical",
        "--metric-eval",
        "lexical",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let triplets: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(triplets.len(), 2);
    for t in &triplets {
        assert_eq!(t["chosen"], full);
        assert_eq!(t["rejected"], short);
        assert!(t["score_chosen"].as_f64() > t["score_rejected"].as_f64());
        let mut keys: Vec<&String> = t.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "chosen",
                "rejected",
                "score_chosen",
                "score_rejected",
                "src"
            ]
        );
    }
}

#[test]
fn best_keeps_higher_scoring_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let src = "Rain fell all night. The river rose. Roads were closed by morning.";
    let corpus = write(
        dir.path(),
        "c.jsonl",
        &serde_json::json!({
            "doc_id": "d", "src": src,
            "candidates": {"partial": "Rain fell all night. Roads were closed by morning.", "complete": src},
            "src_lang": "en", "tgt_lang": "en"
        })
        .to_string(),
    );
    let out = docasd(&[
        "best",
        "--corpus",
        &corpus,
        "--metric-align",
        "lexical",
        "--metric-eval",
        "lexical",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let record: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(record["system"], "complete");
    assert_eq!(record["tgt"], src);
    assert_eq!(record["score"], 1.0);
}

#[test]
fn reward_prints_scalars() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(
        dir.path(),
        "src.txt",
        "Snow closed the pass. Drivers waited for hours. Crews cleared it by dusk.",
    );
    let good = write(
        dir.path(),
        "good.txt",
        "Snow closed the pass. Drivers waited for hours. Crews cleared it by dusk.",
    );
    let bad = write(dir.path(), "bad.txt", "Snow closed the pass.");
    let out = docasd(&[
        "reward",
        "--metric-align",
        "lexical",
        "--metric-eval",
        "lexical",
        "--src",
        &src,
        "--hyp",
        &good,
        "--hyp",
        &bad,
        "--src-lang",
        "en",
        "--tgt-lang",
        "en",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let values: Vec<f64> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert_eq!(values[0], 1.0);
    assert!(values[1] < values[0]);
}

#[test]
fn segment_from_stdin() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_docasd"))
        .args(["segment", "--lang", "zh"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all("第一句。第二句！第三句？".as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out), "第一句。\n第二句！\n第三句？\n");
}

#[test]
fn deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for workers in ["1", "4"] {
        let path = dir.path().join(format!("r{workers}.json"));
        let out = docasd(&[
            "evaluate",
            "--corpus",
            &fixture("realworld-zhen/corpus.jsonl"),
            "--metric-align",
            "lexical",
            "--metric-eval",
            "lexical",
            "--workers",
            workers,
            "--report",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        let mut json: Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        json["config_echo"]["workers"] = Value::Null;
        reports.push(json);
    }
    assert_eq!(reports[0], reports[1]);
}
