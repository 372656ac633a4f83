use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use mbti_rank::scoring::{score_request, ScoreRequest};
use mbti_rank_core::RewardConfig;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mbti-rank"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn counts(text: &str) -> Vec<(String, usize)> {
    text.lines()
        .filter_map(|l| {
            let (name, n) = l.rsplit_once(' ')?;
            Some((name.to_string(), n.parse().ok()?))
        })
        .collect()
}

const RECORDS: &str = r#"{"user_id":"u1","posts":["I am an INTJ and proud","planning everything"],"label":"INTJ"}
{"user_id":"u2","posts":["parties are fun","ESFP energy here"],"label":"ESFP"}
{"user_id":"u3","posts":["quiet evenings"],"label":"ISFJ"}
{"user_id":"u4","posts":["debate me"],"label":"ENTP"}
"#;

const TEACHER: &str = r#"{"user_id":"u1","completion":"<think>plans</think><answer>[INTJ, INTP, ISTJ]</answer>"}
{"user_id":"u2","completion":"<think>social</think><answer>[ENFP, ESFP, ESTP]</answer>"}
{"user_id":"u3","completion":"<think>?</think><answer>[ENTP, ENTJ, ESTP]</answer>"}
{"user_id":"u4","completion":"no tags at all"}
"#;

#[test]
fn prepare_writes_splits_and_counts() {
    let dir = TempDir::new().unwrap();
    let records = write(dir.path(), "records.jsonl", RECORDS);
    let teacher = write(dir.path(), "teacher.jsonl", TEACHER);
    let out = dir.path().join("out");
    let o = run(&["prepare", "--records", &records, "--teacher", &teacher, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = counts(&stdout(&o));
    let get = |k: &str| c.iter().find(|(n, _)| n == k).map(|(_, v)| *v).unwrap();
    assert_eq!(get("records"), 4);
    assert_eq!(get("teacher samples"), 4);
    assert_eq!(get("kept"), 2);
    assert_eq!(get("rejected"), 2);
    assert_eq!(get("sft users"), 2);
    assert_eq!(get("rl users"), 2);

    let sft = jsonl(&out.join("sft.jsonl"));
    let rl = jsonl(&out.join("rl.jsonl"));
    let rejected = jsonl(&out.join("rejections.jsonl"));
    assert_eq!((sft.len(), rl.len(), rejected.len()), (2, 2, 2));
    let all = format!("{sft:?}{rl:?}");
    assert!(!all.contains("INTJ and proud"), "labels leak into prompts");
    for r in &rejected {
        assert!(r["user_id"].is_string() && r["reason"].is_string());
    }
}

#[test]
fn prepare_missing_input_names_the_path() {
    let dir = TempDir::new().unwrap();
    let o = run(&["prepare", "--records", "/definitely/not/here.jsonl", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.jsonl"));
}

#[test]
fn prepare_warns_when_nothing_is_kept() {
    let dir = TempDir::new().unwrap();
    let records = write(dir.path(), "records.jsonl", RECORDS);
    let teacher = write(dir.path(), "teacher.jsonl", "{\"user_id\":\"u4\",\"completion\":\"nothing\"}\n");
    let o = run(&["prepare", "--records", &records, "--teacher", &teacher, "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("warn"), "{}", stderr(&o));
}

#[test]
fn prepare_reads_kaggle_csv() {
    let dir = TempDir::new().unwrap();
    let csv = write(
        dir.path(),
        "mbti.csv",
        "type,posts\nINTJ,'first post|||second INTJ post'\nENFP,'hello|||world'\n",
    );
    let out = dir.path().join("out");
    let o = run(&["prepare", "--csv", "--records", &csv, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("records 2"));
}

#[test]
fn score_matches_library() {
    let completions = [
        "<think>t</think><answer>[INTJ, INTP, ENTJ]</answer>",
        "<think>t</think><answer>[ESFP, INTJ, ENTP]</answer>",
        "<answer>[INTJ]</answer>",
    ];
    let mut args = vec!["score", "--truth", "INTJ"];
    for c in &completions {
        args.extend(["--completion", c]);
    }
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);

    let req = ScoreRequest {
        completions: completions.iter().map(|s| s.to_string()).collect(),
        ground_truth: mbti_rank_core::parse_type("INTJ").unwrap(),
        k: None,
        dim_weight_epsilon: None,
    };
    let lib = score_request(&req, &RewardConfig::default()).unwrap();
    for (row, s) in rows.iter().zip(&lib.scores) {
        assert_eq!(row["ground_truth"], "INTJ");
        assert_eq!(row["valid"], s.valid);
        assert_eq!(row["ndcg"].as_f64().unwrap(), s.ndcg);
        assert_eq!(row["ds"].as_f64().unwrap(), s.ds);
        assert_eq!(row["total"].as_f64().unwrap(), s.total);
    }
    assert_eq!(rows[2]["valid"], false);
    assert!(rows[2]["parse_error"]["kind"].is_string());
}

#[test]
fn score_file_yields_one_line_per_input() {
    let dir = TempDir::new().unwrap();
    let body: String = (0..25)
        .map(|i| {
            if i % 5 == 0 {
                format!("{{\"completion\":\"garbage {i}\"}}\n")
            } else {
                "{\"completion\":\"<think/><answer>[ENFP, INFP, ENTP]</answer>\",\"ground_truth\":\"ENFP\"}\n".to_string()
            }
        })
        .collect();
    let file = write(dir.path(), "c.jsonl", &body);
    let out = dir.path().join("scores.jsonl");
    let o = run(&["score", "--file", &file, "--truth", "ISTJ", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = jsonl(&out);
    assert_eq!(rows.len(), 25);
    assert_eq!(rows[0]["ground_truth"], "ISTJ");
    assert_eq!(rows[0]["valid"], false);
    assert_eq!(rows[1]["ground_truth"], "ENFP");
}

#[test]
fn score_rejects_bad_truth() {
    let o = run(&["score", "--truth", "QQQQ", "--completion", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("QQQQ"));
}

#[test]
fn train_zero_steps_persists_initial_policy() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let o = run(&["--seed", "4", "train", "--synthetic", "--steps", "0", "--out-dir", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("steps 0"));
    assert!(jsonl(&a.join("training_log.jsonl")).is_empty());
    let policy: Value = serde_json::from_str(&std::fs::read_to_string(a.join("policy.json")).unwrap()).unwrap();
    assert_eq!(policy["k"], 3);
    let d = policy["feature_dim"].as_u64().unwrap() as usize;
    assert_eq!(policy["theta"].as_array().unwrap().len(), d * 16);
}

#[test]
fn train_is_deterministic_and_respects_ablation() {
    let dir = TempDir::new().unwrap();
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "--seed", "9", "train", "--synthetic", "--steps", "15", "--group-size", "4",
            "--no-ndcg-reward", "--out-dir", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (stdout(&o), std::fs::read(out.join("policy.json")).unwrap(), jsonl(&out.join("training_log.jsonl")))
    };
    let (s1, p1, log) = go("one");
    let (s2, p2, _) = go("two");
    assert_eq!(s1, s2);
    assert_eq!(p1, p2);
    assert_eq!(log.len(), 15);
    for step in &log {
        assert_eq!(step["mean_reward"].as_f64(), step["mean_ds"].as_f64());
        assert!(step["mean_ndcg"].as_f64().is_some());
    }
}

#[test]
fn train_needs_a_source() {
    let o = run(&["train", "--steps", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

const TRUTH: &str = r#"{"user_id":"a","label":"INTJ"}
{"user_id":"b","label":"ESFP"}
{"user_id":"c","label":"ENFP"}
"#;

#[test]
fn eval_perfect_predictions() {
    let dir = TempDir::new().unwrap();
    let truth = write(dir.path(), "truth.jsonl", TRUTH);
    let preds = write(
        dir.path(),
        "pred.jsonl",
        r#"{"user_id":"a","answers":["INTJ","ENTJ","INTP"]}
{"user_id":"b","completion":"<think>x</think><answer>[ESFP, ISFP, ESTP]</answer>"}
{"user_id":"c","answers":["ENFP","INFP","ENTP"]}
"#,
    );
    let out = dir.path().join("report.json");
    let o = run(&["eval", "--predictions", &preds, "--truth", &truth, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["binary_macro_f1"], 1.0);
    assert_eq!(report["multiclass_f1"], 1.0);
    assert_eq!(report["ndcg_at_k"], 1.0);
    assert_eq!(report["n_samples"], 3);
    assert_eq!(report["n_invalid"], 0);
    assert!(!stdout(&o).is_empty());
}

#[test]
fn eval_missing_user_lenient_vs_strict() {
    let dir = TempDir::new().unwrap();
    let truth = write(dir.path(), "truth.jsonl", TRUTH);
    let preds = write(dir.path(), "pred.jsonl", "{\"user_id\":\"a\",\"answers\":[\"INTJ\",\"INTP\",\"ENTJ\"]}\n");
    let out = dir.path().join("report.json");
    let o = run(&["eval", "--predictions", &preds, "--truth", &truth, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["n_invalid"], 2);

    let o = run(&["eval", "--predictions", &preds, "--truth", &truth, "--strict"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('b') || stderr(&o).contains('c'));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["score", "--bogus"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--bogus"));
}

#[test]
fn help_for_every_subcommand() {
    for sub in ["prepare", "score", "train", "eval", "serve"] {
        let o = run(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn config_file_overrides_defaults_and_flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.conf", "# reward settings\nreward.epsilon = 0.5\nreward.k = 2\n");
    let completion = "<think/><answer>[INTJ, INTP]</answer>";
    let o = run(&["--config", &cfg, "score", "--truth", "INTJ", "--completion", completion]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("# effective configuration"));
    let row: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(row["valid"], true);
    assert_eq!(row["ds"].as_f64().unwrap(), 4.0 + 10.0 * 0.5);

    let o = run(&["--config", &cfg, "score", "--epsilon", "0.1", "--truth", "INTJ", "--completion", completion]);
    let row: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((row["ds"].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn config_unknown_key_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.conf", "reward.kk = 3\n");
    let o = run(&["--config", &cfg, "score", "--truth", "INTJ", "--completion", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("reward.kk"));
}

#[test]
fn serve_reports_bind_failure() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let o = run(&["serve", "--host", "127.0.0.1", "--port", &port]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot bind"), "{}", stderr(&o));
}

#[test]
fn serve_stops_cleanly_on_interrupt() {
    let mut child = bin()
        .args(["serve", "--host", "127.0.0.1", "--port", "0"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server printed its address").unwrap();
        if let Some(rest) = line.strip_prefix("listening on ") {
            break rest.to_string();
        }
    };

    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    use std::io::{Read, Write};
    write!(stream, "GET /v1/health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"status\":\"ok\""));

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}
