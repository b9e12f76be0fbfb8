use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread;

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn stateshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stateshift")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = stateshift(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn metrics(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn oracle_eval_scores_perfectly_and_reports() {
    let tmp = TempDir::new().unwrap();
    let config = fixtures().join("oracle.toml");
    let multi = tmp.path().join("multi");
    let single = tmp.path().join("single");
    run_ok(&["eval", "--config", s(&config), "--out", s(&multi)]);
    run_ok(&["eval", "--config", s(&config), "--strategy", "single", "--out", s(&single)]);
    for dir in [&multi, &single] {
        assert_eq!(metrics(dir)["micro"]["f1"], 1.0);
        for name in ["manifest.json", "predictions.jsonl", "requests.jsonl", "per_attribute.tsv", "environment.json"] {
            assert!(dir.join(name).exists(), "{name}");
        }
    }
    let report = tmp.path().join("report");
    run_ok(&["report", s(&multi), s(&single), "--out", s(&report)]);
    let table = std::fs::read_to_string(report.join("comparison.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("multi\tmulti\toracle\t100.0"), "{}", rows[1]);
    assert!(rows[2].starts_with("single\tsingle\toracle\t100.0"), "{}", rows[2]);
    for name in ["fig3_frequency.tsv", "fig4_k_sweep.tsv", "fig5_semantic_types.tsv", "out_domain_groups.tsv"] {
        assert!(report.join(name).exists(), "{name}");
    }
}

#[test]
fn same_seed_gives_identical_metrics() {
    let tmp = TempDir::new().unwrap();
    let config = fixtures().join("noisy.toml");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["eval", "--config", s(&config), "--strategy", "k-attribute", "--out", s(&a)]);
    run_ok(&["eval", "--config", s(&config), "--strategy", "k-attribute", "--out", s(&b)]);
    let ma = std::fs::read(a.join("metrics.json")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("metrics.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("predictions.jsonl")).unwrap(),
        std::fs::read(b.join("predictions.jsonl")).unwrap()
    );
}

#[test]
fn sweep_k_writes_points_per_k() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep");
    run_ok(&["sweep-k", "--config", s(&fixtures().join("oracle.toml")), "--k", "1,51", "--out", s(&out)]);
    let table = std::fs::read_to_string(out.join("sweep.tsv")).unwrap();
    assert!(out.join("k-1").is_dir() && out.join("k-51").is_dir());
    let ks: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert!(ks.contains(&"1") && ks.contains(&"51"), "{table}");
}

#[test]
fn incomplete_run_dir_is_rejected_with_missing_files() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    run_ok(&["eval", "--config", s(&fixtures().join("oracle.toml")), "--out", s(&run)]);
    std::fs::remove_file(run.join("predictions.jsonl")).unwrap();
    let out = stateshift(&["report", s(&run), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("predictions.jsonl"));
}

#[test]
fn tampered_prediction_file_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    run_ok(&["eval", "--config", s(&fixtures().join("oracle.toml")), "--out", s(&run)]);
    let mut f = std::fs::OpenOptions::new().append(true).open(run.join("predictions.jsonl")).unwrap();
    writeln!(f).unwrap();
    let out = stateshift(&["report", s(&run), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(stateshift(&["eval"]).status.code(), Some(1));
    assert_eq!(stateshift(&["frobnicate"]).status.code(), Some(1));
    let tmp = TempDir::new().unwrap();
    let out = stateshift(&[
        "eval",
        "--config",
        s(&fixtures().join("oracle.toml")),
        "--strategy",
        "sideways",
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nonempty_out_dir_is_refused() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let out = stateshift(&["eval", "--config", s(&fixtures().join("oracle.toml")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(tmp.path().join("keep.txt").exists());
}

#[derive(Default)]
struct Seen {
    requests: usize,
    auth: Vec<Option<String>>,
}

/// Minimal HTTP/1.1 completion server. `reply` maps a request number and
/// prompt to a status code and body.
fn serve(reply: fn(usize, &str) -> (u16, String)) -> (String, Arc<Mutex<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let shared = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let shared = shared.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = None;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = Some(line["authorization:".len()..].trim().to_string());
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let payload: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let n = {
                    let mut seen = shared.lock().unwrap();
                    seen.requests += 1;
                    seen.auth.push(auth);
                    seen.requests
                };
                let (status, text) = reply(n, payload["prompt"].as_str().unwrap_or_default());
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            });
        }
    });
    (url, seen)
}

fn remote_config(dir: &Path, endpoint: &str, strategy: &str) -> PathBuf {
    let path = dir.join(format!("{strategy}.toml"));
    let toy = fixtures().join("toy.jsonl");
    std::fs::write(
        &path,
        format!(
            r#"seed = 3
strategy = "{strategy}"
workers = 2

[dataset]
path = "{}"
attributes = "all"

[backend]
kind = "remote"

[backend.remote]
endpoint = "{endpoint}"
model = "test-model"
concurrency = 2

[backend.remote.retry]
max_retries = 2
base_delay_ms = 1
max_delay_ms = 2

[metrics]
permutations = 500
"#,
            toy.display()
        ),
    )
    .unwrap();
    path
}

fn yes_to_temperature(n: usize, prompt: &str) -> (u16, String) {
    if n == 1 {
        return (429, "{}".into());
    }
    let last = prompt.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    let text = if last.contains("temperature") || prompt.trim_end().ends_with("temperature?") {
        "Yes"
    } else {
        "No"
    };
    (200, serde_json::json!({"choices": [{"text": format!(" {text}")}]}).to_string())
}

#[test]
fn remote_eval_records_transcript_and_replays_identically() {
    let tmp = TempDir::new().unwrap();
    let (url, seen) = serve(yes_to_temperature);
    let config = remote_config(tmp.path(), &url, "single");
    let live = tmp.path().join("live");
    let out = Command::new(env!("CARGO_BIN_EXE_stateshift"))
        .args(["eval", "--config", s(&config), "--out", s(&live)])
        .env("STATESHIFT_API_KEY", "sekret")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    {
        let seen = seen.lock().unwrap();
        assert!(seen.requests > 1);
        assert!(seen.auth.iter().all(|a| a.as_deref() == Some("Bearer sekret")));
    }
    assert_eq!(metrics(&live)["counts"]["failed_records"], 0);
    let transcript = live.join("transcript.jsonl");
    assert!(transcript.exists());

    let replayed = tmp.path().join("replayed");
    run_ok(&["eval", "--config", s(&config), "--replay", s(&transcript), "--out", s(&replayed)]);
    assert_eq!(
        std::fs::read(live.join("metrics.json")).unwrap(),
        std::fs::read(replayed.join("metrics.json")).unwrap()
    );
}

#[test]
fn total_backend_failure_exits_three() {
    let tmp = TempDir::new().unwrap();
    let (url, _) = serve(|_, _| (500, "{}".into()));
    let config = remote_config(tmp.path(), &url, "multi");
    let out = stateshift(&["eval", "--config", s(&config), "--out", s(&tmp.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
