use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

fn textcraft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textcraft"))
        .args(args)
        .env_remove("TEXTCRAFT_SERVER")
        .output()
        .expect("textcraft binary runs")
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

fn quick_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--matches", "2", "--seed", "5", "--max-ticks", "400", "--output-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    textcraft(&args)
}

#[test]
fn help_lists_every_subcommand() {
    let out = textcraft(&["--help"]);
    assert!(out.status.success());
    let help = text(&out);
    for cmd in ["run", "metrics", "partition", "export-pairs", "replay-verify", "serve"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn run_then_analyse_the_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_run(dir.path(), &[]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("config "));
    let records = [dir.path().join("match-5.jsonl"), dir.path().join("match-6.jsonl")];
    let paths: Vec<&str> = records.iter().map(|p| p.to_str().unwrap()).collect();

    let out = textcraft(&[&["metrics", "--label", "probe"][..], &paths].concat());
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("probe"));

    let out = textcraft(&[&["replay-verify"][..], &paths].concat());
    assert!(out.status.success(), "{}", text(&out));
    assert_eq!(text(&out).matches("OK ").count(), 2);

    let out = textcraft(&[&["export-pairs"][..], &paths].concat());
    assert!(out.status.success(), "{}", text(&out));
    let lines: Vec<serde_json::Value> =
        String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|v| v["input"].is_string() && v["output"].is_string()));

    let out = textcraft(&[&["export-pairs", "--filter", "q7"][..], &paths].concat());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 77, "matches": 1}"#).unwrap();
    let out = quick_run(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(dir.path().join("match-77.jsonl").exists());
    assert!(!dir.path().join("match-5.jsonl").exists());
}

#[test]
fn invalid_config_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_run(dir.path(), &["--difficulty", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("difficulty"));
}

#[test]
fn unreachable_endpoint_fails_the_run_but_keeps_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_run(dir.path(), &["--backend", "http", "--base-url", "http://127.0.0.1:9", "--backoff-ms", "1"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    assert!(text(&out).contains("FAILED"));
    assert!(dir.path().join("match-5.jsonl").exists());
}

#[test]
fn truncated_record_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    assert!(quick_run(dir.path(), &[]).status.success());
    let path = dir.path().join("match-5.jsonl");
    let full = std::fs::read_to_string(&path).unwrap();
    let cut = &full[..full.len() - full.lines().last().unwrap().len() / 2 - 1];
    std::fs::write(&path, cut).unwrap();
    let out = textcraft(&["replay-verify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let n = cut.lines().count();
    assert!(text(&out).contains(&format!("line {n}")), "{}", text(&out));
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn commands_reach_a_separate_server() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_textcraft"))
        .args(["serve", "--bind", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut banner).unwrap();
    let served = Served(child);
    let url = banner.trim().strip_prefix("listening on ").expect("banner").to_string();

    let dir = tempfile::tempdir().unwrap();
    let out = textcraft(&[
        "--server",
        &url,
        "run",
        "--matches",
        "1",
        "--max-ticks",
        "300",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(dir.path().join("match-42.jsonl").exists());
    drop(served);

    let out = textcraft(&["--server", &url, "replay-verify", dir.path().join("match-42.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("request failed"));
}
