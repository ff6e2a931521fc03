use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const KEY: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        Env { dir: tempfile::tempdir().unwrap() }
    }

    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn run(&self, args: &[&str], stdin: &str) -> Output {
        let mut child = Command::new(env!("CARGO_BIN_EXE_sierra"))
            .arg("--data-dir")
            .arg(self.data())
            .args(args)
            .env("SIERRA_MASTER_KEY", KEY)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
        child.wait_with_output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args, "");
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn file(&self, name: &str, content: &str) -> String {
        let p = self.dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p.to_string_lossy().into_owned()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_usage_exit_codes() {
    let env = Env::new();
    assert_eq!(env.run(&["--help"], "").status.code(), Some(0));
    assert_eq!(env.run(&["no-such-command"], "").status.code(), Some(2));
    assert_eq!(env.run(&["train", "--dataset", "x.csv"], "").status.code(), Some(2));
    assert_eq!(env.run(&["useradd", "--role", "wizard", "bob"], "").status.code(), Some(2));
}

#[test]
fn quest_validate_reports_file_and_line() {
    let env = Env::new();
    let ok = env.run(&["quest", "validate", fixtures().join("oxford.quest").to_str().unwrap()], "");
    assert_eq!(ok.status.code(), Some(0));

    let dir = fixtures().join("quest/invalid");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        let line = header.split("line=").nth(1).unwrap().split_whitespace().next().unwrap();
        let kind = header.split("kind=").nth(1).unwrap().trim();
        let out = env.run(&["quest", "validate", path.to_str().unwrap()], "");
        assert_eq!(out.status.code(), Some(1), "{}", path.display());
        let err = stderr(&out);
        assert!(err.starts_with(&format!("{}:{line}: {kind}: ", path.display())), "{err}");
    }
}

#[test]
fn ingest_reports_rejected_rows_by_line() {
    let env = Env::new();
    env.ok(&["subject", "add", "--id", "S1"]);
    let csv = env.file("in.csv", "channel,t_ms,value\nhr,1000,60\nhr,2000,NaN\nbad channel,3000,1\nhr,4000,62\n");
    let out = env.run(&["ingest", "--file", &csv, "--subject", "S1", "--device", "d1"], "");
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains(&format!("{csv}:3: rejected")), "{err}");
    assert!(err.contains(&format!("{csv}:4: rejected")), "{err}");
    assert!(!err.contains(&format!("{csv}:2:")), "{err}");

    // the valid rows landed anyway
    let exported = env.ok(&["export", "--subject", "S1", "--channel", "hr"]);
    assert_eq!(exported, "channel,t_ms,value\nhr,1000,60\nhr,4000,62\n");

    let bad = env.file("bad.csv", "channel,t_ms,value\nhr,soon,60\n");
    let out = env.run(&["ingest", "--file", &bad, "--subject", "S1", "--device", "d1", "--seq-start", "9"], "");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(&format!("{bad}:2: t_ms")), "{}", stderr(&out));
}

#[test]
fn ingest_then_export_round_trips_values() {
    let env = Env::new();
    env.ok(&["subject", "add", "--id", "knee01", "--cohort", "rehab", "--phi", "name=Someone"]);
    let csv = fixtures().join("knee_exercise.csv");
    let out = env.ok(&["ingest", "--file", csv.to_str().unwrap(), "--subject", "knee01", "--device", "k1"]);
    assert!(out.contains("ingested 7200 samples"), "{out}");

    // replaying the same file with the same sequence numbers is a no-op
    let again = env.ok(&["ingest", "--file", csv.to_str().unwrap(), "--subject", "knee01", "--device", "k1"]);
    assert!(again.contains("ingested 0 samples"), "{again}");

    let source = std::fs::read_to_string(&csv).unwrap();
    let mut expected: Vec<(i64, f64)> = source
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("knee_flex_deg,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    expected.sort_by_key(|p| p.0);
    let exported = env.ok(&["export", "--subject", "knee01", "--channel", "knee_flex_deg"]);
    let got: Vec<(i64, f64)> = exported
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn subject_commands_need_the_master_key() {
    let env = Env::new();
    let out = Command::new(env!("CARGO_BIN_EXE_sierra"))
        .arg("--data-dir")
        .arg(env.data())
        .args(["subject", "add", "--id", "S1"])
        .env_remove("SIERRA_MASTER_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("SIERRA_MASTER_KEY"), "{}", stderr(&out));
}

#[test]
fn useradd_reads_password_from_stdin() {
    let env = Env::new();
    let out = env.run(&["useradd", "--role", "subject", "--subject", "S9", "pat"], "correct horse battery\n");
    assert_eq!(out.status.code(), Some(1), "unknown subject must be refused");

    env.ok(&["subject", "add", "--id", "S9"]);
    let out = env.run(&["useradd", "--role", "subject", "--subject", "S9", "pat"], "correct horse battery\n");
    assert!(out.status.success(), "{}", stderr(&out));
    let users = std::fs::read_to_string(env.data().join("users.jsonl")).unwrap();
    assert!(users.contains("\"pat\"") && !users.contains("correct horse"), "{users}");

    let out = env.run(&["useradd", "--role", "expert", "pat"], "another long password\n");
    assert_eq!(out.status.code(), Some(1), "duplicate user");
    let out = env.run(&["useradd", "--role", "expert", "doc"], "short\n");
    assert_eq!(out.status.code(), Some(1), "weak password");
    let out = env.run(&["useradd", "--role", "subject", "nolink"], "correct horse battery\n");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_is_deterministic_and_prints_confusion() {
    let env = Env::new();
    let csv = env.file("xor.csv", "x,y,label\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n");
    let args = [
        "train", "--dataset", &csv, "--layers", "2,8,2", "--activation", "tanh", "--epochs", "2000", "--lr", "0.1",
        "--batch-size", "4", "--momentum", "0.9", "--seed", "7",
    ];
    let a = env.ok(&args);
    let b = env.ok(&args);
    assert_eq!(a, b);
    assert!(a.contains("train accuracy: 1.0000"), "{a}");
    assert!(a.contains("     2     0\n     0     2\n"), "{a}");

    let out = env.run(&["train", "--dataset", &csv, "--layers", "3,2"], "");
    assert_eq!(out.status.code(), Some(1), "layer/feature mismatch");
}

#[test]
fn quest_load_stores_definition() {
    let env = Env::new();
    let out = env.ok(&["quest", "load", fixtures().join("oxford.quest").to_str().unwrap()]);
    assert!(out.contains("loaded"), "{out}");
    let stored = std::fs::read_to_string(env.data().join("questionnaires.jsonl")).unwrap();
    assert_eq!(stored.lines().count(), 1);
    let out = env.run(&["quest", "load", fixtures().join("oxford.quest").to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(1), "same id and version twice");
}
