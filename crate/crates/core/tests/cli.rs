//! End-to-end runs of the `tailnet` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic corpus, prepared dataset and a 2-epoch model.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        ok(&[
            "synth", "--sessions", "400", "--items", "40", "--zipf", "1.0", "--mean-len", "4", "--seed", "5",
            "--out", s(&f.path("events.csv")),
        ]);
        ok(&["prepare", "--input", s(&f.path("events.csv")), "--out", s(&f.path("data.tlds"))]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        p(&self.dir, name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> String {
        let data = self.path("data.tlds");
        let out = self.path(out);
        let mut args = vec!["train", "--data", s(&data), "--out", s(&out)];
        args.extend_from_slice(&["--d", "6", "--epochs", "2", "--batch", "16", "--lr", "0.01"]);
        args.extend_from_slice(extra);
        ok(&args)
    }
}

#[test]
fn synth_is_deterministic_and_rejects_zero_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(&dir, "a.csv"), p(&dir, "b.csv"));
    for path in [&a, &b] {
        ok(&["synth", "--sessions", "50", "--items", "20", "--out", s(path)]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# config="));

    let out = run(&["synth", "--sessions", "0", "--out", s(&p(&dir, "c.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(!p(&dir, "c.csv").exists());
}

#[test]
fn default_synth_output_prepares_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(&p(&dir, "e.csv"))]);
    let summary = ok(&["prepare", "--input", s(&p(&dir, "e.csv")), "--out", s(&p(&dir, "d.tlds"))]);
    let items: usize = line_value(&summary, "items: ");
    let head: usize = line_value(&summary, "head items: ");
    assert_eq!(head, (0.2 * items as f64).ceil() as usize);
}

fn line_value<T: std::str::FromStr>(text: &str, prefix: &str) -> T
where
    T::Err: std::fmt::Debug,
{
    let line = text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no {prefix:?} in {text}"));
    line[prefix.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn prepare_is_deterministic_and_reports_errors() {
    let f = Fixture::new();
    ok(&["prepare", "--input", s(&f.path("events.csv")), "--out", s(&f.path("again.tlds"))]);
    assert_eq!(fs::read(f.path("data.tlds")).unwrap(), fs::read(f.path("again.tlds")).unwrap());

    fs::write(f.path("empty.csv"), "").unwrap();
    let out = run(&["prepare", "--input", s(&f.path("empty.csv")), "--out", s(&f.path("x.tlds"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no events parsed"));

    let out = run(&["prepare", "--input", s(&f.path("missing.csv")), "--out", s(&f.path("x.tlds"))]);
    assert_eq!(code(&out), 2);
    assert!(!f.path("x.tlds").exists());
}

#[test]
fn train_prints_epoch_csv_and_is_deterministic() {
    let f = Fixture::new();
    let a = f.train("a.tlnt", &[]);
    let b = f.train("b.tlnt", &[]);
    assert_eq!(a, b);
    assert_eq!(fs::read(f.path("a.tlnt")).unwrap(), fs::read(f.path("b.tlnt")).unwrap());
    let rows: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,train_loss,valid_mrr20");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,"));

    let threaded = f.train("c.tlnt", &["--threads", "3"]);
    assert_eq!(fs::read(f.path("a.tlnt")).unwrap(), fs::read(f.path("c.tlnt")).unwrap());
    let strip = |t: &str| t.lines().filter(|l| !l.starts_with("# config")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&threaded));
}

#[test]
fn zero_epochs_still_reports_validation() {
    let f = Fixture::new();
    let out = f.train("z.tlnt", &["--epochs", "0"]);
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    let mrr: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!(mrr.is_finite());
    assert!(f.path("z.tlnt").exists());
}

#[test]
fn eval_methods_and_report_shape() {
    let f = Fixture::new();
    f.train("m.tlnt", &[]);
    let data = f.path("data.tlds");
    let model = f.path("m.tlnt");
    let mut reports = Vec::new();
    for method in ["tailnet", "tailnet-proportion", "pop", "spop", "itemknn"] {
        let csv = f.path(&format!("{method}.csv"));
        let table = ok(&[
            "eval", "--data", s(&data), "--model", s(&model), "--method", method, "--k", "20", "--out", s(&csv),
        ]);
        assert!(table.starts_with(method), "{table}");
        let text = fs::read_to_string(&csv).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "method,metric,K,value");
        assert_eq!(rows.len(), 6, "{text}");
        reports.push(rows[1..].iter().map(|r| r.split(',').skip(1).collect::<Vec<_>>().join(",")).collect::<Vec<_>>());
    }
    assert_ne!(reports[0], reports[1], "tailnet and tailnet-proportion should differ");

    // baselines do not need a model
    ok(&["eval", "--data", s(&data), "--method", "pop"]);
    let out = run(&["eval", "--data", s(&data), "--method", "tailnet"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_is_thread_count_independent() {
    let f = Fixture::new();
    f.train("m.tlnt", &[]);
    let report = |threads: &str, name: &str| {
        let csv = f.path(name);
        ok(&[
            "eval", "--threads", threads, "--data", s(&f.path("data.tlds")), "--model", s(&f.path("m.tlnt")),
            "--out", s(&csv),
        ]);
        fs::read_to_string(csv).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(report("1", "one.csv"), report("4", "four.csv"));
}

#[test]
fn recommend_prints_k_lines_and_factors() {
    let f = Fixture::new();
    f.train("m.tlnt", &[]);
    let events = fs::read_to_string(f.path("events.csv")).unwrap();
    // the most frequent item certainly survives preprocessing
    let mut counts = std::collections::HashMap::new();
    for line in events.lines().filter(|l| !l.starts_with('#')).skip(1) {
        *counts.entry(line.rsplit(',').next().unwrap().to_string()).or_insert(0) += 1;
    }
    let item = counts.into_iter().max_by_key(|(id, c)| (*c, std::cmp::Reverse(id.clone()))).unwrap().0;

    let model = f.path("m.tlnt");
    let args = ["recommend", "--model", s(&model), "--session", &item, "--k", "7"];
    let out = ok(&args);
    assert_eq!(out, ok(&args));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 8);
    for (i, l) in lines[..7].iter().enumerate() {
        let cols: Vec<&str> = l.split('\t').collect();
        assert_eq!(cols[0], (i + 1).to_string());
        assert!(cols[3] == "HEAD" || cols[3] == "TAIL");
    }
    let factors = lines[7];
    let nums: Vec<f64> = factors
        .split_whitespace()
        .map(|kv| kv.split_once('=').unwrap().1.parse().unwrap())
        .collect();
    assert!((nums[0] + nums[1] - 1.0).abs() < 1e-12, "{factors}");

    let out = run(&["recommend", "--model", s(&model), "--session", "no-such-item"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-item"));
}

#[test]
fn corrupt_files_exit_with_two() {
    let f = Fixture::new();
    f.train("m.tlnt", &[]);
    let model = fs::read(f.path("m.tlnt")).unwrap();
    fs::write(f.path("cut.tlnt"), &model[..model.len() / 2]).unwrap();
    let out = run(&["recommend", "--model", s(&f.path("cut.tlnt")), "--session", "x"]);
    assert_eq!(code(&out), 2);

    let data = fs::read(f.path("data.tlds")).unwrap();
    fs::write(f.path("cut.tlds"), &data[..data.len() - 3]).unwrap();
    let out = run(&["eval", "--data", s(&f.path("cut.tlds")), "--method", "pop"]);
    assert_eq!(code(&out), 2);
    let out = run(&["train", "--data", s(&f.path("cut.tlds")), "--out", s(&f.path("never.tlnt"))]);
    assert_eq!(code(&out), 2);
    assert!(!f.path("never.tlnt").exists());
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let f = Fixture::new();
    fs::write(f.path("run.cfg"), "train.d = 5\ntrain.epochs = 1\nbatch_size = 64\n").unwrap();
    let cfg = s(&f.path("run.cfg")).to_string();
    let out = ok(&[
        "--config", &cfg, "train", "--data", s(&f.path("data.tlds")), "--out", s(&f.path("c.tlnt")), "--epochs", "0",
    ]);
    assert!(out.contains("\"d\":5"), "{out}");
    assert!(out.contains("\"epochs\":0"));
    assert!(out.contains("\"batch_size\":64"));

    fs::write(f.path("bad.cfg"), "bogus = 1\n").unwrap();
    let out = run(&["--config", s(&f.path("bad.cfg")), "synth", "--out", s(&f.path("b.csv"))]);
    assert_eq!(code(&out), 2);
}
