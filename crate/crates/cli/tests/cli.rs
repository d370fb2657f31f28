use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edln(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edln")).current_dir(dir).args(args).output().expect("spawn edln")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn only_run_dir(root: &Path) -> std::path::PathBuf {
    let dirs: Vec<_> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn run_writes_layout_and_exits_zero_on_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = edln(tmp.path(), &["run", "platonic_closed_form", "--outdir", "o", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("PASS"));
    let run = only_run_dir(&tmp.path().join("o/platonic_closed_form"));
    for f in ["config.snapshot", "summary.csv", "alignment.csv", "networks/net_a.net", "networks/net_b.net"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    let hash = run.file_name().unwrap().to_str().unwrap();
    assert!(summary.contains(&format!("# config_hash: {hash}")));
    assert!(summary.contains("# edln_core_version: "));
    assert!(summary.trim_end().ends_with("verdict,1"));
}

#[test]
fn failing_verdict_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("strict.toml"), "[thresholds]\nclosed_form_alignment_min = 2.0\n").unwrap();
    let out = edln(tmp.path(), &["run", "platonic_closed_form", "--config", "strict.toml", "--outdir", "o"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn execution_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&edln(tmp.path(), &["run", "no_such_scenario"])), 2);
    fs::write(tmp.path().join("bad.toml"), "[train]\nlearnin_rate = 1.0\n").unwrap();
    assert_eq!(code(&edln(tmp.path(), &["run", "platonic_sgd", "--config", "bad.toml"])), 2);
    assert_eq!(code(&edln(tmp.path(), &["run", "platonic_sgd", "--config", "missing.toml"])), 2);
    fs::write(tmp.path().join("wide.toml"), "[net_a]\nhidden = [2]\n").unwrap();
    assert_eq!(code(&edln(tmp.path(), &["run", "platonic_closed_form", "--config", "wide.toml", "--outdir", "o"])), 2);
    assert_eq!(code(&edln(tmp.path(), &["sweep", "--axis", "train.no_such_key=1,2", "--outdir", "o"])), 2);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |sub: &str| {
        let out = edln(tmp.path(), &["run", "platonic_sgd", "--outdir", sub, "--seed", "5"]);
        assert_eq!(code(&out), 0);
        let run = only_run_dir(&tmp.path().join(sub).join("platonic_sgd"));
        (fs::read_to_string(run.join("summary.csv")).unwrap(), fs::read_to_string(run.join("trace.csv")).unwrap())
    };
    assert_eq!(read("first"), read("second"));
}

#[test]
fn sweep_over_depth_passes_at_each_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = edln(
        tmp.path(),
        &["sweep", "--scenario", "platonic_closed_form", "--axis", "net_b.hidden=[6],[6,6],[6,6,6]", "--outdir", "o", "--parallelism", "2"],
    );
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let table = fs::read_dir(tmp.path().join("o/platonic_closed_form"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let text = fs::read_to_string(table).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("net_b.hidden,config_hash,verdict,error,"));
    assert!(rows[1..].iter().all(|r| r.contains(",1,,")));
}

#[test]
fn empty_sweep_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&edln(tmp.path(), &["sweep", "--scenario", "saddle_break", "--outdir", "s"])), 0);
    assert_eq!(code(&edln(tmp.path(), &["run", "saddle_break", "--outdir", "r"])), 0);
    let a = only_run_dir(&tmp.path().join("s/saddle_break"));
    let b = only_run_dir(&tmp.path().join("r/saddle_break"));
    assert_eq!(a.file_name(), b.file_name());
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn verify_runs_invariant_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = edln(tmp.path(), &["verify", "--outdir", "o"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("gradient_vs_finite_difference_pass = 1e0"));
}

#[test]
fn solve_then_align_reports_perfect_alignment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&edln(dir, &["gen-data", "--out", "data.json", "--seed", "2"])), 0);
    let a = edln(dir, &["solve", "--data", "data.json", "--depth", "3", "--tag", "A", "--out", "a.json", "--net-out", "a.net"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = edln(dir, &["solve", "--data", "data.json", "--depth", "2", "--tag", "B", "--width", "7", "--embedding-cond", "5", "--net-out", "b.net"]);
    assert_eq!(code(&b), 0);
    let solution: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(solution["rank"], 4);
    let out = edln(dir, &["align", "--net-a", "a.net", "--net-b", "b.net", "--data", "data.json", "--out", "m.csv"]);
    assert_eq!(code(&out), 0);
    let line = stdout(&out).lines().find(|l| l.starts_with("min alignment")).unwrap().to_string();
    let min: f64 = line.split_whitespace().nth(2).unwrap().trim_end_matches(',').parse().unwrap();
    assert!(min > 1.0 - 1e-8, "{line}");
    assert!(fs::read_to_string(dir.join("m.csv")).unwrap().starts_with("layer,b1"));
    assert_eq!(code(&edln(dir, &["solve", "--data", "data.json", "--depth", "2", "--width", "2"])), 2);
}
