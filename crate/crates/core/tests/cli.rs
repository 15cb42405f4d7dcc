use std::path::Path;
use std::process::{Command, Output};

fn cusplab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cusplab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn bad_word_exits_one_and_names_the_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "classes = [\"ab\", \"aq\"]\n");
    let out = cusplab(&["lengths", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("class 1 \"aq\""), "{err}");
    // nothing is written when validation fails
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 3\n\n[flow]\nt_mx = 2.0\n");
    let out = cusplab(&["flow", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn flag_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cusplab(&["flow", "--threads", "0"], dir.path()).status.code(), Some(1));
    assert_eq!(cusplab(&["flow", "--tolerance-scale", "-1"], dir.path()).status.code(), Some(1));
}

#[test]
fn flow_run_writes_record_and_honours_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "output_dir = \"from_file\"\n[flow]\nt_max = 1.0\n");
    let out = cusplab(&["flow", "--config", &cfg, "--out", "from_flag", "--threads", "1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("from_flag");
    for f in ["flow.csv", "flow_run.json", "flow_timing.json", "config.toml"] {
        assert!(o.join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("from_file").exists());
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("flow_run.json")).unwrap()).unwrap();
    assert_eq!(rec["status"], "ok");
    assert_eq!(rec["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cusplab(&["nosuch"], dir.path()).status.code(), Some(1));
    assert_eq!(cusplab(&["flow", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(cusplab(&["--help"], dir.path()).status.code(), Some(0));
}
