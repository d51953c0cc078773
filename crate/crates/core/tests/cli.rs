use std::path::Path;
use std::process::{Command, Output};

fn nsbm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsbm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = nsbm(&["--help"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("analyze"));
    assert_eq!(code(&nsbm(&["--version"], dir.path())), 0);
    assert_eq!(code(&nsbm(&["simulate", "--help"], dir.path())), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nsbm(&[], dir.path())), 1);
    assert_eq!(code(&nsbm(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&nsbm(&["detect", "--in", "x.csv", "--k", "0", "--out", "y.csv"], dir.path())), 1);
    assert_eq!(code(&nsbm(&["analyze", "--in", "x.csv", "--k", "1", "--out", "y.json"], dir.path())), 1);
    assert_eq!(
        code(&nsbm(&["detect", "--in", "x.csv", "--k", "2", "--method", "spectral", "--out", "y.csv"], dir.path())),
        1
    );
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = nsbm(&["detect", "--in", "absent.csv", "--k", "2", "--out", "y.csv"], dir.path());
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.csv"));

    std::fs::write(dir.path().join("bad.csv"), "from,to\n1,2\n").unwrap();
    assert_eq!(code(&nsbm(&["detect", "--in", "bad.csv", "--k", "2", "--out", "y.csv"], dir.path())), 2);

    std::fs::write(dir.path().join("bad_weight.csv"), "source,target,weight\n1,2,heavy\n").unwrap();
    let out = nsbm(&["detect", "--in", "bad_weight.csv", "--k", "2", "--out", "y.csv"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad_weight.csv:2"));
}

fn two_cliques() -> String {
    let mut s = String::from("source,target\n");
    for block in [0, 5] {
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    s += &format!("n{},n{}\n", block + i, block + j);
                }
            }
        }
    }
    s += "n0,n5\n";
    s
}

#[test]
fn detect_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.csv"), two_cliques()).unwrap();
    let out = nsbm(&["detect", "--in", "g.csv", "--k", "2", "--out", "labels.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert!(labels.starts_with("id,community\n"));
    assert_eq!(labels.lines().count(), 11);

    // only n0 sends across, so the strict rule leaves the other community without Psi
    let out = nsbm(&["estimate", "--in", "g.csv", "--labels", "labels.csv", "--out", "est.json"], dir.path());
    assert_eq!(code(&out), 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("est.json")).unwrap()).unwrap();
    assert!(!report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn generate_writes_edges_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("design.json"),
        r#"{"n": 60, "K": 2, "beta": 0.2, "t": 0.5, "target_avg_degree": 8}"#,
    )
    .unwrap();
    let args = ["generate", "--design", "design.json", "--seed", "3", "--out", "e.csv", "--labels-out", "l.csv"];
    assert_eq!(code(&nsbm(&args, dir.path())), 0);
    let first = std::fs::read(dir.path().join("e.csv")).unwrap();
    assert_eq!(code(&nsbm(&args, dir.path())), 0);
    assert_eq!(first, std::fs::read(dir.path().join("e.csv")).unwrap());
    assert!(String::from_utf8_lossy(&first).starts_with("source,target"));
    assert_eq!(std::fs::read_to_string(dir.path().join("l.csv")).unwrap().lines().count(), 61);
}
