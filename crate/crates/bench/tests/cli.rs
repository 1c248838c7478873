//! End-to-end runs of the `permucate` binary.

use std::fs;
use std::process::{Command, Output};

fn permucate(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permucate"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_fit_importance_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let o = permucate(&["simulate", "--dgp", "ld", "--n", "300", "--seed", "4", "--out", "data.csv"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let data = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert!(data.starts_with("x1,x2,x3,x4,x5,x6,a,y,tau_oracle\n"));
    assert_eq!(data.lines().count(), 301);

    let o = permucate(&["fit", "--data", "data.csv"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let s = stdout(&o);
    for key in ["po_risk,", "r_risk,", "pehe,"] {
        assert!(s.contains(key), "{s}");
    }

    let o = permucate(&["importance", "--data", "data.csv", "--seeds", "2", "--permutations", "5"], dir.path());
    assert!(o.status.success(), "{o:?}");
    // header + 2 methods x 6 variables
    assert_eq!(stdout(&o).lines().count(), 13);
}

#[test]
fn bench_resume_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), "n_grid = 150\nn_seeds = 2\nn_permutations = 5\noutput_dir = out\n").unwrap();
    let o = permucate(&["bench", "--config", "c.txt", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let first = fs::read(dir.path().join("out/fig1_ld_power.csv")).unwrap();
    // 6 variables x 2 methods x 5 folds x 2 seeds
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 1 + 120);
    let manifest = fs::read_to_string(dir.path().join("out/fig1_ld_power.manifest.json")).unwrap();
    assert!(manifest.contains("\"master_seed\": 7"), "{manifest}");

    let o = permucate(&["bench", "--config", "c.txt", "--seed", "7", "--resume"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0 cells computed)"));
    assert_eq!(fs::read(dir.path().join("out/fig1_ld_power.csv")).unwrap(), first);

    // a different seed is a different configuration
    let o = permucate(&["bench", "--config", "c.txt", "--seed", "8", "--resume"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = permucate(&["plot", "--input", "out/fig1_ld_power.csv", "--out-dir", "plots"], dir.path());
    assert!(o.status.success(), "{o:?}");
    assert_eq!(fs::read_dir(dir.path().join("plots")).unwrap().count(), 2);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), "n_grid = 150\nn_seeds = 3\nn_permutations = 5\n").unwrap();
    let mut outputs = Vec::new();
    for (workers, out) in [("1", "a"), ("4", "b")] {
        let o = Command::new(env!("CARGO_BIN_EXE_permucate"))
            .args(["bench", "--config", "c.txt", "--output-dir", out])
            .env("PERMUCATE_WORKERS", workers)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(o.status.success(), "{o:?}");
        outputs.push(fs::read(dir.path().join(out).join("fig1_ld_power.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "n_seeds = 2\nalpha = 1.5\n").unwrap();
    let o = permucate(&["bench", "--config", "bad.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alpha") && err.contains("line 2"), "{err}");

    let o = Command::new(env!("CARGO_BIN_EXE_permucate"))
        .args(["bench"])
        .env("PERMUCATE_WORKERS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    fs::write(dir.path().join("bad.csv"), "x1,a,y\n0.5,3,1\n").unwrap();
    assert_eq!(permucate(&["fit", "--data", "bad.csv"], dir.path()).status.code(), Some(3));
    assert_eq!(permucate(&["fit", "--data", "missing.csv"], dir.path()).status.code(), Some(3));

    // a single treated row cannot be cross-fitted
    fs::write(dir.path().join("tiny.csv"), "x1,a,y\n0.1,1,1\n0.2,0,2\n0.3,0,1\n").unwrap();
    assert_eq!(permucate(&["fit", "--data", "tiny.csv"], dir.path()).status.code(), Some(3));

    assert_eq!(permucate(&["simulate", "--dgp", "nope", "--n", "10"], dir.path()).status.code(), Some(2));
    assert_eq!(permucate(&["frobnicate"], dir.path()).status.code(), Some(2));
}
