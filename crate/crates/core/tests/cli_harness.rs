mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::data_dir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afcoevo"))
}

fn have_mnist() -> bool {
    let ok = data_dir().join("mnist").is_dir();
    if !ok {
        eprintln!("MNIST not available; skipped");
    }
    ok
}

fn small_run(out: &Path, extra: &[&str]) -> std::process::Output {
    let mut cmd = bin();
    cmd.args(["run", "--dataset", "mnist", "--arch", "fcn", "--baseline", "relu", "--seed", "7", "--threads", "1"])
        .args(["--subsample", "600", "--epochs", "2", "--fitness-epochs", "1", "--max-iter", "1", "--quiet"])
        .arg("--data-dir")
        .arg(data_dir())
        .arg("--out")
        .arg(out)
        .args(extra);
    cmd.output().unwrap()
}

const CSVS: [&str; 4] = ["replicates.csv", "summary.csv", "history.csv", "training.csv"];

#[test]
fn standard_run_writes_reports() {
    if !have_mnist() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--methods", "standard", "--replicates", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in CSVS.iter().chain(&["best_configurations.txt", "replicates/replicate-000.json"]) {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let rows = fs::read_to_string(dir.path().join("replicates.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.lines().nth(1).unwrap().contains("standard,ReLU(x),ReLU(x),ReLU(x)"));
}

#[test]
fn same_seed_gives_identical_csvs_and_summary_is_consistent() {
    if !have_mnist() {
        return;
    }
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--methods", "standard,random,coevo", "--replicates", "2"];
    assert!(small_run(a.path(), &args).status.success());
    assert!(small_run(b.path(), &args).status.success());
    for f in CSVS {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }

    // Means recomputed from the per-replicate table.
    let mut reps = csv::Reader::from_path(a.path().join("replicates.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reps.records().map(Result::unwrap).collect();
    let mut summary = csv::Reader::from_path(a.path().join("summary.csv")).unwrap();
    let mut n = 0;
    for s in summary.records().map(Result::unwrap) {
        let method = &s[3];
        let vals: Vec<f64> = rows.iter().filter(|r| &r[5] == method).map(|r| r[13].parse().unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - s[5].parse::<f64>().unwrap()).abs() <= 1e-12, "{method}");
        assert_eq!(vals.len(), 2);
        n += 1;
    }
    assert_eq!(n, 3);

    // Rerunning a finished directory rewrites nothing.
    let before: Vec<_> = CSVS.iter().map(|f| fs::metadata(a.path().join(f)).unwrap().modified().unwrap()).collect();
    assert!(small_run(a.path(), &args).status.success());
    let after: Vec<_> = CSVS.iter().map(|f| fs::metadata(a.path().join(f)).unwrap().modified().unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn decode_prints_the_sigmoid() {
    let out = bin().args(["decode", "--sigmoid-fixture"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "(1 / (exp((x * -1)) + 1))");
}

#[test]
fn unknown_architecture_is_a_usage_error() {
    let out = bin().args(["run", "--arch", "gru"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gru") && err.contains("Usage"), "{err}");
}

#[test]
fn missing_data_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--dataset", "usps", "--quiet", "--data-dir"])
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fitness_scores_a_serialized_triple() {
    if !have_mnist() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("triple.json");
    let afs = afcoevo::search::Baseline::Relu.triple();
    fs::write(&p, serde_json::to_string(&afs).unwrap()).unwrap();
    let out = bin()
        .args(["fitness", "--subsample", "500", "--fitness-epochs", "1", "--data-dir"])
        .arg(data_dir())
        .arg(&p)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let f: f64 = text.lines().find_map(|l| l.strip_prefix("fitness")).unwrap().trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&f));
}
