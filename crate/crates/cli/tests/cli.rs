use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn capsvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capsvm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = capsvm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two noisy clusters in the plane, written as LIBSVM lines.
fn toy_data(dir: &Path, m: usize) -> PathBuf {
    let mut text = String::new();
    for i in 0..m {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let t = i as f64;
        let x1 = 1.2 * y + 0.8 * (1.7 * t).sin();
        let x2 = 0.5 * (0.9 * t).cos() - 0.3 * y;
        text.push_str(&format!("{y:+} 1:{x1} 2:{x2}\n"));
    }
    let path = dir.join("toy.libsvm");
    fs::write(&path, text).unwrap();
    path
}

fn value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no {key} line in {stdout}"))
}

#[test]
fn exit_codes() {
    assert_eq!(capsvm(&["--help"]).status.code(), Some(0));
    assert_eq!(capsvm(&["--version"]).status.code(), Some(0));
    assert_eq!(capsvm(&["train", "--no-such-flag"]).status.code(), Some(1));
    let out = capsvm(&["train", "--data", "/nonexistent/file.libsvm", "--kernels", "linear", "--lambda", "1", "--beta", "0", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/file.libsvm"));
}

#[test]
fn bad_kernel_list_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 20);
    let out = capsvm(&["complexity", "--data", p(&data), "--kernels", "poly:0", "--out", p(&dir.path().join("c.csv"))]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 40);
    let model = dir.path().join("model.json");
    let stdout = ok(&["train", "--data", p(&data), "--kernels", "linear;rbf:0.5", "--lambda", "0.01", "--beta", "0.001", "--out", p(&model)]);
    assert_eq!(value(&stdout, "converged"), "true");
    let svs: usize = value(&stdout, "support_vectors").parse().unwrap();
    assert!(svs > 0 && svs <= 40);

    let preds = dir.path().join("pred.csv");
    ok(&["predict", "--model", p(&model), "--data", p(&data), "--out", p(&preds)]);
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,raw,label"));
    let truth: Vec<f64> = fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    let mut correct = 0;
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0].parse::<usize>().unwrap(), i);
        let raw: f64 = f[1].parse().unwrap();
        let label: f64 = f[2].parse().unwrap();
        assert_eq!(label, if raw >= 0.0 { 1.0 } else { -1.0 });
        if label == truth[i] {
            correct += 1;
        }
        rows += 1;
    }
    assert_eq!(rows, 40);
    assert!(correct >= 36, "{correct} of 40 training points");
}

#[test]
fn both_solvers_reach_the_same_objective() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 30);
    let run = |solver: &str| -> f64 {
        let out = dir.path().join(format!("{solver}.json"));
        let s = ok(&["train", "--data", p(&data), "--kernels", "poly:1-2", "--lambda", "0.1", "--beta", "0.01", "--solver", solver, "--out", p(&out)]);
        value(&s, "objective").parse().unwrap()
    };
    let (cd, lp) = (run("cd"), run("lp"));
    assert!((cd - lp).abs() <= 1e-4 * lp.max(1.0), "cd {cd}, lp {lp}");
}

#[test]
fn export_lp_writes_cplex_sections() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 8);
    let out = dir.path().join("train.lp");
    ok(&["export-lp", "--data", p(&data), "--kernels", "linear", "--lambda", "0", "--beta", "0.5", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let pos = |s: &str| text.find(s).unwrap_or_else(|| panic!("missing {s}"));
    assert!(pos("Minimize") < pos("Subject To"));
    assert!(pos("Subject To") < pos("End"));
}

#[test]
fn complexity_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 20);
    let out = dir.path().join("c.csv");
    ok(&["complexity", "--data", p(&data), "--kernels", "linear;poly:2", "--lambda", "2", "--beta", "0.5", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "family,spec,r_k,lambda,beta,Lambda_k");
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let r: f64 = f[2].parse().unwrap();
        let big: f64 = f[5].parse().unwrap();
        assert!(r > 0.0);
        assert!((big - (2.0 * r + 0.5)).abs() <= 1e-12 * big);
    }
}

fn cv_report(dir: &Path, data: &Path, name: &str) -> PathBuf {
    let out = dir.join(format!("{name}.csv"));
    ok(&[
        "cv", "--data", p(data), "--kernels", "linear;rbf:0.5", "--lambdas", "0.1,0.01", "--betas", "0.01,0.001",
        "--name", name, "--out", p(&out),
    ]);
    out
}

#[test]
fn cv_reports_repeat_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 40);
    let a = fs::read(cv_report(dir.path(), &data, "first")).unwrap();
    let b = fs::read(cv_report(dir.path(), &data, "second")).unwrap();
    let a = String::from_utf8(a).unwrap().replace("first", "second");
    assert_eq!(a.as_bytes(), b.as_slice());
    assert_eq!(a.lines().next(), Some("dataset,method,fold,lambda,beta,s,test_error_pct,num_svs,train_seconds"));
    assert_eq!(a.lines().count(), 6);
}

#[test]
fn benchmark_merges_baseline_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_data(dir.path(), 40);
    let report = cv_report(dir.path(), &data, "ionosphere");
    let baseline = dir.path().join("baseline.csv");
    fs::write(&baseline, "ionosphere,6.54,3.07,152.0,5.5\n").unwrap();
    let csv_out = dir.path().join("table.csv");
    let text = ok(&["benchmark", "--reports", p(&report), "--baseline", p(&baseline), "--csv", p(&csv_out)]);
    let header = text.lines().nth(1).unwrap();
    assert!(header.starts_with("dataset") && header.ends_with("L2-SVM"), "{header}");
    assert!(text.contains("6.54 (3.07)"));
    assert!(text.contains("152.0 (5.5)"));
    let csv = fs::read_to_string(&csv_out).unwrap();
    assert!(csv.lines().any(|l| l == "ionosphere,L2-SVM,6.54,3.07,152,5.5"), "{csv}");

    fs::write(&baseline, "").unwrap();
    let text = ok(&["benchmark", "--reports", p(&report), "--baseline", p(&baseline)]);
    assert!(!text.contains("L2-SVM"));
    assert_eq!(text.lines().nth(1).unwrap().split_whitespace().count(), 2);
}
