use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grl")).args(args).output().expect("grl runs")
}

fn ok(args: &[&str]) -> String {
    let o = grl(args);
    assert!(
        o.status.success(),
        "grl {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, subjects: &str, nodes: &str, effect: &str) -> String {
    ok(&["generate", "--subjects", subjects, "--nodes", nodes, "--seed", "7", "--effect", effect, "--out", p(dir)])
}

const QUICK: [&str; 8] = ["--folds", "3", "--max-epochs", "8", "--patience", "3", "--seed", "1"];

#[test]
fn generate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = generate(&tmp.path().join("a"), "30", "8", "0.2");
    let b = generate(&tmp.path().join("b"), "30", "8", "0.2");
    assert!(a.contains("30 subjects"), "{a}");
    let digest = |s: &str| s.lines().find(|l| l.starts_with("digest")).unwrap().to_string();
    assert_eq!(digest(&a), digest(&b));
    assert!(tmp.path().join("a/run_manifest.json").exists());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subjects"].as_array().unwrap().len(), 30);
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = grl(&["generate", "--nodes", "8", "--out", p(tmp.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--subjects"));

    let data = tmp.path().join("d");
    generate(&data, "24", "6", "0.2");
    let o = grl(&["train", "--data", p(&data), "--lambda", "-1", "--out", p(&tmp.path().join("r"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));

    let o = grl(&["baseline", "--mode", "nonsense", "--data", p(&data), "--out", p(&tmp.path().join("b"))]);
    assert!(!o.status.success());

    let o = grl(&["sweep", "--stage", "two", "--data", p(&data), "--out", p(&tmp.path().join("s"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--top-from"));
}

#[test]
fn train_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    generate(&data, "30", "8", "0.3");
    let run = |dir: &Path| {
        let mut args = vec![
            "train", "--data", p(&data), "--arch", "8x4", "--concat", "--pool", "mean", "--lambda", "0.2", "--out", p(dir),
        ];
        args.extend(QUICK);
        ok(&args)
    };
    let r1 = tmp.path().join("r1");
    let r2 = tmp.path().join("r2");
    run(&r1);
    run(&r2);
    assert!(r1.join("checkpoint.json").exists());
    for f in ["metrics_stable.csv", "metrics_stable.json", "checkpoint.json", "folds.json"] {
        assert_eq!(fs::read(r1.join(f)).unwrap(), fs::read(r2.join(f)).unwrap(), "{f}");
    }

    let out = tmp.path().join("a");
    let stdout = ok(&[
        "analyze", "--data", p(&data), "--checkpoint", p(&r1.join("checkpoint.json")), "--out", p(&out),
    ]);
    assert!(stdout.contains("alpha = 0.05"), "{stdout}");
    assert!(stdout.contains("recall"), "{stdout}");
    for f in ["edge_tests.csv", "subgraph_weaker.json", "subgraph_stronger.json", "embeddings.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let edges = fs::read_to_string(out.join("edge_tests.csv")).unwrap();
    assert_eq!(edges.lines().count(), 1 + 28);
}

#[test]
fn baselines_run_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    generate(&data, "30", "8", "0.3");
    let main = tmp.path().join("main");
    let mut args = vec!["train", "--data", p(&data), "--arch", "4x2", "--out", p(&main)];
    args.extend(QUICK);
    ok(&args);
    for mode in ["two-step", "combined", "ae-sc", "ae-fc", "features"] {
        let out = tmp.path().join(mode);
        let mut args = vec![
            "baseline", "--mode", mode, "--data", p(&data), "--arch", "4x2", "--compare", p(&main), "--out", p(&out),
        ];
        args.extend(QUICK);
        ok(&args);
        let cmp = fs::read_to_string(out.join("comparison.csv")).unwrap();
        assert_eq!(cmp.lines().count(), 1 + 3, "{mode}");
    }
    let svm = tmp.path().join("svm");
    let mut args = vec![
        "baseline", "--mode", "features", "--source", "both", "--clf", "svm", "--data", p(&data), "--out", p(&svm),
    ];
    args.extend(QUICK);
    assert!(ok(&args).contains("14 per subject"));

    let mismatch = tmp.path().join("mismatch");
    let args = [
        "baseline", "--mode", "features", "--data", p(&data), "--folds", "3", "--seed", "2", "--compare", p(&main),
        "--out", p(&mismatch),
    ];
    assert!(!grl(&args).status.success(), "fold plans from different seeds must not be joined");
}

#[test]
fn sweeps_have_the_protocol_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    generate(&data, "20", "8", "0.3");
    let sweep = |dir: &Path, parallel: &str| {
        ok(&[
            "sweep", "--stage", "one", "--data", p(&data), "--folds", "3", "--max-epochs", "2", "--patience", "1",
            "--time-basis", "epochs", "--seed", "3", "--parallel", parallel, "--out", p(dir),
        ])
    };
    let s1 = tmp.path().join("s1");
    let s4 = tmp.path().join("s4");
    sweep(&s1, "1");
    sweep(&s4, "4");
    let csv = fs::read_to_string(s1.join("stage_one_stable.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 57);
    assert_eq!(csv, fs::read_to_string(s4.join("stage_one_stable.csv")).unwrap());

    let two = tmp.path().join("two");
    ok(&[
        "sweep", "--stage", "two", "--top-from", p(&s1.join("stage_one.json")), "--data", p(&data), "--folds", "3",
        "--max-epochs", "2", "--patience", "1", "--seed", "3", "--out", p(&two),
    ]);
    let csv = fs::read_to_string(two.join("stage_two_stable.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 48);
    assert!(two.join("checkpoint.json").exists());
}
