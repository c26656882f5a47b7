use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use transmeter::train::TrainConfig;
use transmeter::transfer::{reports_from_jsonl, reports_to_jsonl, TransferReport};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transmeter"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TRANSMETER_REGISTRY")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = run(args, cwd);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn synthetic(root: &Path) {
    ok(&["synthetic", "--out", "data", "--seed", "3"], root);
}

const QUICK: [&str; 6] = ["--max-epochs", "4", "--patience", "1", "--split-seed", "5"];

#[test]
fn synthetic_writes_suite_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic(root);
    ok(&["synthetic", "--out", "again", "--seed", "3"], root);
    for f in ["target.csv", "source_a.csv", "source_b.csv", "source_c.csv", "NOTES.txt", "registry.toml"] {
        let a = fs::read(root.join("data").join(f)).unwrap();
        assert_eq!(a, fs::read(root.join("again").join(f)).unwrap(), "{f}");
    }
    let csvs = fs::read_dir(root.join("data"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 4);
    let notes = fs::read_to_string(root.join("data/NOTES.txt")).unwrap();
    assert!(notes.contains("expected best source: source_a"));
    assert!(root.join("data/manifest.json").is_file());

    fs::write(root.join("blocker"), "").unwrap();
    let (code, err) = fails(&["synthetic", "--out", "blocker/sub"], root);
    assert_eq!(code, 2, "{err}");
    let (code, _) = fails(&["synthetic", "--out", "x", "--suite", "nope"], root);
    assert_eq!(code, 2);
}

#[test]
fn pretrain_contract() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic(root);
    let mut args = vec!["pretrain", "--registry", "data/registry.toml", "--dataset", "source_a", "--seed", "4"];
    args.extend(QUICK);
    let out = ok(&args, root);
    let acc: f64 = out
        .lines()
        .find_map(|l| l.split("held-out accuracy ").nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let ckpt = root.join("data/checkpoints/source_a.json");
    let first = fs::read(&ckpt).unwrap();
    ok(&args, root);
    assert_eq!(first, fs::read(&ckpt).unwrap());
    assert!(root.join("runs/pretrain/source_a/manifest.json").is_file());

    let (code, err) = fails(&["pretrain", "--registry", "data/registry.toml", "--dataset", "mystery"], root);
    assert_eq!(code, 2);
    assert!(err.contains("mystery"), "{err}");
    let (code, _) = fails(&["pretrain", "--registry", "nowhere.toml", "--dataset", "source_a"], root);
    assert_eq!(code, 2);
}

#[test]
fn registry_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic(root);
    let out = Command::new(env!("CARGO_BIN_EXE_transmeter"))
        .args(["pretrain", "--dataset", "source_b", "--max-epochs", "2"])
        .current_dir(root)
        .env("TRANSMETER_REGISTRY", root.join("data/registry.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("data/checkpoints/source_b.json").is_file());
}

#[test]
fn measure_contract() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic(root);
    let base = ["measure", "--registry", "data/registry.toml", "--target", "target", "--fast", "--folds", "2"];

    let mut missing: Vec<&str> = base.to_vec();
    missing.extend(["--all", "--out-dir", "m0"]);
    let (code, err) = fails(&missing, root);
    assert_eq!(code, 2);
    assert!(err.contains("pretrain") && err.contains("--pretrain-missing"), "{err}");

    let mut all: Vec<&str> = base.to_vec();
    all.extend(["--all", "--pretrain-missing", "--ablation", "no_recon", "--out-dir", "m1"]);
    all.extend(QUICK);
    ok(&all, root);
    let reports = reports_from_jsonl(&fs::read_to_string(root.join("m1/reports.jsonl")).unwrap()).unwrap();
    let names: Vec<&str> = reports.iter().map(|r| r.source.as_str()).collect();
    assert_eq!(names, ["source_a", "source_b", "source_c"]);
    assert!(reports.iter().all(|r| !r.chosen_config.use_reconstruction));
    assert!(reports.iter().all(|r| (0.0..=1.0).contains(&r.acc_t) && r.wall_time_seconds.is_none()));
    let summary = fs::read_to_string(root.join("m1/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("source,target,acc_0,acc_T,transferability,flip,alpha,beta,seed,wall_time"));
    for f in ["manifest.json", "models/source_a.json", "histories/source_c.json", "pretrained/source_b.json"] {
        assert!(root.join("m1").join(f).is_file(), "{f}");
    }

    let mut unknown: Vec<&str> = base.to_vec();
    unknown.extend(["--source", "ghost", "--pretrain-missing"]);
    let (code, err) = fails(&unknown, root);
    assert_eq!(code, 2);
    assert!(err.contains("ghost"));
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synthetic(root);
    let mut args = vec![
        "measure", "--registry", "data/registry.toml", "--target", "target", "--source", "source_b", "--fast",
        "--folds", "2", "--pretrain-missing", "--out-dir", "m",
    ];
    args.extend(QUICK);
    ok(&args, root);
    ok(&["replay", "m/manifest.json", "--out-dir", "m2"], root);
    assert_eq!(
        fs::read(root.join("m/reports.jsonl")).unwrap(),
        fs::read(root.join("m2/reports.jsonl")).unwrap()
    );
    let csv = root.join("data/target.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str(&text.lines().nth(1).unwrap().to_owned());
    text.push('\n');
    fs::write(&csv, text).unwrap();
    let (code, err) = fails(&["replay", "m/manifest.json", "--out-dir", "m3"], root);
    assert_eq!(code, 2);
    assert!(err.contains("target.csv"), "{err}");
}

fn report(source: &str, score: f64) -> TransferReport {
    TransferReport {
        source: source.into(),
        target: "t".into(),
        acc_0: 0.5,
        acc_t: 0.5,
        transferability: score,
        chosen_config: TrainConfig::default(),
        flip_used: false,
        cv_score: 0.5,
        stopped_epoch: 1,
        best_epoch: 1,
        baseline_seed: 1,
        wall_time_seconds: None,
    }
}

#[test]
fn rank_contract() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let nine: Vec<TransferReport> = (0..9).map(|i| report(&format!("s{i}"), i as f64)).collect();
    fs::write(root.join("nine.jsonl"), reports_to_jsonl(&nine).unwrap()).unwrap();
    let out = ok(&["rank", "nine.jsonl", "--k", "2", "--out-dir", "r"], root);
    assert!(out.contains("top 2: s8, s7"), "{out}");
    assert!(fs::read_to_string(root.join("r/ranking.txt")).unwrap().contains("top 2"));
    assert!(root.join("r/manifest.json").is_file());

    let tied = vec![report("a", 12.0), report("b", 12.0), report("c", 5.0)];
    fs::write(root.join("tied.jsonl"), reports_to_jsonl(&tied).unwrap()).unwrap();
    let out = ok(&["rank", "tied.jsonl", "--k", "1", "--out-dir", "r"], root);
    assert!(out.contains("top 1: a, b") && out.contains("tie at rank 1"), "{out}");

    let out = ok(&["rank", "tied.jsonl", "--k", "10", "--out-dir", "r"], root);
    assert!(out.contains("top 10: a, b, c"), "{out}");

    fs::write(root.join("empty.jsonl"), "").unwrap();
    assert_eq!(fails(&["rank", "empty.jsonl", "--out-dir", "r"], root).0, 2);
    assert_eq!(fails(&["rank", "--out-dir", "r"], root).0, 2);
    assert_eq!(fails(&["rank", "tied.jsonl", "--k", "0", "--out-dir", "r"], root).0, 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fails(&["bogus"], dir.path()).0, 2);
    assert_eq!(fails(&["measure", "--target", "t"], dir.path()).0, 2);
    assert!(run(&["--help"], dir.path()).status.success());
}
