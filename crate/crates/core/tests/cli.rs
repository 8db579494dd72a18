use std::path::Path;
use std::process::{Command, Output};

use imagine::analytics::MetricsReport;

const SMALL: &[&str] = &[
    "world.train_scenes=60",
    "world.val_scenes=20",
    "world.test_scenes=20",
    "world.nd_scenes=15",
    "world.od_scenes=15",
    "imagination.epochs=2",
    "oracle.epochs=2",
    "guesser.epochs=3",
    "classifier.epochs=2",
    "probe.epochs=2",
    "joint.epochs=3",
];

fn imagine(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_imagine"));
    cmd.args(args).arg("--out").arg(out);
    for s in SMALL {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = imagine(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn generate_writes_five_splits_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let summary = ok(&a, &["generate"]);
    assert_eq!(summary.lines().count(), 5);
    ok(&b, &["generate"]);
    for split in ["train", "val", "test", "nd_test", "od_test"] {
        let file = format!("data/{split}.jsonl");
        assert_eq!(std::fs::read(a.join(&file)).unwrap(), std::fs::read(b.join(&file)).unwrap());
    }
    assert_eq!(std::fs::read(a.join("data/vocab.json")).unwrap(), std::fs::read(b.join("data/vocab.json")).unwrap());
    let c = dir.path().join("c");
    ok(&c, &["generate", "--seed", "1"]);
    assert_ne!(std::fs::read(a.join("data/train.jsonl")).unwrap(), std::fs::read(c.join("data/train.jsonl")).unwrap());
}

#[test]
fn default_config_generates_declared_split_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_imagine"))
        .args(["generate", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let lines = |s: &str| std::fs::read_to_string(dir.path().join(format!("data/{s}.jsonl"))).unwrap().lines().count();
    assert_eq!(
        [lines("train"), lines("val"), lines("test"), lines("nd_test"), lines("od_test")],
        [2000, 300, 500, 300, 300]
    );
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    std::fs::write(&file, "x").unwrap();
    assert_eq!(code(&imagine(&file.join("sub"), &["generate"])), 2);
    assert_eq!(code(&imagine(dir.path(), &["generate", "--set", "world.nope=1"])), 2);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "world.train_scenes = many\n").unwrap();
    assert_eq!(code(&imagine(dir.path(), &["generate", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&imagine(&dir.path().join("missing"), &["train", "imagination"])), 3);

    let run = dir.path().join("run");
    ok(&run, &["generate"]);
    let o = imagine(&run, &["train", "guesser:imagination"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("imagination.ckpt"));
    assert_eq!(code(&imagine(&run, &["train", "oracle:question+spatial+imagination"])), 3);
    assert_eq!(code(&imagine(&run, &["train", "questioner"])), 2);
    assert_eq!(code(&imagine(&run, &["train", "guesser:best"])), 2);
    assert_eq!(code(&imagine(&run, &["eval", "guesser"])), 3);
    assert_eq!(code(&imagine(&run, &["eval", "everything"])), 2);
    assert_eq!(code(&imagine(&run, &["train", "imagination", "--set", "imagination.lr=1e300"])), 4);
    assert_eq!(code(&imagine(&run, &["train", "imagination", "--set", "imagination.lr=nan"])), 2);
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small world\nseed = 5\nworld.train_scenes = 40\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_imagine");
    let o = Command::new(bin)
        .args(["config", "--config", cfg.to_str().unwrap(), "--set", "world.train_scenes=41"])
        .output()
        .unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 5\n"));
    assert!(text.contains("world.train_scenes = 41\n"));
    let o = Command::new(bin)
        .args(["config", "--config", cfg.to_str().unwrap(), "--seed", "9"])
        .output()
        .unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains("seed = 9\n"));
}

#[test]
fn full_pipeline_reports_and_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&run, &["generate"]);
    ok(&run, &["train", "imagination"]);
    let csv = std::fs::read_to_string(run.join("curves/imagination.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, 2);
    for c in [
        "oracle:question+spatial+category",
        "oracle:question+spatial+imagination",
        "guesser:category",
        "guesser:nocat",
        "guesser:predcat",
        "guesser:imagination",
        "joint",
    ] {
        ok(&run, &["train", c]);
    }
    let guesser_csv = std::fs::read_to_string(run.join("curves/guesser_nocat.csv")).unwrap();
    assert_eq!(guesser_csv.lines().count() - 1, 3);
    let joint_csv = std::fs::read_to_string(run.join("curves/joint.csv")).unwrap();
    assert_eq!(joint_csv.lines().skip(1).filter(|l| l.contains(",guesser,")).count(), 1);

    ok(&run, &["eval", "all"]);
    let all = MetricsReport::load(&run.join("reports/all.json")).unwrap();
    all.validate().unwrap();
    for key in [
        "oracle.question+spatial+imagination.val.overall",
        "guesser.imagination.test.accuracy",
        "gameplay.category.od_test.accuracy",
        "dialogue.nocat.test.lexical_diversity",
        "attributes.imagination.l_f1",
        "attributes.ceiling.l_f1",
        "grolla.predcat",
    ] {
        assert!(all.get(key).is_some(), "{key}");
    }
    let hand = (all.get("gameplay.nocat.test.accuracy").unwrap()
        + all.get("attributes.nocat.as_f1").unwrap()
        + (all.get("gameplay.nocat.nd_test.accuracy").unwrap() + all.get("gameplay.nocat.od_test.accuracy").unwrap())
            / 2.0)
        / 3.0;
    assert!((all.get("grolla.nocat").unwrap() - hand).abs() < 1e-12);
    assert!(run.join("archives/imagination_od_test.jsonl").exists());

    ok(&run, &["eval", "zeroshot"]);
    let z = MetricsReport::load(&run.join("reports/zeroshot.json")).unwrap();
    assert!(z.get("gameplay.category.nd_test.accuracy").is_some());
    assert!(z.get("gameplay.category.od_test.accuracy").is_some());
    assert!(z.get("gameplay.category.test.accuracy").is_none());

    let first = std::fs::read(run.join("reports/all.json")).unwrap();
    ok(&run, &["eval", "all"]);
    assert_eq!(first, std::fs::read(run.join("reports/all.json")).unwrap());

    let all_path = run.join("reports/all.json");
    let p = all_path.to_str().unwrap();
    let zeros = ok(&run, &["compare", p, p]);
    assert!(zeros.lines().skip(1).all(|l| l.ends_with(",0")));

    let other = dir.path().join("other");
    ok(&other, &["generate", "--seed", "1"]);
    ok(&other, &["train", "guesser:nocat", "--seed", "1"]);
    ok(&other, &["eval", "guesser", "--seed", "1", "--set", "guesser.modes=nocat"]);
    let g = MetricsReport::load(&other.join("reports/guesser.json")).unwrap();
    let deltas = ok(&run, &["compare", p, other.join("reports/guesser.json").to_str().unwrap()]);
    let row = deltas.lines().find(|l| l.starts_with("guesser.nocat.test.accuracy,")).unwrap();
    let d: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    let hand = g.get("guesser.nocat.test.accuracy").unwrap() - all.get("guesser.nocat.test.accuracy").unwrap();
    assert_eq!(d, hand);

    let lonely = dir.path().join("lonely.json");
    std::fs::write(&lonely, r#"{"metrics":{"x":0.5},"notes":{}}"#).unwrap();
    assert_eq!(code(&imagine(&run, &["compare", p, lonely.to_str().unwrap()])), 2);
}
