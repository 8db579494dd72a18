use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::RunConfig;
use super::pipeline::*;
use crate::analytics::{compare_reports, deltas_csv, grolla, MetricsReport};
use crate::error::{Error, Result};
use crate::gameplay::{write_archive, Answerer, ScheduleEntry};
use crate::guesser::{GuesserCurve, GuesserModel, ReprMode};
use crate::imagination::{ImaginationModel, TrainingCurve};
use crate::numerics::Checkpoint;
use crate::oracle::{FeatureSet, OracleCurve, OracleModel};
use crate::world::{read_scenes, write_scenes, CategoryVocabulary, Splits};

pub const SPLITS: [&str; 5] = ["train", "val", "test", "nd_test", "od_test"];

/// Output directory layout.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
    pub data: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig, out: &Path) -> Self {
        let data = Path::new(&cfg.paths.data);
        Self {
            out: out.to_path_buf(),
            data: if data.is_absolute() { data.to_path_buf() } else { out.join(data) },
        }
    }

    pub fn split_file(&self, split: &str) -> PathBuf {
        self.data.join(format!("{split}.jsonl"))
    }

    pub fn vocab_file(&self) -> PathBuf {
        self.data.join("vocab.json")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.out.join("checkpoints").join(format!("{name}.ckpt"))
    }

    pub fn curve(&self, name: &str) -> PathBuf {
        self.out.join("curves").join(format!("{name}.csv"))
    }

    pub fn report(&self, suite: &str) -> (PathBuf, PathBuf) {
        let dir = self.out.join("reports");
        (dir.join(format!("{suite}.json")), dir.join(format!("{suite}.csv")))
    }

    pub fn archive(&self, name: &str, split: &str) -> PathBuf {
        self.out.join("archives").join(format!("{name}_{split}.jsonl"))
    }

    pub fn log(&self) -> PathBuf {
        self.out.join("run.log")
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends a timestamped line to the run log; the only non-deterministic output.
pub fn log(layout: &Layout, message: &str) {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let path = layout.log();
    if ensure_parent(&path).is_ok() {
        if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(&path) {
            let _ = writeln!(f, "{secs} {message}");
        }
    }
}

fn save_checkpoint(layout: &Layout, name: &str, ck: &Checkpoint) -> Result<PathBuf> {
    let path = layout.checkpoint(name);
    ensure_parent(&path)?;
    ck.save(&path)?;
    Ok(path)
}

fn load_checkpoint(layout: &Layout, name: &str, needed_by: &str) -> Result<Checkpoint> {
    let path = layout.checkpoint(name);
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{needed_by} needs checkpoint {}; train it first",
            path.display()
        )));
    }
    Checkpoint::load(&path)
}

pub fn load_dataset(layout: &Layout) -> Result<Dataset> {
    let vocab_path = layout.vocab_file();
    if !vocab_path.exists() {
        return Err(Error::Dependency(format!(
            "dataset missing at {}; run `generate` first",
            layout.data.display()
        )));
    }
    let vocab = CategoryVocabulary::load_json(&vocab_path)?;
    let read = |s: &str| read_scenes(&layout.split_file(s));
    let splits = Splits {
        train: read("train")?,
        val: read("val")?,
        test: read("test")?,
        nd_test: read("nd_test")?,
        od_test: read("od_test")?,
    };
    Ok(Dataset::new(vocab, splits))
}

pub fn cmd_generate(cfg: &RunConfig, layout: &Layout) -> Result<String> {
    let ds = generate_dataset(cfg)?;
    std::fs::create_dir_all(&layout.data).map_err(|e| Error::io(&layout.data, e))?;
    ds.vocab.save_json(&layout.vocab_file())?;
    let mut summary = String::new();
    for name in SPLITS {
        let scenes = ds.split(name)?;
        write_scenes(&layout.split_file(name), scenes)?;
        let objects: usize = scenes.iter().map(|s| s.objects.len()).sum();
        summary.push_str(&format!("{name}: {} scenes, {objects} objects\n", scenes.len()));
    }
    write_text(&layout.data.join("config.txt"), &cfg.to_text())?;
    Ok(summary)
}

fn imagination_curve_csv(c: &TrainingCurve) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_hinge_rate\n");
    for e in &c.epochs {
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_hinge_rate));
    }
    s
}

fn accuracy_curve_csv(epochs: &[(usize, f64, f64)]) -> String {
    let mut s = String::from("epoch,train_loss,val_accuracy\n");
    for (e, l, a) in epochs {
        s.push_str(&format!("{e},{l},{a}\n"));
    }
    s
}

fn schedule_csv(log: &[ScheduleEntry]) -> String {
    let mut s = String::from("epoch,objective,train_loss\n");
    for e in log {
        let obj = match e.objective {
            crate::gameplay::Objective::Guesser => "guesser",
            crate::gameplay::Objective::Support => "support",
        };
        s.push_str(&format!("{},{obj},{}\n", e.epoch, e.loss));
    }
    s
}

fn oracle_name(f: &FeatureSet) -> String {
    format!("oracle_{}", f.name())
}

fn load_imagination(layout: &Layout, needed_by: &str) -> Result<ImaginationModel> {
    ImaginationModel::from_checkpoint(&load_checkpoint(layout, "imagination", needed_by)?)
}

fn load_oracle(layout: &Layout, features: &str) -> Result<OracleModel> {
    let f = FeatureSet::parse(features)?;
    let needed_by = format!("oracle {}", f.name());
    let ck = load_checkpoint(layout, &oracle_name(&f), "evaluation")?;
    let img = if f.imagination {
        Some(load_imagination(layout, &needed_by)?)
    } else {
        None
    };
    OracleModel::from_checkpoint(&ck, img)
}

/// Loads a guesser by mode name; `joint` is the jointly trained imagination guesser.
fn load_guesser(layout: &Layout, name: &str) -> Result<GuesserModel> {
    if name == "joint" {
        let img = ImaginationModel::from_checkpoint(&load_checkpoint(layout, "joint_imagination", "joint guesser")?)?;
        let ck = load_checkpoint(layout, "joint_guesser", "evaluation")?;
        return GuesserModel::from_checkpoint(&ck, Some(img));
    }
    let mode = ReprMode::parse(name)?;
    let ck = load_checkpoint(layout, &format!("guesser_{name}"), "evaluation")?;
    let img = if mode == ReprMode::Imagination {
        Some(load_imagination(layout, "the imagination guesser")?)
    } else {
        None
    };
    GuesserModel::from_checkpoint(&ck, img)
}

/// Trains `component` and writes its checkpoint and per-epoch CSV.
pub fn cmd_train(cfg: &RunConfig, layout: &Layout, component: &str) -> Result<String> {
    let ds = load_dataset(layout)?;
    let (kind, arg) = component.split_once(':').unwrap_or((component, ""));
    match kind {
        "imagination" => {
            let (model, curve) = train_imagination_model(cfg, &ds)?;
            let path = save_checkpoint(layout, "imagination", &model.to_checkpoint())?;
            write_text(&layout.curve("imagination"), &imagination_curve_csv(&curve))?;
            Ok(format!("imagination: {} epochs, best {} -> {}\n", curve.epochs.len(), curve.best_epoch, path.display()))
        }
        "oracle" => {
            let f = FeatureSet::parse(if arg.is_empty() { &cfg.eval.oracle } else { arg })?;
            let img = if f.imagination {
                Some(load_imagination(layout, &format!("oracle:{}", f.name()))?)
            } else {
                None
            };
            let (model, curve): (OracleModel, OracleCurve) = train_oracle_model(cfg, &ds, f, img)?;
            let name = oracle_name(&f);
            let path = save_checkpoint(layout, &name, &model.to_checkpoint())?;
            write_text(&layout.curve(&name), &accuracy_curve_csv(&curve.epochs))?;
            Ok(format!("{name}: {} epochs, best {} -> {}\n", curve.epochs.len(), curve.best_epoch, path.display()))
        }
        "guesser" => {
            let mode = ReprMode::parse(arg)?;
            let img = if mode == ReprMode::Imagination {
                Some(load_imagination(layout, "guesser:imagination")?)
            } else {
                None
            };
            let gold = GoldData::new(cfg, &ds)?;
            let (model, curve): (GuesserModel, GuesserCurve) = train_guesser_model(cfg, &ds, &gold, mode, img)?;
            let name = format!("guesser_{}", mode.name());
            let path = save_checkpoint(layout, &name, &model.to_checkpoint())?;
            write_text(&layout.curve(&name), &accuracy_curve_csv(&curve.epochs))?;
            Ok(format!("{name}: {} epochs, best {} -> {}\n", curve.epochs.len(), curve.best_epoch, path.display()))
        }
        "joint" => {
            let img = load_imagination(layout, "joint")?;
            let gold = GoldData::new(cfg, &ds)?;
            let (img, guesser, log) = train_joint(cfg, &ds, &gold, img)?;
            save_checkpoint(layout, "joint_imagination", &img.to_checkpoint())?;
            let path = save_checkpoint(layout, "joint_guesser", &guesser.to_checkpoint())?;
            write_text(&layout.curve("joint"), &schedule_csv(&log))?;
            Ok(format!("joint: {} epochs (n = {}) -> {}\n", log.len(), cfg.joint.n, path.display()))
        }
        other => Err(Error::Config(format!(
            "unknown component `{other}`; expected imagination, oracle:<features>, guesser:<mode> or joint"
        ))),
    }
}

fn answerer_oracle(cfg: &RunConfig, layout: &Layout) -> Result<Option<OracleModel>> {
    if cfg.eval.gold_answer_oracle {
        Ok(None)
    } else {
        load_oracle(layout, &cfg.eval.oracle).map(Some)
    }
}

fn answerer(oracle: &Option<OracleModel>) -> Answerer<'_> {
    match oracle {
        Some(m) => Answerer::Model(m),
        None => Answerer::GroundTruth,
    }
}

fn suite_oracle(cfg: &RunConfig, layout: &Layout, ds: &Dataset) -> Result<MetricsReport> {
    let mut r = MetricsReport::default();
    for f in &cfg.oracle.features {
        let m = load_oracle(layout, f)?;
        for split in ["val", "test"] {
            r.merge(oracle_metrics(cfg, ds, &m, split)?);
        }
    }
    Ok(r)
}

fn suite_guesser(cfg: &RunConfig, layout: &Layout, ds: &Dataset) -> Result<MetricsReport> {
    let mut r = MetricsReport::default();
    for name in &cfg.guesser.modes {
        let g = load_guesser(layout, name)?;
        r.set(format!("guesser.{name}.test.accuracy"), guesser_accuracy(cfg, ds, &g, "test")?);
    }
    Ok(r)
}

fn suite_gameplay(cfg: &RunConfig, layout: &Layout, ds: &Dataset, splits: &[&str]) -> Result<MetricsReport> {
    let oracle = answerer_oracle(cfg, layout)?;
    let ans = answerer(&oracle);
    let policy = cfg.policy()?;
    let mut r = MetricsReport::default();
    for name in &cfg.guesser.modes {
        let g = load_guesser(layout, name)?;
        for split in splits {
            let eval = play_split(cfg, ds, split, &ans, &g, &policy)?;
            let (m, archive) = gameplay_metrics(name, split, &eval)?;
            let path = layout.archive(name, split);
            ensure_parent(&path)?;
            write_archive(&path, &archive)?;
            r.merge(m);
        }
    }
    for split in splits {
        r.set(format!("gameplay.chance.{split}.accuracy"), chance_rate(ds.split(split)?));
    }
    if cfg.guesser.modes.is_empty() {
        r.note("gameplay", "no guessers configured");
    }
    Ok(r)
}

fn suite_attributes(cfg: &RunConfig, layout: &Layout, ds: &Dataset) -> Result<MetricsReport> {
    let oracle = answerer_oracle(cfg, layout)?;
    let ans = answerer(&oracle);
    let policy = cfg.policy()?;
    let mut r = MetricsReport::default();
    for name in &cfg.guesser.modes {
        let g = load_guesser(layout, name)?;
        r.merge(probe_metrics(name, &probe_scores(cfg, ds, name, &ans, &g, &policy)?));
    }
    r.merge(probe_metrics("ceiling", &ceiling_probe(cfg, ds)?));
    Ok(r)
}

/// GroLLA-style macro average per guesser, from metrics already in `r`.
fn add_grolla(cfg: &RunConfig, r: &mut MetricsReport) -> Result<()> {
    r.note("grolla.label", "GroLLA-style macro average");
    r.note("grolla.components", cfg.grolla.components.join(","));
    for name in &cfg.guesser.modes {
        let mut parts = Vec::new();
        for c in &cfg.grolla.components {
            let value = match c.as_str() {
                "gameplay" => r.get(&format!("gameplay.{name}.test.accuracy")),
                "zeroshot" => match (
                    r.get(&format!("gameplay.{name}.nd_test.accuracy")),
                    r.get(&format!("gameplay.{name}.od_test.accuracy")),
                ) {
                    (Some(a), Some(b)) => Some((a + b) / 2.0),
                    _ => None,
                },
                f1 => r.get(&format!("attributes.{name}.{f1}")),
            };
            let v = value.ok_or_else(|| Error::Validation(format!("GroLLA component {c} missing for {name}")))?;
            parts.push((c.clone(), v));
        }
        r.set(format!("grolla.{name}"), grolla(&parts)?);
    }
    Ok(())
}

pub const SUITES: [&str; 6] = ["oracle", "guesser", "gameplay", "zeroshot", "attributes", "all"];

/// Runs an evaluation suite and writes `reports/<suite>.{json,csv}`.
pub fn cmd_eval(cfg: &RunConfig, layout: &Layout, suite: &str) -> Result<MetricsReport> {
    let ds = load_dataset(layout)?;
    let mut r = match suite {
        "oracle" => suite_oracle(cfg, layout, &ds)?,
        "guesser" => suite_guesser(cfg, layout, &ds)?,
        "gameplay" => suite_gameplay(cfg, layout, &ds, &["test"])?,
        "zeroshot" => suite_gameplay(cfg, layout, &ds, &["nd_test", "od_test"])?,
        "attributes" => suite_attributes(cfg, layout, &ds)?,
        "all" => {
            let mut r = suite_oracle(cfg, layout, &ds)?;
            r.merge(suite_guesser(cfg, layout, &ds)?);
            r.merge(suite_gameplay(cfg, layout, &ds, &["test", "nd_test", "od_test"])?);
            r.merge(suite_attributes(cfg, layout, &ds)?);
            add_grolla(cfg, &mut r)?;
            r
        }
        other => {
            return Err(Error::Config(format!(
                "unknown suite `{other}`; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    r.note("seed", cfg.seed.to_string());
    r.validate()?;
    let (json, csv) = layout.report(suite);
    ensure_parent(&json)?;
    r.save(&json, &csv)?;
    Ok(r)
}

/// Per-metric deltas of `reports[1..]` against `reports[0]`, as CSV.
pub fn cmd_compare(reports: &[PathBuf]) -> Result<String> {
    let loaded: Vec<MetricsReport> = reports.iter().map(|p| MetricsReport::load(p)).collect::<Result<_>>()?;
    Ok(deltas_csv(&compare_reports(&loaded)?))
}
