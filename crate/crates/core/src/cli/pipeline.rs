//! In-memory pipeline steps behind the commands.

use std::collections::BTreeMap;

use super::config::RunConfig;
use crate::analytics::{
    attribute_probe, class_label, dialogue_stats, per_type_accuracy, probe_labels, Lexicon, MetricsReport,
    ProbeConfig, ProbeExample, ProbeScores,
};
use crate::error::{Error, Result};
use crate::gameplay::{
    evaluate_gameplay, gold_examples, modulo_n_train, Answerer, ArchiveRecord, GameplayEval, QuestionerPolicy,
    ScheduleEntry,
};
use crate::guesser::{
    evaluate_guesser, train_category_classifier, train_guesser, CategoryClassifier, GuesserConfig, GuesserCurve,
    GuesserDims, GuesserExample, GuesserModel, ReprMode,
};
use crate::imagination::{train_imagination, ImaginationModel, TrainingCurve};
use crate::oracle::{
    evaluate_oracle, sample_examples, train_oracle, FeatureSet, OracleCurve, OracleModel, QType, QuestionSpace,
};
use crate::rng::substream;
use crate::world::{build_splits, generate_world, CategoryVocabulary, Scene, Splits};

/// Vocabulary, question space and splits of one run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: CategoryVocabulary,
    pub space: QuestionSpace,
    pub splits: Splits,
}

impl Dataset {
    pub fn new(vocab: CategoryVocabulary, splits: Splits) -> Self {
        let space = QuestionSpace::from_vocab(&vocab);
        Self { vocab, space, splits }
    }

    pub fn split(&self, name: &str) -> Result<&[Scene]> {
        self.splits
            .by_name(name)
            .ok_or_else(|| Error::Config(format!("unknown split `{name}`")))
    }
}

pub fn generate_dataset(cfg: &RunConfig) -> Result<Dataset> {
    cfg.world.validate()?;
    let vocab = generate_world(&cfg.world, cfg.seed)?;
    let splits = build_splits(&vocab, &cfg.world, cfg.seed)?;
    Ok(Dataset::new(vocab, splits))
}

/// In-domain classes with inverse-frequency weights of mean 1.
fn head_classes(ds: &Dataset) -> (Vec<usize>, Vec<f64>) {
    let mut counts: BTreeMap<usize, usize> = ds.vocab.in_domain.iter().map(|&c| (c, 0)).collect();
    for o in ds.splits.train.iter().flat_map(|s| &s.objects) {
        if let Some(n) = counts.get_mut(&o.category) {
            *n += 1;
        }
    }
    let classes: Vec<usize> = counts.keys().copied().collect();
    let inv: Vec<f64> = counts.values().map(|&n| 1.0 / n.max(1) as f64).collect();
    let mean = inv.iter().sum::<f64>() / inv.len().max(1) as f64;
    (classes, inv.iter().map(|w| w / mean).collect())
}

pub fn train_imagination_model(cfg: &RunConfig, ds: &Dataset) -> Result<(ImaginationModel, TrainingCurve)> {
    let mut rng = substream(cfg.seed, "train.imagination");
    let icfg = cfg.imagination_config();
    let head = icfg.aux_category_loss.then(|| head_classes(ds));
    let mut model = ImaginationModel::new(cfg.world.perceptual_dim, &icfg, head, &mut rng)?;
    let curve = train_imagination(
        &mut model,
        &ds.splits.train,
        &ds.splits.val,
        &cfg.imagination_train_config(),
        &mut rng,
    )?;
    Ok((model, curve))
}

pub fn train_oracle_model(
    cfg: &RunConfig,
    ds: &Dataset,
    features: FeatureSet,
    imagination: Option<ImaginationModel>,
) -> Result<(OracleModel, OracleCurve)> {
    if features.imagination && imagination.is_none() {
        return Err(Error::Dependency("the imagination oracle needs a trained imagination model".into()));
    }
    let ocfg = cfg.oracle_config();
    let mut rng = substream(cfg.seed, &format!("train.oracle.{}", features.name()));
    let mut model = if features.is_empty() {
        OracleModel::majority(ds.space.encoding_dim(), cfg.world.perceptual_dim)
    } else {
        OracleModel::new(
            features,
            &ds.space,
            cfg.world.perceptual_dim,
            &ds.vocab.in_domain,
            imagination,
            &ocfg,
            &mut rng,
        )?
    };
    let curve = train_oracle(&mut model, &ds.space, &ds.splits.train, &ds.splits.val, &ocfg, &mut rng)?;
    Ok((model, curve))
}

pub fn train_classifier(cfg: &RunConfig, ds: &Dataset) -> Result<CategoryClassifier> {
    train_category_classifier(
        &ds.splits.train,
        &ds.splits.val,
        &cfg.classifier_config(),
        &mut substream(cfg.seed, "train.classifier"),
    )
}

/// Gold dialogues of one split, from the split's own substream.
pub fn gold_split(cfg: &RunConfig, ds: &Dataset, split: &str) -> Result<Vec<GuesserExample>> {
    gold_examples(
        &ds.space,
        ds.split(split)?,
        cfg.guesser.all_objects,
        cfg.eval.max_turns,
        &mut substream(cfg.seed, &format!("gold.{split}")),
    )
}

fn guesser_dims(cfg: &RunConfig, ds: &Dataset, gc: &GuesserConfig) -> GuesserDims {
    GuesserDims {
        question_dim: ds.space.encoding_dim(),
        state_dim: gc.state_dim,
        category_dim: gc.category_dim,
        max_turns: cfg.eval.max_turns,
    }
}

/// Gold dialogues of the train and validation splits.
pub struct GoldData {
    pub train: Vec<GuesserExample>,
    pub val: Vec<GuesserExample>,
}

impl GoldData {
    pub fn new(cfg: &RunConfig, ds: &Dataset) -> Result<Self> {
        Ok(Self {
            train: gold_split(cfg, ds, "train")?,
            val: gold_split(cfg, ds, "val")?,
        })
    }
}

pub fn new_guesser(
    cfg: &RunConfig,
    ds: &Dataset,
    mode: ReprMode,
    imagination: Option<ImaginationModel>,
    classifier: Option<CategoryClassifier>,
) -> Result<GuesserModel> {
    if mode == ReprMode::Imagination && imagination.is_none() {
        return Err(Error::Dependency("the imagination guesser needs a trained imagination model".into()));
    }
    let gc = cfg.guesser_config();
    GuesserModel::new(
        mode,
        guesser_dims(cfg, ds, &gc),
        &ds.vocab.in_domain,
        imagination,
        classifier,
        &mut substream(cfg.seed, &format!("init.guesser.{}", mode.name())),
    )
}

/// Trains one guesser; predcat trains its category classifier first.
pub fn train_guesser_model(
    cfg: &RunConfig,
    ds: &Dataset,
    gold: &GoldData,
    mode: ReprMode,
    imagination: Option<ImaginationModel>,
) -> Result<(GuesserModel, GuesserCurve)> {
    let classifier = match mode {
        ReprMode::Predcat => Some(train_classifier(cfg, ds)?),
        _ => None,
    };
    let mut model = new_guesser(cfg, ds, mode, imagination, classifier)?;
    let curve = train_guesser(
        &mut model,
        &ds.space,
        (&ds.splits.train, &gold.train),
        (&ds.splits.val, &gold.val),
        &cfg.guesser_config(),
        &mut substream(cfg.seed, &format!("train.guesser.{}", mode.name())),
    )?;
    Ok((model, curve))
}

/// Modulo-n schedule alternating single guesser epochs with single
/// imagination epochs; the guesser sees the updated encoder after each
/// support epoch.
pub fn train_joint(
    cfg: &RunConfig,
    ds: &Dataset,
    gold: &GoldData,
    imagination: ImaginationModel,
) -> Result<(ImaginationModel, GuesserModel, Vec<ScheduleEntry>)> {
    let mut guesser = new_guesser(cfg, ds, ReprMode::Imagination, Some(imagination.clone()), None)?;
    let img = std::cell::RefCell::new(imagination);
    let shared = std::cell::RefCell::new(&mut guesser);
    let mut grng = substream(cfg.seed, "train.joint.guesser");
    let mut irng = substream(cfg.seed, "train.joint.imagination");
    let gc = GuesserConfig {
        epochs: 1,
        patience: 0,
        ..cfg.guesser_config()
    };
    let ic = crate::imagination::ImaginationTrainConfig {
        epochs: 1,
        patience: 0,
        ..cfg.imagination_train_config()
    };
    let log = modulo_n_train(
        cfg.joint.n,
        cfg.joint.epochs,
        |_| {
            let curve = train_guesser(
                &mut shared.borrow_mut(),
                &ds.space,
                (&ds.splits.train, &gold.train),
                (&ds.splits.val, &gold.val),
                &gc,
                &mut grng,
            )?;
            Ok(curve.epochs.last().map_or(f64::NAN, |e| e.1))
        },
        |_| {
            let mut m = img.borrow_mut();
            let curve = train_imagination(&mut m, &ds.splits.train, &ds.splits.val, &ic, &mut irng)?;
            shared.borrow_mut().imagination = Some(m.clone());
            Ok(curve.epochs.last().map_or(f64::NAN, |e| e.train_loss))
        },
    )?;
    drop(shared);
    Ok((img.into_inner(), guesser, log))
}

/// Oracle accuracy on `split`, overall and per question class of the
/// text classifier.
pub fn oracle_metrics(cfg: &RunConfig, ds: &Dataset, oracle: &OracleModel, split: &str) -> Result<MetricsReport> {
    let scenes = ds.split(split)?;
    let examples = sample_examples(
        &ds.space,
        scenes,
        cfg.oracle.questions_per_object,
        &mut substream(cfg.seed, &format!("eval.oracle.{split}")),
    )?;
    let eval = evaluate_oracle(oracle, &ds.space, scenes, &examples)?;
    let prefix = format!("oracle.{}.{split}", oracle.features.name());
    let mut r = MetricsReport::default();
    r.set(format!("{prefix}.overall"), eval.accuracy());
    r.set(format!("{prefix}.overall.count"), eval.total as f64);
    for q in QType::ALL {
        if let (Some(acc), Some((_, n))) = (eval.type_accuracy(q), eval.per_type.get(&q)) {
            r.set(format!("{prefix}.qtype.{}", q.name()), acc);
            r.set(format!("{prefix}.qtype.{}.count", q.name()), *n as f64);
        }
    }
    let lex = Lexicon::default();
    let mut labelled = Vec::with_capacity(examples.len());
    for ex in &examples {
        let (t, a) = lex.classify(&ex.question);
        let hit = oracle.answer(&ds.space, &ex.question, &scenes[ex.scene], ex.target)? == ex.answer;
        labelled.push((class_label(t, a), hit));
    }
    for (label, row) in per_type_accuracy(labelled.iter().map(|(l, h)| (*l, *h))) {
        let key = label.replace(' ', "_");
        r.set(format!("{prefix}.class.{key}"), row.accuracy);
        r.set(format!("{prefix}.class.{key}.count"), row.count as f64);
    }
    Ok(r)
}

pub fn guesser_accuracy(cfg: &RunConfig, ds: &Dataset, guesser: &GuesserModel, split: &str) -> Result<f64> {
    let gold = gold_split(cfg, ds, split)?;
    evaluate_guesser(guesser, &ds.space, ds.split(split)?, &gold)
}

pub fn play_split(
    cfg: &RunConfig,
    ds: &Dataset,
    split: &str,
    answerer: &Answerer,
    guesser: &GuesserModel,
    policy: &QuestionerPolicy,
) -> Result<GameplayEval> {
    evaluate_gameplay(
        &ds.space,
        ds.split(split)?,
        answerer,
        guesser,
        policy,
        &cfg.game_config(),
        &cfg.game_seeds(),
    )
}

/// Mean of `1 / #candidates` over the scenes of a split.
pub fn chance_rate(scenes: &[Scene]) -> f64 {
    scenes.iter().map(|s| 1.0 / s.objects.len() as f64).sum::<f64>() / scenes.len().max(1) as f64
}

/// Gameplay accuracy and dialogue statistics of one guesser on one split.
pub fn gameplay_metrics(name: &str, split: &str, eval: &GameplayEval) -> Result<(MetricsReport, Vec<ArchiveRecord>)> {
    let archive: Vec<ArchiveRecord> = eval.games.iter().map(ArchiveRecord::from).collect();
    let mut r = MetricsReport::default();
    r.set(format!("gameplay.{name}.{split}.accuracy"), eval.accuracy);
    r.set(format!("gameplay.{name}.{split}.games"), eval.games.len() as f64);
    let s = dialogue_stats(&archive)?;
    let p = format!("dialogue.{name}.{split}");
    r.set(format!("{p}.turns"), s.turns as f64);
    r.set(format!("{p}.lexical_diversity"), s.lexical_diversity);
    r.set(format!("{p}.question_diversity"), s.question_diversity);
    r.set(format!("{p}.distinct_question_ratio"), s.distinct_question_ratio);
    r.set(format!("{p}.repeated_question_rate"), s.repeated_question_rate);
    r.set(format!("{p}.supercat_to_object_attr_rate"), s.supercat_to_object_attr_rate);
    r.set(format!("{p}.object_to_attr_rate"), s.object_to_attr_rate);
    r.set(format!("{p}.location_turn_rate"), s.location_turn_rate);
    r.set(format!("{p}.vocabulary_size"), s.vocabulary_size as f64);
    Ok((r, archive))
}

/// Dialogue states of self-played games on `split`, labelled with the target's attributes.
pub fn probe_examples(
    cfg: &RunConfig,
    ds: &Dataset,
    split: &str,
    answerer: &Answerer,
    guesser: &GuesserModel,
    policy: &QuestionerPolicy,
) -> Result<Vec<ProbeExample>> {
    let scenes = ds.split(split)?;
    let eval = evaluate_gameplay(
        &ds.space,
        scenes,
        answerer,
        guesser,
        policy,
        &cfg.game_config(),
        &cfg.game_seeds()[..1],
    )?;
    let by_id: BTreeMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    eval.games
        .iter()
        .map(|g| {
            let scene = by_id[g.scene_id.as_str()];
            Ok(ProbeExample {
                x: guesser.encode_dialogue(&ds.space, &g.dialogue)?,
                labels: probe_labels(&ds.space, scene, &scene.objects[g.target]),
            })
        })
        .collect()
}

pub fn probe_config(cfg: &RunConfig) -> ProbeConfig {
    ProbeConfig {
        lr: cfg.probe.lr,
        epochs: cfg.probe.epochs,
        batch_size: cfg.probe.batch_size,
    }
}

/// Attribute probe on dialogue states: trained on train-split games, scored on test-split games.
pub fn probe_scores(
    cfg: &RunConfig,
    ds: &Dataset,
    name: &str,
    answerer: &Answerer,
    guesser: &GuesserModel,
    policy: &QuestionerPolicy,
) -> Result<ProbeScores> {
    let train = probe_examples(cfg, ds, "train", answerer, guesser, policy)?;
    let test = probe_examples(cfg, ds, "test", answerer, guesser, policy)?;
    let (scores, _) = attribute_probe(
        &ds.space,
        &train,
        &test,
        &probe_config(cfg),
        &mut substream(cfg.seed, &format!("eval.probe.{name}")),
    )?;
    Ok(scores)
}

/// Location probe given each target's own spatial features.
pub fn ceiling_probe(cfg: &RunConfig, ds: &Dataset) -> Result<ProbeScores> {
    let build = |scenes: &[Scene]| -> Vec<ProbeExample> {
        scenes
            .iter()
            .map(|s| ProbeExample {
                x: s.target_object().s.clone(),
                labels: probe_labels(&ds.space, s, s.target_object()),
            })
            .collect()
    };
    let (scores, _) = attribute_probe(
        &ds.space,
        &build(&ds.splits.train),
        &build(&ds.splits.test),
        &probe_config(cfg),
        &mut substream(cfg.seed, "eval.probe.ceiling"),
    )?;
    Ok(scores)
}

pub fn probe_metrics(name: &str, s: &ProbeScores) -> MetricsReport {
    let mut r = MetricsReport::default();
    r.set(format!("attributes.{name}.a_f1"), s.a_f1);
    r.set(format!("attributes.{name}.s_f1"), s.s_f1);
    r.set(format!("attributes.{name}.as_f1"), s.as_f1);
    r.set(format!("attributes.{name}.l_f1"), s.l_f1);
    r
}
