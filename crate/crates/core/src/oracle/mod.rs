//! Answer prediction from a question and features of the target object.
//!
//! Feature order in the classifier input is fixed: question, spatial, crop,
//! image, category, imagination.

pub mod question;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::imagination::ImaginationModel;
use crate::numerics::{
    softmax_cross_entropy, Activation, AdamState, CategoryTable, Checkpoint, DenseNet,
    ParamLayout, Parameterized,
};
use crate::rng::Rng as StreamRng;
use crate::world::Scene;

pub use question::{
    ground_truth_answer, sample_training_question, template_id, template_table, true_argument,
    Animacy, Answer, QType, Question, QuestionSpace, TEMPLATE_VERSION,
};

/// Which inputs the classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FeatureSet {
    pub question: bool,
    pub spatial: bool,
    pub crop: bool,
    pub image: bool,
    pub category: bool,
    pub imagination: bool,
}

impl FeatureSet {
    pub const NAMES: [&'static str; 6] =
        ["question", "spatial", "crop", "image", "category", "imagination"];

    fn flags(&self) -> [bool; 6] {
        [
            self.question,
            self.spatial,
            self.crop,
            self.image,
            self.category,
            self.imagination,
        ]
    }

    pub fn is_empty(&self) -> bool {
        !self.flags().iter().any(|&f| f)
    }

    /// Parses `question+spatial+category`-style names; `majority` is the empty set.
    pub fn parse(s: &str) -> Result<Self> {
        let mut f = FeatureSet::default();
        if s == "majority" {
            return Ok(f);
        }
        for part in s.split('+') {
            match part {
                "question" => f.question = true,
                "spatial" => f.spatial = true,
                "crop" => f.crop = true,
                "image" => f.image = true,
                "category" => f.category = true,
                "imagination" => f.imagination = true,
                other => {
                    return Err(Error::Config(format!("unknown oracle feature `{other}`")))
                }
            }
        }
        Ok(f)
    }

    pub fn name(&self) -> String {
        if self.is_empty() {
            return "majority".into();
        }
        Self::NAMES
            .iter()
            .zip(self.flags())
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub hidden: usize,
    pub category_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Training questions drawn per object per epoch.
    pub questions_per_object: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            category_dim: 16,
            lr: 1e-4,
            batch_size: 64,
            epochs: 20,
            patience: 5,
            questions_per_object: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    pub features: FeatureSet,
    /// Label frequencies of the majority baseline; `None` for neural oracles.
    pub majority: Option<[f64; 3]>,
    pub classifier: Option<DenseNet>,
    pub category_table: Option<CategoryTable>,
    /// Frozen encoder providing the imagination feature.
    pub imagination: Option<ImaginationModel>,
    pub question_dim: usize,
    pub perceptual_dim: usize,
}

impl OracleModel {
    pub fn majority(question_dim: usize, perceptual_dim: usize) -> Self {
        Self {
            features: FeatureSet::default(),
            majority: Some([1.0 / 3.0; 3]),
            classifier: None,
            category_table: None,
            imagination: None,
            question_dim,
            perceptual_dim,
        }
    }

    /// Glorot-initialised neural oracle. `known_categories` rows the category
    /// table (plus UNK); `imagination` must be attached iff the feature is used.
    pub fn new<R: Rng + ?Sized>(
        features: FeatureSet,
        space: &QuestionSpace,
        perceptual_dim: usize,
        known_categories: &[usize],
        imagination: Option<ImaginationModel>,
        config: &OracleConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if features.is_empty() {
            return Ok(Self::majority(space.encoding_dim(), perceptual_dim));
        }
        let category_table = features
            .category
            .then(|| CategoryTable::random(known_categories.to_vec(), config.category_dim, rng));
        let mut model = Self {
            features,
            majority: None,
            classifier: None,
            category_table,
            imagination: if features.imagination { imagination } else { None },
            question_dim: space.encoding_dim(),
            perceptual_dim,
        };
        model.check_attachments()?;
        model.classifier = Some(DenseNet::glorot(
            &[model.input_dim(), config.hidden, 3],
            Activation::Relu,
            Activation::Softmax,
            rng,
        )?);
        Ok(model)
    }

    fn check_attachments(&self) -> Result<()> {
        if self.features.imagination && self.imagination.is_none() {
            return Err(Error::Config(
                "the imagination feature needs an attached imagination model".into(),
            ));
        }
        if self.features.category && self.category_table.is_none() {
            return Err(Error::Config("the category feature needs a category table".into()));
        }
        Ok(())
    }

    /// `(name, width)` of each selected feature in input order.
    pub fn feature_dims(&self) -> Vec<(&'static str, usize)> {
        let f = self.features;
        let mut dims = Vec::new();
        if f.question {
            dims.push(("question", self.question_dim));
        }
        if f.spatial {
            dims.push(("spatial", 8));
        }
        if f.crop {
            dims.push(("crop", self.perceptual_dim));
        }
        if f.image {
            dims.push(("image", self.perceptual_dim));
        }
        if f.category {
            dims.push(("category", self.category_table.as_ref().map_or(0, |t| t.dim)));
        }
        if f.imagination {
            dims.push(("imagination", self.imagination.as_ref().map_or(0, |m| m.latent_dim())));
        }
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dims().iter().map(|(_, d)| d).sum()
    }

    fn category_offset(&self) -> usize {
        self.feature_dims()
            .iter()
            .take_while(|(n, _)| *n != "category")
            .map(|(_, d)| d)
            .sum()
    }

    /// Classifier input for object `target` of `scene`.
    pub fn features_for(
        &self,
        space: &QuestionSpace,
        q: &Question,
        scene: &Scene,
        target: usize,
    ) -> Result<Vec<f64>> {
        self.check_attachments()?;
        let o = scene
            .objects
            .get(target)
            .ok_or_else(|| Error::Validation(format!("no object {target} in {}", scene.scene_id)))?;
        let f = self.features;
        let mut x = Vec::with_capacity(self.input_dim());
        if f.question {
            x.extend(space.encode(q)?);
        }
        if f.spatial {
            x.extend_from_slice(&o.s);
        }
        if f.crop {
            x.extend_from_slice(&o.v);
        }
        if f.image {
            let mut mean = vec![0.0; o.v.len()];
            for other in &scene.objects {
                for (m, v) in mean.iter_mut().zip(&other.v) {
                    *m += v;
                }
            }
            let n = scene.objects.len() as f64;
            x.extend(mean.into_iter().map(|m| m / n));
        }
        if let Some(table) = self.category_table.as_ref().filter(|_| f.category) {
            x.extend_from_slice(table.row(o.category));
        }
        if let Some(img) = self.imagination.as_ref().filter(|_| f.imagination) {
            x.extend(img.encode(&o.v)?);
        }
        Ok(x)
    }

    /// Answer distribution `[Yes, No, NA]`.
    pub fn forward(
        &self,
        space: &QuestionSpace,
        q: &Question,
        scene: &Scene,
        target: usize,
    ) -> Result<[f64; 3]> {
        if let Some(p) = self.majority {
            return Ok(p);
        }
        let net = self.classifier.as_ref().expect("neural oracle has a classifier");
        let p = net.forward(&self.features_for(space, q, scene, target)?)?;
        Ok([p[0], p[1], p[2]])
    }

    pub fn answer(
        &self,
        space: &QuestionSpace,
        q: &Question,
        scene: &Scene,
        target: usize,
    ) -> Result<Answer> {
        Ok(Answer::argmax(&self.forward(space, q, scene, target)?))
    }

    pub fn checkpoint_kind(&self) -> String {
        format!("oracle:{}", self.features.name())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.checkpoint_kind())
            .with_hparam("features", self.features.name())
            .with_hparam("question_dim", self.question_dim)
            .with_hparam("perceptual_dim", self.perceptual_dim);
        if let Some(p) = self.majority {
            ck = ck.with_tensor("majority", vec![3], p.to_vec());
        }
        if let Some(net) = &self.classifier {
            ck = ck.with_net("classifier", net);
        }
        if let Some(t) = &self.category_table {
            ck = ck
                .with_tensor(
                    "category_known",
                    vec![t.known.len()],
                    t.known.iter().map(|&c| c as f64).collect(),
                )
                .with_tensor("category_table", vec![t.rows(), t.dim], t.values.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, imagination: Option<ImaginationModel>) -> Result<Self> {
        let features = FeatureSet::parse(ck.hparam("features")?)?;
        ck.expect_kind(&format!("oracle:{}", features.name()))?;
        let majority = match ck.tensor("majority") {
            Ok((_, v)) => Some([v[0], v[1], v[2]]),
            Err(_) => None,
        };
        let category_table = if features.category {
            let known = ck.tensor("category_known")?.1.iter().map(|&c| c as usize).collect();
            let (shape, values) = ck.tensor("category_table")?;
            Some(CategoryTable::from_parts(known, shape[1], values.to_vec())?)
        } else {
            None
        };
        if features.imagination && imagination.is_none() {
            return Err(Error::Dependency(
                "oracle uses imagination features but no imagination checkpoint was given".into(),
            ));
        }
        let model = Self {
            features,
            majority,
            classifier: if ck.has_net("classifier") {
                Some(ck.net("classifier")?.clone())
            } else {
                None
            },
            category_table,
            imagination: if features.imagination { imagination } else { None },
            question_dim: ck.hparam_usize("question_dim")?,
            perceptual_dim: ck.hparam_usize("perceptual_dim")?,
        };
        if model.majority.is_none() && model.classifier.is_none() {
            return Err(Error::Checkpoint("oracle checkpoint has no classifier".into()));
        }
        Ok(model)
    }
}

impl Parameterized for OracleModel {
    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.classifier.as_ref().map(DenseNet::params).unwrap_or_default();
        if let Some(t) = &self.category_table {
            p.extend_from_slice(&t.values);
        }
        p
    }

    fn set_flat_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_flat_params() {
            return Err(Error::Shape(format!(
                "oracle has {} parameters, got {}",
                self.num_flat_params(),
                src.len()
            )));
        }
        let mut at = 0;
        if let Some(net) = &mut self.classifier {
            at = net.load_params(src)?;
        }
        if let Some(t) = &mut self.category_table {
            t.values.copy_from_slice(&src[at..]);
        }
        Ok(())
    }

    fn param_layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::default();
        if let Some(net) = &self.classifier {
            layout.extend(net.layout("classifier"));
        }
        if let Some(t) = &self.category_table {
            layout.push("category_table", t.values.len());
        }
        layout
    }
}

/// Cross-entropy of `answer` for one example, accumulating gradients of all
/// trainable parameters (flat layout) into `grads`.
pub fn oracle_loss(
    model: &OracleModel,
    space: &QuestionSpace,
    q: &Question,
    scene: &Scene,
    target: usize,
    answer: Answer,
    grads: &mut [f64],
) -> Result<f64> {
    let net = model
        .classifier
        .as_ref()
        .ok_or_else(|| Error::Config("the majority oracle has no trainable loss".into()))?;
    let x = model.features_for(space, q, scene, target)?;
    let trace = net.forward_trace(&x)?;
    let logits = net.logits(&x)?;
    let (loss, g_logits) = softmax_cross_entropy(&logits, answer.index(), 1.0);
    let n_net = net.num_params();
    let (g_net, g_table) = grads.split_at_mut(n_net);
    let g_x = net.backward_trace_logits(&trace, &g_logits, g_net)?;
    if let Some(table) = model.category_table.as_ref().filter(|_| model.features.category) {
        let off = model.category_offset();
        table.accumulate(scene.objects[target].category, &g_x[off..off + table.dim], g_table);
    }
    Ok(loss)
}

/// One labelled oracle example.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleExample {
    pub scene: usize,
    pub target: usize,
    pub question: Question,
    pub answer: Answer,
}

/// `per_object` sampled questions about every object of every scene.
pub fn sample_examples<R: Rng + ?Sized>(
    space: &QuestionSpace,
    scenes: &[Scene],
    per_object: usize,
    rng: &mut R,
) -> Result<Vec<OracleExample>> {
    let mut out = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        for (t, o) in scene.objects.iter().enumerate() {
            for _ in 0..per_object {
                let q = sample_training_question(space, scene, o, rng)?;
                let answer = ground_truth_answer(space, scene, o, q.qtype, q.argument);
                out.push(OracleExample {
                    scene: s,
                    target: t,
                    question: q,
                    answer,
                });
            }
        }
    }
    Ok(out)
}

/// Accuracy overall and per question type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleEval {
    pub correct: usize,
    pub total: usize,
    pub per_type: BTreeMap<QType, (usize, usize)>,
}

impl OracleEval {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn type_accuracy(&self, q: QType) -> Option<f64> {
        self.per_type
            .get(&q)
            .filter(|(_, n)| *n > 0)
            .map(|(c, n)| *c as f64 / *n as f64)
    }
}

pub fn evaluate_oracle(
    model: &OracleModel,
    space: &QuestionSpace,
    scenes: &[Scene],
    examples: &[OracleExample],
) -> Result<OracleEval> {
    let mut eval = OracleEval::default();
    for ex in examples {
        let predicted = model.answer(space, &ex.question, &scenes[ex.scene], ex.target)?;
        let hit = usize::from(predicted == ex.answer);
        eval.correct += hit;
        eval.total += 1;
        let slot = eval.per_type.entry(ex.question.qtype).or_default();
        slot.0 += hit;
        slot.1 += 1;
    }
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleCurve {
    /// `(epoch, mean training loss, validation accuracy)`.
    pub epochs: Vec<(usize, f64, f64)>,
    pub best_epoch: usize,
}

/// Mini-batch Adam on freshly sampled questions each epoch; keeps the
/// parameters with the best validation accuracy. A majority model just
/// records the label frequencies of one sampled epoch.
pub fn train_oracle<R: Rng + ?Sized>(
    model: &mut OracleModel,
    space: &QuestionSpace,
    train: &[Scene],
    val: &[Scene],
    config: &OracleConfig,
    rng: &mut R,
) -> Result<OracleCurve> {
    if train.is_empty() {
        return Err(Error::Validation("oracle training needs scenes".into()));
    }
    let val_examples = sample_examples(
        space,
        val,
        config.questions_per_object,
        &mut StreamRng::seed_from_u64(rng.next_u64()),
    )?;
    if model.majority.is_some() {
        let examples = sample_examples(space, train, config.questions_per_object, rng)?;
        let mut counts = [0usize; 3];
        for ex in &examples {
            counts[ex.answer.index()] += 1;
        }
        let n = examples.len() as f64;
        model.majority = Some(counts.map(|c| c as f64 / n));
        let acc = evaluate_oracle(model, space, val, &val_examples)?.accuracy();
        return Ok(OracleCurve {
            epochs: vec![(1, 0.0, acc)],
            best_epoch: 1,
        });
    }
    let layout = model.param_layout();
    let mut adam = AdamState::new(layout.total(), config.lr);
    let mut grads = vec![0.0; layout.total()];
    let mut curve = OracleCurve::default();
    let mut best = (f64::NEG_INFINITY, model.flat_params());
    for epoch in 1..=config.epochs {
        let mut examples = sample_examples(space, train, config.questions_per_object, rng)?;
        examples.shuffle(rng);
        let mut total = 0.0;
        for batch in examples.chunks(config.batch_size.max(1)) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for ex in batch {
                total += oracle_loss(
                    model,
                    space,
                    &ex.question,
                    &train[ex.scene],
                    ex.target,
                    ex.answer,
                    &mut grads,
                )?;
            }
            let m = batch.len() as f64;
            grads.iter_mut().for_each(|g| *g /= m);
            let mut params = model.flat_params();
            adam.step(&mut params, &grads, &layout)
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            model.set_flat_params(&params)?;
        }
        let loss = total / examples.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite oracle loss".into(),
            });
        }
        let acc = if val.is_empty() {
            f64::NAN
        } else {
            evaluate_oracle(model, space, val, &val_examples)?.accuracy()
        };
        curve.epochs.push((epoch, loss, acc));
        if acc > best.0 || (val.is_empty() && epoch == config.epochs) {
            best = (acc, model.flat_params());
            curve.best_epoch = epoch;
        } else if config.patience > 0 && epoch - curve.best_epoch >= config.patience {
            break;
        }
    }
    model.set_flat_params(&best.1)?;
    Ok(curve)
}
