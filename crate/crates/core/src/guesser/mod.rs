//! Target prediction from a question/answer history.
//!
//! The dialogue state is a position-weighted mean of per-turn encodings; each
//! candidate is scored by the dot product of the state with an MLP over its
//! representation, and scores are softmaxed over the scene.

mod classifier;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagination::ImaginationModel;
use crate::numerics::{
    softmax, Activation, CategoryTable, Checkpoint, DenseNet, ParamLayout, Parameterized,
};
use crate::oracle::{Answer, Question, QuestionSpace};
use crate::world::{GameObject, Scene};

pub use classifier::{train_category_classifier, CategoryClassifier, ClassifierConfig};
pub use train::{
    evaluate_guesser, guesser_scene_loss, train_guesser, GuesserConfig,
    GuesserCurve, GuesserExample,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: Question,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub scene_id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(scene_id: impl Into<String>) -> Self {
        Self {
            scene_id: scene_id.into(),
            turns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprMode {
    Category,
    Nocat,
    Predcat,
    Imagination,
}

impl ReprMode {
    pub const ALL: [ReprMode; 4] = [
        ReprMode::Category,
        ReprMode::Nocat,
        ReprMode::Predcat,
        ReprMode::Imagination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReprMode::Category => "category",
            ReprMode::Nocat => "nocat",
            ReprMode::Predcat => "predcat",
            ReprMode::Imagination => "imagination",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown guesser mode `{s}`")))
    }

    fn uses_table(self) -> bool {
        matches!(self, ReprMode::Category | ReprMode::Predcat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuesserModel {
    pub mode: ReprMode,
    pub turn_encoder: DenseNet,
    /// Learned scale of each turn position, initialised to 1.
    pub position_weights: Vec<f64>,
    pub object_mlp: DenseNet,
    pub category_table: Option<CategoryTable>,
    pub imagination: Option<ImaginationModel>,
    pub classifier: Option<CategoryClassifier>,
}

/// Architecture sizes shared by every mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuesserDims {
    pub question_dim: usize,
    pub state_dim: usize,
    pub category_dim: usize,
    pub max_turns: usize,
}

impl GuesserModel {
    /// Builds a Glorot-initialised guesser. `imagination` is required in
    /// imagination mode and `classifier` in predcat mode.
    pub fn new<R: Rng + ?Sized>(
        mode: ReprMode,
        dims: GuesserDims,
        known_categories: &[usize],
        imagination: Option<ImaginationModel>,
        classifier: Option<CategoryClassifier>,
        rng: &mut R,
    ) -> Result<Self> {
        let repr_dim = match mode {
            ReprMode::Category | ReprMode::Predcat => dims.category_dim + 8,
            ReprMode::Nocat => 8,
            ReprMode::Imagination => {
                imagination
                    .as_ref()
                    .ok_or_else(|| {
                        Error::Config("imagination mode needs an imagination model".into())
                    })?
                    .latent_dim()
                    + 8
            }
        };
        if mode == ReprMode::Predcat && classifier.is_none() {
            return Err(Error::Config("predcat mode needs a category classifier".into()));
        }
        let h = dims.state_dim;
        let model = Self {
            mode,
            turn_encoder: DenseNet::glorot(
                &[dims.question_dim + 3, h, h],
                Activation::Relu,
                Activation::Identity,
                rng,
            )?,
            position_weights: vec![1.0; dims.max_turns],
            object_mlp: DenseNet::glorot(&[repr_dim, h, h], Activation::Relu, Activation::Identity, rng)?,
            category_table: mode
                .uses_table()
                .then(|| CategoryTable::random(known_categories.to_vec(), dims.category_dim, rng)),
            imagination: (mode == ReprMode::Imagination).then_some(imagination).flatten(),
            classifier: (mode == ReprMode::Predcat).then_some(classifier).flatten(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.mode {
            ReprMode::Category | ReprMode::Predcat => {
                self.category_table
                    .as_ref()
                    .ok_or_else(|| Error::Config("category table missing".into()))?
                    .dim
                    + 8
            }
            ReprMode::Nocat => 8,
            ReprMode::Imagination => {
                self.imagination
                    .as_ref()
                    .ok_or_else(|| Error::Config("imagination model missing".into()))?
                    .latent_dim()
                    + 8
            }
        };
        if self.mode == ReprMode::Predcat && self.classifier.is_none() {
            return Err(Error::Config("predcat mode needs a category classifier".into()));
        }
        if self.object_mlp.input_dim() != expected {
            return Err(Error::Shape(format!(
                "object MLP takes {} inputs, {} mode needs {expected}",
                self.object_mlp.input_dim(),
                self.mode.name()
            )));
        }
        if self.object_mlp.output_dim() != self.turn_encoder.output_dim() {
            return Err(Error::Shape("object MLP and turn encoder widths differ".into()));
        }
        Ok(())
    }

    pub fn max_turns(&self) -> usize {
        self.position_weights.len()
    }

    pub fn state_dim(&self) -> usize {
        self.turn_encoder.output_dim()
    }

    /// Category id whose table row represents `object` (category/predcat modes).
    fn represented_category(&self, object: &GameObject) -> Result<Option<usize>> {
        Ok(match self.mode {
            ReprMode::Category => Some(object.category),
            ReprMode::Predcat => Some(
                self.classifier
                    .as_ref()
                    .expect("validated predcat classifier")
                    .predict(&object.v)?,
            ),
            _ => None,
        })
    }

    /// `[c; s]`, `[s]`, `[c_pred; s]` or `[z; s]` depending on the mode.
    pub fn object_representation(&self, object: &GameObject) -> Result<Vec<f64>> {
        let mut r = match self.mode {
            ReprMode::Category | ReprMode::Predcat => {
                let c = self.represented_category(object)?.expect("table mode");
                self.category_table.as_ref().expect("validated table").row(c).to_vec()
            }
            ReprMode::Nocat => Vec::new(),
            ReprMode::Imagination => self
                .imagination
                .as_ref()
                .expect("validated imagination model")
                .encode(&object.v)?,
        };
        r.extend_from_slice(&object.s);
        Ok(r)
    }

    fn turn_input(space: &QuestionSpace, turn: &Turn) -> Result<Vec<f64>> {
        let mut x = space.encode(&turn.question)?;
        x.extend(turn.answer.one_hot());
        Ok(x)
    }

    fn check_dialogue(&self, dialogue: &Dialogue) -> Result<()> {
        if dialogue.is_empty() {
            return Err(Error::Validation("cannot encode an empty dialogue".into()));
        }
        if dialogue.len() > self.max_turns() {
            return Err(Error::Validation(format!(
                "dialogue has {} turns, the guesser supports {}",
                dialogue.len(),
                self.max_turns()
            )));
        }
        Ok(())
    }

    /// `h = (1/T) * sum_t w_t * turn_encoder([q_t; a_t])`.
    pub fn encode_dialogue(&self, space: &QuestionSpace, dialogue: &Dialogue) -> Result<Vec<f64>> {
        self.check_dialogue(dialogue)?;
        let t = dialogue.len() as f64;
        let mut h = vec![0.0; self.state_dim()];
        for (pos, turn) in dialogue.turns.iter().enumerate() {
            let e = self.turn_encoder.forward(&Self::turn_input(space, turn)?)?;
            let w = self.position_weights[pos] / t;
            for (hi, ei) in h.iter_mut().zip(&e) {
                *hi += w * ei;
            }
        }
        Ok(h)
    }

    /// `object_mlp(repr(o))` for every candidate.
    pub fn object_embeddings(&self, scene: &Scene) -> Result<Vec<Vec<f64>>> {
        scene
            .objects
            .iter()
            .map(|o| self.object_mlp.forward(&self.object_representation(o)?))
            .collect()
    }

    /// Softmax over candidates of `<h, object_mlp(repr(o_i))>`.
    pub fn score_candidates(&self, h: &[f64], scene: &Scene) -> Result<Vec<f64>> {
        if scene.objects.len() < 2 {
            return Err(Error::Validation("scoring needs at least two candidates".into()));
        }
        if h.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "dialogue state of length {} for a guesser of width {}",
                h.len(),
                self.state_dim()
            )));
        }
        let logits: Vec<f64> = self
            .object_embeddings(scene)?
            .iter()
            .map(|g| g.iter().zip(h).map(|(a, b)| a * b).sum())
            .collect();
        Ok(softmax(&logits))
    }

    pub fn predict_target(
        &self,
        space: &QuestionSpace,
        dialogue: &Dialogue,
        scene: &Scene,
    ) -> Result<usize> {
        let h = self.encode_dialogue(space, dialogue)?;
        Ok(argmax_lowest(&self.score_candidates(&h, scene)?))
    }

    pub fn checkpoint_kind(&self) -> String {
        format!("guesser:{}", self.mode.name())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.checkpoint_kind())
            .with_hparam("mode", self.mode.name())
            .with_net("turn_encoder", &self.turn_encoder)
            .with_net("object_mlp", &self.object_mlp)
            .with_tensor(
                "position_weights",
                vec![self.position_weights.len()],
                self.position_weights.clone(),
            );
        if let Some(t) = &self.category_table {
            ck = ck
                .with_tensor(
                    "category_known",
                    vec![t.known.len()],
                    t.known.iter().map(|&c| c as f64).collect(),
                )
                .with_tensor("category_table", vec![t.rows(), t.dim], t.values.clone());
        }
        if let Some(c) = &self.classifier {
            ck = ck.with_net("classifier", &c.net).with_tensor(
                "classifier_classes",
                vec![c.classes.len()],
                c.classes.iter().map(|&k| k as f64).collect(),
            );
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, imagination: Option<ImaginationModel>) -> Result<Self> {
        let mode = ReprMode::parse(ck.hparam("mode")?)?;
        ck.expect_kind(&format!("guesser:{}", mode.name()))?;
        if mode == ReprMode::Imagination && imagination.is_none() {
            return Err(Error::Dependency(
                "guesser:imagination needs the imagination checkpoint".into(),
            ));
        }
        let category_table = if mode.uses_table() {
            let known = ck.tensor("category_known")?.1.iter().map(|&c| c as usize).collect();
            let (shape, values) = ck.tensor("category_table")?;
            Some(CategoryTable::from_parts(known, shape[1], values.to_vec())?)
        } else {
            None
        };
        let classifier = if mode == ReprMode::Predcat {
            Some(CategoryClassifier {
                net: ck.net("classifier")?.clone(),
                classes: ck.tensor("classifier_classes")?.1.iter().map(|&c| c as usize).collect(),
            })
        } else {
            None
        };
        let model = Self {
            mode,
            turn_encoder: ck.net("turn_encoder")?.clone(),
            position_weights: ck.tensor("position_weights")?.1.to_vec(),
            object_mlp: ck.net("object_mlp")?.clone(),
            category_table,
            imagination: (mode == ReprMode::Imagination).then_some(imagination).flatten(),
            classifier,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Index of the largest value, ties going to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Parameterized for GuesserModel {
    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.turn_encoder.params();
        p.extend_from_slice(&self.position_weights);
        self.object_mlp.append_params(&mut p);
        if let Some(t) = &self.category_table {
            p.extend_from_slice(&t.values);
        }
        p
    }

    fn set_flat_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_flat_params() {
            return Err(Error::Shape(format!(
                "guesser has {} parameters, got {}",
                self.num_flat_params(),
                src.len()
            )));
        }
        let mut at = self.turn_encoder.load_params(src)?;
        let n = self.position_weights.len();
        self.position_weights.copy_from_slice(&src[at..at + n]);
        at += n;
        at += self.object_mlp.load_params(&src[at..])?;
        if let Some(t) = &mut self.category_table {
            t.values.copy_from_slice(&src[at..]);
        }
        Ok(())
    }

    fn param_layout(&self) -> ParamLayout {
        let mut layout = self.turn_encoder.layout("turn_encoder");
        layout.push("position_weights", self.position_weights.len());
        layout.extend(self.object_mlp.layout("object_mlp"));
        if let Some(t) = &self.category_table {
            layout.push("category_table", t.values.len());
        }
        layout
    }
}

#[cfg(test)]
mod tests;
