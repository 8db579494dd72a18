//! Templated yes/no questions about a single object.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{
    CategoryVocabulary, Color, GameObject, Region, Scene, Shape, SizeClass, Texture,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    Supercategory,
    Object,
    Color,
    Size,
    Texture,
    Shape,
    Location,
}

impl QType {
    pub const ALL: [QType; 7] = [
        QType::Supercategory,
        QType::Object,
        QType::Color,
        QType::Size,
        QType::Texture,
        QType::Shape,
        QType::Location,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&q| q == self).expect("listed qtype")
    }

    pub fn name(self) -> &'static str {
        match self {
            QType::Supercategory => "supercategory",
            QType::Object => "object",
            QType::Color => "color",
            QType::Size => "size",
            QType::Texture => "texture",
            QType::Shape => "shape",
            QType::Location => "location",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == name)
    }

    pub fn is_attribute(self) -> bool {
        matches!(self, QType::Color | QType::Size | QType::Texture | QType::Shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Animacy {
    Animate,
    Inanimate,
    Unknown,
}

/// Oracle answer; the declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    NA,
}

impl Answer {
    pub const ALL: [Answer; 3] = [Answer::Yes, Answer::No, Answer::NA];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    /// Highest probability, ties going to the earliest answer.
    pub fn argmax(probs: &[f64]) -> Answer {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate().take(3) {
            if p > probs[best] {
                best = i;
            }
        }
        Answer::ALL[best]
    }
}

/// Version tag of the surface templates below.
pub const TEMPLATE_VERSION: &str = "templates-v1";

/// Surface patterns per question type; `{}` is the argument word.
/// Template id = `10 * qtype index + variant`.
const TEMPLATES: [&[&str]; 7] = [
    &["is it a {}?", "is that a {}?"],
    &["is it the {}?", "is it a {}?"],
    &["is it {}?", "is the object {}?"],
    &["is it {}?", "is it a {} one?"],
    &["is it {}?", "does it look {}?"],
    &["is it {}?", "is its shape {}?"],
    &["is it in the {}?", "is it on the {} side?"],
];

pub fn template_id(qtype: QType, variant: usize) -> usize {
    10 * qtype.index() + variant
}

/// Tab-separated `template_id<TAB>qtype<TAB>pattern` rows.
pub fn template_table() -> String {
    let mut out = format!("# {TEMPLATE_VERSION}\n");
    for q in QType::ALL {
        for (v, pattern) in TEMPLATES[q.index()].iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", template_id(q, v), q.name(), pattern));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub qtype: QType,
    pub argument: usize,
    pub variant: usize,
    pub animacy: Option<Animacy>,
    pub text: String,
}

impl Question {
    /// Identity of a question, independent of its surface form.
    pub fn key(&self) -> (QType, usize) {
        (self.qtype, self.argument)
    }
}

/// Everything needed to build, render, encode and answer questions.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionSpace {
    pub supercategory_names: Vec<String>,
    pub category_names: Vec<String>,
    pub category_animate: Vec<bool>,
    /// Categories that may appear as arguments during training and planning.
    pub seen_categories: Vec<usize>,
    pub seen_supercategories: Vec<usize>,
    /// Disabled question types are answered NA.
    pub enabled: [bool; 7],
}

impl QuestionSpace {
    pub fn from_vocab(vocab: &CategoryVocabulary) -> Self {
        Self {
            supercategory_names: vocab.supercategories.iter().map(|s| s.name.clone()).collect(),
            category_names: vocab.categories.iter().map(|c| c.name.clone()).collect(),
            category_animate: vocab.categories.iter().map(|c| c.animate).collect(),
            seen_categories: vocab.in_domain.clone(),
            seen_supercategories: vocab.seen_supercategories(),
            enabled: [true; 7],
        }
    }

    pub fn with_disabled(mut self, qtypes: &[QType]) -> Self {
        for q in qtypes {
            self.enabled[q.index()] = false;
        }
        self
    }

    pub fn is_enabled(&self, qtype: QType) -> bool {
        self.enabled[qtype.index()]
    }

    /// Number of possible arguments of a question type.
    pub fn arity(&self, qtype: QType) -> usize {
        match qtype {
            QType::Supercategory => self.supercategory_names.len(),
            QType::Object => self.category_names.len(),
            QType::Color => Color::ALL.len(),
            QType::Size => SizeClass::ALL.len(),
            QType::Texture => Texture::ALL.len(),
            QType::Shape => Shape::ALL.len(),
            QType::Location => Region::ALL.len(),
        }
    }

    pub fn max_arity(&self) -> usize {
        QType::ALL.iter().map(|&q| self.arity(q)).max().unwrap_or(0)
    }

    /// Length of a question encoding: one-hot type plus one-hot argument.
    pub fn encoding_dim(&self) -> usize {
        QType::ALL.len() + self.max_arity()
    }

    fn check_argument(&self, qtype: QType, argument: usize) -> Result<()> {
        if argument >= self.arity(qtype) {
            return Err(Error::Encoding(format!(
                "argument {argument} out of range for {} questions ({} values)",
                qtype.name(),
                self.arity(qtype)
            )));
        }
        Ok(())
    }

    pub fn argument_word(&self, qtype: QType, argument: usize) -> Result<&str> {
        self.check_argument(qtype, argument)?;
        Ok(match qtype {
            QType::Supercategory => &self.supercategory_names[argument],
            QType::Object => &self.category_names[argument],
            QType::Color => Color::ALL[argument].word(),
            QType::Size => SizeClass::ALL[argument].word(),
            QType::Texture => Texture::ALL[argument].word(),
            QType::Shape => Shape::ALL[argument].word(),
            QType::Location => Region::ALL[argument].phrase(),
        })
    }

    pub fn render(&self, qtype: QType, argument: usize, variant: usize) -> Result<String> {
        let patterns = TEMPLATES[qtype.index()];
        let pattern = patterns.get(variant).ok_or_else(|| {
            Error::Encoding(format!("no template variant {variant} for {}", qtype.name()))
        })?;
        Ok(pattern.replace("{}", self.argument_word(qtype, argument)?))
    }

    pub fn variants(&self, qtype: QType) -> usize {
        TEMPLATES[qtype.index()].len()
    }

    pub fn question(&self, qtype: QType, argument: usize, variant: usize) -> Result<Question> {
        let text = self.render(qtype, argument, variant)?;
        let animacy = (qtype == QType::Object).then(|| {
            if self.category_animate[argument] {
                Animacy::Animate
            } else {
                Animacy::Inanimate
            }
        });
        Ok(Question {
            qtype,
            argument,
            variant,
            animacy,
            text,
        })
    }

    /// `[one-hot(qtype); one-hot(argument)]`, zero padded to `encoding_dim`.
    pub fn encode(&self, q: &Question) -> Result<Vec<f64>> {
        self.check_argument(q.qtype, q.argument)?;
        let mut x = vec![0.0; self.encoding_dim()];
        x[q.qtype.index()] = 1.0;
        x[QType::ALL.len() + q.argument] = 1.0;
        Ok(x)
    }

    /// Arguments a questioner may use for `qtype`: seen categories and
    /// supercategories only, every value for the rest.
    pub fn askable_arguments(&self, qtype: QType) -> Vec<usize> {
        match qtype {
            QType::Supercategory => self.seen_supercategories.clone(),
            QType::Object => self.seen_categories.clone(),
            _ => (0..self.arity(qtype)).collect(),
        }
    }

    /// Every askable `(qtype, argument)` of the enabled types, in key order.
    pub fn askable_keys(&self) -> Vec<(QType, usize)> {
        let mut keys = Vec::new();
        for q in QType::ALL {
            if self.is_enabled(q) {
                for a in self.askable_arguments(q) {
                    keys.push((q, a));
                }
            }
        }
        keys.sort_unstable();
        keys
    }
}

/// The value an object has for a question type.
pub fn true_argument(scene: &Scene, object: &GameObject, qtype: QType) -> usize {
    match qtype {
        QType::Supercategory => object.supercategory,
        QType::Object => object.category,
        QType::Color => object.attributes.color.index(),
        QType::Size => object.attributes.size.index(),
        QType::Texture => object.attributes.texture.index(),
        QType::Shape => object.attributes.shape.index(),
        QType::Location => Region::of_bbox(&object.bbox, scene.width, scene.height).index(),
    }
}

/// Answer under the world's own semantics.
pub fn ground_truth_answer(
    space: &QuestionSpace,
    scene: &Scene,
    object: &GameObject,
    qtype: QType,
    argument: usize,
) -> Answer {
    if !space.is_enabled(qtype) {
        return Answer::NA;
    }
    if true_argument(scene, object, qtype) == argument {
        Answer::Yes
    } else {
        Answer::No
    }
}

/// Oracle training question: uniform enabled type, and with probability 1/2
/// the object's own value, otherwise a different askable value.
pub fn sample_training_question<R: Rng + ?Sized>(
    space: &QuestionSpace,
    scene: &Scene,
    object: &GameObject,
    rng: &mut R,
) -> Result<Question> {
    let enabled: Vec<QType> = QType::ALL.into_iter().filter(|&q| space.is_enabled(q)).collect();
    let qtype = *enabled
        .choose(rng)
        .ok_or_else(|| Error::Config("every question type is disabled".into()))?;
    let own = true_argument(scene, object, qtype);
    let others: Vec<usize> = space
        .askable_arguments(qtype)
        .into_iter()
        .filter(|&a| a != own)
        .collect();
    let argument = if rng.random_bool(0.5) || others.is_empty() {
        own
    } else {
        *others.choose(rng).expect("non-empty")
    };
    let variant = rng.random_range(0..space.variants(qtype));
    space.question(qtype, argument, variant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, Attributes, BBox, WorldConfig};

    fn space() -> (CategoryVocabulary, QuestionSpace) {
        let vocab = generate_world(&WorldConfig::default(), 0).unwrap();
        let space = QuestionSpace::from_vocab(&vocab);
        (vocab, space)
    }

    fn scene_with(vocab: &CategoryVocabulary, bbox: BBox) -> Scene {
        let c = &vocab.categories[vocab.in_domain[0]];
        let object = GameObject {
            id: 0,
            category: c.id,
            supercategory: c.supercategory,
            attributes: Attributes {
                color: Color::Blue,
                size: SizeClass::Medium,
                texture: Texture::Striped,
                shape: Shape::Flat,
            },
            bbox,
            v: vec![0.0; 32],
            s: vec![0.0; 8],
        };
        let mut other = object.clone();
        other.id = 1;
        Scene {
            scene_id: "q".into(),
            width: 100.0,
            height: 100.0,
            target: 0,
            objects: vec![object, other],
        }
    }

    #[test]
    fn encoding_dimension_is_types_plus_largest_space() {
        let (vocab, space) = space();
        assert_eq!(space.encoding_dim(), 7 + vocab.categories.len());
        assert_eq!(space.encoding_dim(), 37);
    }

    #[test]
    fn surface_form_does_not_change_encoding() {
        let (_, space) = space();
        let a = space.question(QType::Color, 2, 0).unwrap();
        let b = space.question(QType::Color, 2, 1).unwrap();
        assert_ne!(a.text, b.text);
        assert_eq!(space.encode(&a).unwrap(), space.encode(&b).unwrap());
    }

    #[test]
    fn distinct_keys_have_distinct_encodings() {
        let (_, space) = space();
        let mut seen = std::collections::BTreeSet::new();
        for q in QType::ALL {
            for a in 0..space.arity(q) {
                let enc = space.encode(&space.question(q, a, 0).unwrap()).unwrap();
                let bits: Vec<u64> = enc.iter().map(|x| x.to_bits()).collect();
                assert!(seen.insert(bits));
            }
        }
    }

    #[test]
    fn unknown_argument_is_an_encoding_error() {
        let (_, space) = space();
        let q = Question {
            qtype: QType::Size,
            argument: 9,
            variant: 0,
            animacy: None,
            text: String::new(),
        };
        assert!(matches!(space.encode(&q), Err(Error::Encoding(_))));
    }

    #[test]
    fn ground_truth_examples() {
        let (vocab, space) = space();
        let bbox = BBox {
            x: 15.0,
            y: 15.0,
            width: 20.0,
            height: 20.0,
        };
        let sc = scene_with(&vocab, bbox);
        let o = &sc.objects[0];
        assert_eq!(
            ground_truth_answer(&space, &sc, o, QType::Supercategory, o.supercategory),
            Answer::Yes
        );
        assert_eq!(
            ground_truth_answer(&space, &sc, o, QType::Color, Color::Red.index()),
            Answer::No
        );
        // Centre (25, 25) of 100x100 -> normalised (-0.5, -0.5): top left.
        assert_eq!(
            ground_truth_answer(&space, &sc, o, QType::Location, Region::TopLeft.index()),
            Answer::Yes
        );
        let no_texture = space.clone().with_disabled(&[QType::Texture]);
        assert_eq!(
            ground_truth_answer(&no_texture, &sc, o, QType::Texture, Texture::Striped.index()),
            Answer::NA
        );
    }

    #[test]
    fn answer_argmax_tie_breaks_in_declared_order() {
        assert_eq!(Answer::argmax(&[0.5, 0.3, 0.2]), Answer::Yes);
        assert_eq!(Answer::argmax(&[0.4, 0.4, 0.2]), Answer::Yes);
        assert_eq!(Answer::argmax(&[0.2, 0.4, 0.4]), Answer::No);
    }

    #[test]
    fn template_table_lists_every_variant() {
        let table = template_table();
        assert!(table.starts_with("# templates-v1\n"));
        assert_eq!(table.lines().count(), 1 + 14);
        assert!(table.contains("60\tlocation\tis it in the {}?"));
    }

    #[test]
    fn sampler_stays_within_seen_arguments() {
        let (vocab, space) = space();
        let sc = scene_with(&vocab, BBox { x: 1.0, y: 1.0, width: 5.0, height: 5.0 });
        let mut rng = crate::rng::substream(0, "q");
        let mut yes = 0;
        for _ in 0..2000 {
            let q = sample_training_question(&space, &sc, &sc.objects[0], &mut rng).unwrap();
            if q.qtype == QType::Object {
                assert!(vocab.in_domain.contains(&q.argument));
            }
            if ground_truth_answer(&space, &sc, &sc.objects[0], q.qtype, q.argument) == Answer::Yes {
                yes += 1;
            }
        }
        // Expected rate 1/2; 3 sigma over 2000 draws is about 0.034.
        assert!((yes as f64 / 2000.0 - 0.5).abs() < 0.034);
    }
}
