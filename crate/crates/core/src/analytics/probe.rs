use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_cross_entropy, Activation, AdamState, DenseNet};
use crate::oracle::{true_argument, QType, QuestionSpace};
use crate::world::{GameObject, Scene};

/// Label groups recovered from a dialogue state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeGroup {
    Supercategory,
    Animacy,
    Color,
    Size,
    Texture,
    Shape,
    Location,
}

impl ProbeGroup {
    pub const ALL: [ProbeGroup; 7] = [
        ProbeGroup::Supercategory,
        ProbeGroup::Animacy,
        ProbeGroup::Color,
        ProbeGroup::Size,
        ProbeGroup::Texture,
        ProbeGroup::Shape,
        ProbeGroup::Location,
    ];
    pub const ABSTRACT: &'static [ProbeGroup] = &[ProbeGroup::Supercategory, ProbeGroup::Animacy];
    pub const SITUATED: &'static [ProbeGroup] =
        &[ProbeGroup::Color, ProbeGroup::Size, ProbeGroup::Texture, ProbeGroup::Shape];
    pub const LOCATION: &'static [ProbeGroup] = &[ProbeGroup::Location];

    pub fn index(self) -> usize {
        self as usize
    }

    fn qtype(self) -> Option<QType> {
        match self {
            ProbeGroup::Supercategory => Some(QType::Supercategory),
            ProbeGroup::Animacy => None,
            ProbeGroup::Color => Some(QType::Color),
            ProbeGroup::Size => Some(QType::Size),
            ProbeGroup::Texture => Some(QType::Texture),
            ProbeGroup::Shape => Some(QType::Shape),
            ProbeGroup::Location => Some(QType::Location),
        }
    }

    /// Number of label values.
    pub fn arity(self, space: &QuestionSpace) -> usize {
        self.qtype().map_or(2, |q| space.arity(q))
    }
}

/// One probe example: a feature vector and a label per group.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeExample {
    pub x: Vec<f64>,
    pub labels: [usize; 7],
}

/// Labels of `object` in group order; animacy is 1 for animate.
pub fn probe_labels(space: &QuestionSpace, scene: &Scene, object: &GameObject) -> [usize; 7] {
    let mut out = [0; 7];
    for g in ProbeGroup::ALL {
        out[g.index()] = match g.qtype() {
            Some(q) => true_argument(scene, object, q),
            None => usize::from(space.category_animate[object.category]),
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 30,
            batch_size: 32,
        }
    }
}

/// Single softmax layer on standardised features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub layer: DenseNet,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LinearProbe {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.layer.logits(&self.standardize(x))?;
        Ok(crate::guesser::argmax_lowest(&logits))
    }
}

/// Cross-entropy of `label` for one standardised input, adding the layer's
/// parameter gradients into `grads`.
pub fn probe_loss(layer: &DenseNet, x: &[f64], label: usize, grads: &mut [f64]) -> Result<f64> {
    let trace = layer.forward_trace(x)?;
    let (loss, g) = softmax_cross_entropy(&layer.logits(x)?, label, 1.0);
    layer.backward_trace_logits(&trace, &g, grads)?;
    Ok(loss)
}

pub fn train_probe<R: Rng + ?Sized>(
    xs: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    config: &ProbeConfig,
    rng: &mut R,
) -> Result<LinearProbe> {
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::Validation("probe needs matching non-empty inputs and labels".into()));
    }
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|k| {
            let var = xs.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / n;
            if var > 1e-12 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let mut probe = LinearProbe {
        layer: DenseNet::glorot(&[d, classes], Activation::Identity, Activation::Softmax, rng)?,
        mean,
        scale,
    };
    let inputs: Vec<Vec<f64>> = xs.iter().map(|x| probe.standardize(x)).collect();
    let layout = probe.layer.layout("probe");
    let mut adam = AdamState::new(layout.total(), config.lr);
    let mut grads = vec![0.0; layout.total()];
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &k in batch {
                probe_loss(&probe.layer, &inputs[k], labels[k], &mut grads)?;
            }
            let m = batch.len() as f64;
            grads.iter_mut().for_each(|g| *g /= m);
            let mut params = probe.layer.params();
            adam.step(&mut params, &grads, &layout)
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            probe.layer.load_params(&params)?;
        }
    }
    Ok(probe)
}

/// Per-class F1 `2TP / (2TP + FP + FN)` for each class in `classes`; classes
/// that are neither present nor predicted have no F1 and are left out.
pub fn per_class_f1(truth: &[usize], pred: &[usize], classes: &[usize]) -> Vec<(usize, f64)> {
    classes
        .iter()
        .filter_map(|&c| {
            let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count();
            let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count();
            let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count();
            let denom = 2 * tp + fp + fn_;
            (denom > 0).then(|| (c, 2.0 * tp as f64 / denom as f64))
        })
        .collect()
}

pub fn macro_f1(truth: &[usize], pred: &[usize], classes: &[usize]) -> f64 {
    let f = per_class_f1(truth, pred, classes);
    if f.is_empty() {
        0.0
    } else {
        f.iter().map(|(_, v)| v).sum::<f64>() / f.len() as f64
    }
}

/// Macro-F1 per family; each family averages per-class F1 over the union of
/// its groups' label spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeScores {
    pub a_f1: f64,
    pub s_f1: f64,
    pub as_f1: f64,
    pub l_f1: f64,
}

/// Per-group outcome of [`attribute_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub group: ProbeGroup,
    pub f1: Vec<(usize, f64)>,
    /// Label values absent from the training set, excluded from the averages.
    pub excluded: Vec<usize>,
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
}

/// Trains one probe per group on `train` and scores it on `test`.
pub fn attribute_probe<R: Rng + ?Sized>(
    space: &QuestionSpace,
    train: &[ProbeExample],
    test: &[ProbeExample],
    config: &ProbeConfig,
    rng: &mut R,
) -> Result<(ProbeScores, Vec<GroupResult>)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation("attribute probe needs train and test examples".into()));
    }
    let xs: Vec<Vec<f64>> = train.iter().map(|e| e.x.clone()).collect();
    let mut groups = Vec::new();
    for g in ProbeGroup::ALL {
        let arity = g.arity(space);
        let labels: Vec<usize> = train.iter().map(|e| e.labels[g.index()]).collect();
        let present: Vec<usize> = (0..arity).filter(|c| labels.contains(c)).collect();
        let excluded: Vec<usize> = (0..arity).filter(|c| !present.contains(c)).collect();
        let truth: Vec<usize> = test.iter().map(|e| e.labels[g.index()]).collect();
        let predicted: Vec<usize> = if present.len() < 2 {
            vec![present.first().copied().unwrap_or(0); test.len()]
        } else {
            let probe = train_probe(&xs, &labels, arity, config, rng)?;
            test.iter().map(|e| probe.predict(&e.x)).collect::<Result<_>>()?
        };
        groups.push(GroupResult {
            group: g,
            f1: per_class_f1(&truth, &predicted, &present),
            excluded,
            truth,
            predicted,
        });
    }
    let family = |members: &[ProbeGroup]| {
        let f: Vec<f64> = groups
            .iter()
            .filter(|r| members.contains(&r.group))
            .flat_map(|r| r.f1.iter().map(|(_, v)| *v))
            .collect();
        if f.is_empty() { 0.0 } else { f.iter().sum::<f64>() / f.len() as f64 }
    };
    let union: Vec<ProbeGroup> = ProbeGroup::ABSTRACT.iter().chain(ProbeGroup::SITUATED).copied().collect();
    let scores = ProbeScores {
        a_f1: family(ProbeGroup::ABSTRACT),
        s_f1: family(ProbeGroup::SITUATED),
        as_f1: family(&union),
        l_f1: family(ProbeGroup::LOCATION),
    };
    Ok((scores, groups))
}
