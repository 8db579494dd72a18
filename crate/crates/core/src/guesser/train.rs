use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{argmax_lowest, Dialogue, GuesserModel};
use crate::error::{Error, Result};
use crate::numerics::{softmax, AdamState, Parameterized, Trace};
use crate::oracle::QuestionSpace;
use crate::world::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct GuesserConfig {
    pub state_dim: usize,
    pub category_dim: usize,
    pub max_turns: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for GuesserConfig {
    fn default() -> Self {
        Self {
            state_dim: 64,
            category_dim: 16,
            max_turns: 10,
            lr: 1e-3,
            batch_size: 64,
            epochs: 20,
            patience: 5,
        }
    }
}

/// A gold dialogue about object `target` of scene `scene` (indices into a split).
#[derive(Debug, Clone, PartialEq)]
pub struct GuesserExample {
    pub scene: usize,
    pub target: usize,
    pub dialogue: Dialogue,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuesserCurve {
    /// `(epoch, mean training loss, validation accuracy)`.
    pub epochs: Vec<(usize, f64, f64)>,
    pub best_epoch: usize,
}

struct Offsets {
    positions: usize,
    object_mlp: usize,
    table: usize,
}

fn offsets(model: &GuesserModel) -> Offsets {
    let positions = model.turn_encoder.num_params();
    let object_mlp = positions + model.position_weights.len();
    Offsets {
        positions,
        object_mlp,
        table: object_mlp + model.object_mlp.num_params(),
    }
}

/// Summed cross-entropy of the targets of `examples`, all about `scene`,
/// accumulating gradients into `grads` (flat layout of the model).
///
/// Object embeddings are computed once and shared by every example.
pub fn guesser_scene_loss(
    model: &GuesserModel,
    space: &QuestionSpace,
    scene: &Scene,
    examples: &[(&Dialogue, usize)],
    grads: &mut [f64],
) -> Result<f64> {
    if grads.len() != model.num_flat_params() {
        return Err(Error::Shape("guesser gradient buffer has the wrong length".into()));
    }
    if scene.objects.len() < 2 {
        return Err(Error::Validation("scoring needs at least two candidates".into()));
    }
    let off = offsets(model);
    let d_h = model.state_dim();
    let reprs: Vec<Vec<f64>> = scene
        .objects
        .iter()
        .map(|o| model.object_representation(o))
        .collect::<Result<_>>()?;
    let obj_traces: Vec<Trace> = reprs
        .iter()
        .map(|r| model.object_mlp.forward_trace(r))
        .collect::<Result<_>>()?;
    let mut g_objects = vec![vec![0.0; d_h]; scene.objects.len()];
    let mut total = 0.0;

    for &(dialogue, target) in examples {
        model.check_dialogue(dialogue)?;
        let t = dialogue.len() as f64;
        let turn_traces: Vec<Trace> = dialogue
            .turns
            .iter()
            .map(|turn| model.turn_encoder.forward_trace(&GuesserModel::turn_input(space, turn)?))
            .collect::<Result<_>>()?;
        let mut h = vec![0.0; d_h];
        for (pos, tr) in turn_traces.iter().enumerate() {
            let w = model.position_weights[pos] / t;
            for (hi, ei) in h.iter_mut().zip(tr.output()) {
                *hi += w * ei;
            }
        }
        let logits: Vec<f64> = obj_traces
            .iter()
            .map(|tr| tr.output().iter().zip(&h).map(|(a, b)| a * b).sum())
            .collect();
        let p = softmax(&logits);
        total += -p[target].max(f64::MIN_POSITIVE).ln();

        let mut g_h = vec![0.0; d_h];
        for (i, tr) in obj_traces.iter().enumerate() {
            let d = p[i] - f64::from(u8::from(i == target));
            for (k, gk) in g_h.iter_mut().enumerate() {
                *gk += d * tr.output()[k];
                g_objects[i][k] += d * h[k];
            }
        }
        for (pos, tr) in turn_traces.iter().enumerate() {
            let e = tr.output();
            grads[off.positions + pos] += e.iter().zip(&g_h).map(|(a, b)| a * b).sum::<f64>() / t;
            let w = model.position_weights[pos] / t;
            let upstream: Vec<f64> = g_h.iter().map(|g| w * g).collect();
            model
                .turn_encoder
                .backward_trace(tr, &upstream, &mut grads[..off.positions])?;
        }
    }

    let (g_mlp, g_table) = grads[off.object_mlp..].split_at_mut(off.table - off.object_mlp);
    for (i, tr) in obj_traces.iter().enumerate() {
        let g_repr = model.object_mlp.backward_trace(tr, &g_objects[i], g_mlp)?;
        if let Some(table) = &model.category_table {
            let c = model.represented_category(&scene.objects[i])?.expect("table mode");
            table.accumulate(c, &g_repr[..table.dim], g_table);
        }
    }
    Ok(total)
}

/// Fraction of examples whose target is the predicted candidate.
pub fn evaluate_guesser(
    model: &GuesserModel,
    space: &QuestionSpace,
    scenes: &[Scene],
    examples: &[GuesserExample],
) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut embeddings: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    let mut hits = 0usize;
    for ex in examples {
        if !embeddings.contains_key(&ex.scene) {
            embeddings.insert(ex.scene, model.object_embeddings(&scenes[ex.scene])?);
        }
        let g = &embeddings[&ex.scene];
        let h = model.encode_dialogue(space, &ex.dialogue)?;
        let logits: Vec<f64> = g
            .iter()
            .map(|gi| gi.iter().zip(&h).map(|(a, b)| a * b).sum())
            .collect();
        hits += usize::from(argmax_lowest(&logits) == ex.target);
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Mini-batch Adam on cross-entropy over candidates; batches hold whole
/// scenes so object embeddings are shared. Keeps the parameters with the
/// best validation accuracy.
pub fn train_guesser<R: Rng + ?Sized>(
    model: &mut GuesserModel,
    space: &QuestionSpace,
    train: (&[Scene], &[GuesserExample]),
    val: (&[Scene], &[GuesserExample]),
    config: &GuesserConfig,
    rng: &mut R,
) -> Result<GuesserCurve> {
    let (train_scenes, train_examples) = train;
    if train_examples.is_empty() {
        return Err(Error::Validation("guesser training needs dialogues".into()));
    }
    let layout = model.param_layout();
    let mut adam = AdamState::new(layout.total(), config.lr);
    let mut grads = vec![0.0; layout.total()];
    let mut by_scene: BTreeMap<usize, Vec<(&Dialogue, usize)>> = BTreeMap::new();
    for ex in train_examples {
        by_scene.entry(ex.scene).or_default().push((&ex.dialogue, ex.target));
    }
    let mut groups: Vec<(usize, Vec<(&Dialogue, usize)>)> = by_scene.into_iter().collect();
    let mut curve = GuesserCurve::default();
    let mut best = (f64::NEG_INFINITY, model.flat_params());
    for epoch in 1..=config.epochs {
        groups.shuffle(rng);
        let mut total = 0.0;
        let mut start = 0;
        while start < groups.len() {
            // Whole scenes per batch until at least `batch_size` dialogues.
            let mut end = start;
            let mut m = 0usize;
            while end < groups.len() && m < config.batch_size.max(1) {
                m += groups[end].1.len();
                end += 1;
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            for (s, items) in &groups[start..end] {
                total += guesser_scene_loss(model, space, &train_scenes[*s], items, &mut grads)?;
            }
            start = end;
            let m = m as f64;
            grads.iter_mut().for_each(|g| *g /= m);
            let mut params = model.flat_params();
            adam.step(&mut params, &grads, &layout)
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            model.set_flat_params(&params)?;
        }
        let loss = total / train_examples.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite guesser loss".into(),
            });
        }
        let acc = if val.1.is_empty() {
            f64::NAN
        } else {
            evaluate_guesser(model, space, val.0, val.1)?
        };
        curve.epochs.push((epoch, loss, acc));
        if acc > best.0 || (val.1.is_empty() && epoch == config.epochs) {
            best = (acc, model.flat_params());
            curve.best_epoch = epoch;
        } else if config.patience > 0 && epoch - curve.best_epoch >= config.patience {
            break;
        }
    }
    model.set_flat_params(&best.1)?;
    Ok(curve)
}
