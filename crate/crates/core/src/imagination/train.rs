use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::loss::{sample_negative, triplet_loss};
use super::ImaginationModel;
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, l2_norm_grad, AdamState, Parameterized};
use crate::rng::Rng as StreamRng;
use crate::world::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct ImaginationTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for ImaginationTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            epochs: 30,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Fraction of validation triplets with a non-zero hinge.
    pub val_hinge_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept; 0 if no epoch ran.
    pub best_epoch: usize,
}

/// Every (scene, object) pair that has a valid negative.
fn anchors(scenes: &[Scene]) -> Vec<(usize, usize)> {
    scenes
        .iter()
        .enumerate()
        .flat_map(|(s, scene)| (0..scene.objects.len()).map(move |i| (s, i)))
        .collect()
}

/// Mean loss and hinge rate over `scenes` with negatives drawn from `rng`.
fn evaluate(model: &ImaginationModel, scenes: &[Scene], rng: &mut StreamRng) -> Result<(f64, f64)> {
    let mut grads = vec![0.0; model.num_flat_params()];
    let (mut total, mut active, mut n) = (0.0, 0usize, 0usize);
    for scene in scenes {
        for (i, o) in scene.objects.iter().enumerate() {
            let j = sample_negative(scene, i, rng)?;
            let parts = triplet_loss(model, &o.v, &scene.objects[j].v, None, false, &mut grads)?;
            total += parts.reconstruction + model.alpha * parts.regularization;
            active += usize::from(parts.hinge_active);
            n += 1;
        }
    }
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let theta_norm = l2_norm(&model.decoder.params());
    Ok((total / n as f64 + model.alpha * theta_norm, active as f64 / n as f64))
}

/// Mini-batch Adam over all (scene, object) anchors, one fresh negative per
/// anchor per epoch. Keeps the parameters of the best validation epoch.
pub fn train_imagination<R: Rng + ?Sized>(
    model: &mut ImaginationModel,
    train: &[Scene],
    val: &[Scene],
    config: &ImaginationTrainConfig,
    rng: &mut R,
) -> Result<TrainingCurve> {
    if train.is_empty() {
        return Err(Error::Validation("imagination training needs scenes".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut pairs = anchors(train);
    let val_seed = rng.next_u64();
    let layout = model.param_layout();
    let n_enc = model.encoder.num_params();
    let n_dec = model.decoder.num_params();
    let mut adam = AdamState::new(layout.total(), config.lr);
    let mut curve = TrainingCurve::default();
    let mut best = (f64::INFINITY, model.flat_params());
    let mut grads = vec![0.0; layout.total()];

    for epoch in 1..=config.epochs {
        pairs.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &(s, i) in batch {
                let scene = &train[s];
                let j = sample_negative(scene, i, rng)?;
                let anchor = &scene.objects[i];
                let parts = triplet_loss(
                    model,
                    &anchor.v,
                    &scene.objects[j].v,
                    Some(anchor.category),
                    false,
                    &mut grads,
                )?;
                batch_loss += parts.total;
            }
            let m = batch.len() as f64;
            grads.iter_mut().for_each(|g| *g /= m);
            let theta = model.decoder.params();
            let theta_norm = l2_norm(&theta);
            for (g, n) in grads[n_enc..n_enc + n_dec].iter_mut().zip(l2_norm_grad(&theta)) {
                *g += model.alpha * n;
            }
            batch_loss += m * model.alpha * theta_norm;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "non-finite imagination loss".into(),
                });
            }
            epoch_loss += batch_loss;
            let mut params = model.flat_params();
            adam.step(&mut params, &grads, &layout).map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
            model.set_flat_params(&params)?;
        }
        let train_loss = epoch_loss / pairs.len() as f64;
        let (val_loss, val_hinge_rate) = if val.is_empty() {
            (train_loss, f64::NAN)
        } else {
            evaluate(model, val, &mut StreamRng::seed_from_u64(val_seed))?
        };
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite validation loss".into(),
            });
        }
        curve.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_hinge_rate,
        });
        if val_loss < best.0 {
            best = (val_loss, model.flat_params());
            curve.best_epoch = epoch;
        } else if config.patience > 0 && epoch - curve.best_epoch >= config.patience {
            break;
        }
    }
    model.set_flat_params(&best.1)?;
    Ok(curve)
}

/// Validation hinge-activation rate of a trained model with seeded negatives.
pub fn hinge_rate(model: &ImaginationModel, scenes: &[Scene], seed: u64) -> Result<f64> {
    Ok(evaluate(model, scenes, &mut StreamRng::seed_from_u64(seed))?.1)
}
