use rand::Rng;

use super::ImaginationModel;
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, l2_norm_grad, mse, mse_grad, softmax_cross_entropy, Parameterized};
use crate::world::Scene;

/// Uniform draw among objects of the same scene whose category differs from object `i`'s.
pub fn sample_negative<R: Rng + ?Sized>(scene: &Scene, i: usize, rng: &mut R) -> Result<usize> {
    let anchor = scene
        .objects
        .get(i)
        .ok_or_else(|| Error::Validation(format!("object {i} not in scene {}", scene.scene_id)))?;
    let candidates: Vec<usize> = scene
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.category != anchor.category)
        .map(|(j, _)| j)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Invariant(format!(
            "scene {} has no object of a category other than object {i}'s",
            scene.scene_id
        )));
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// `max(0, eta + MSE(v_i, v_tilde) - MSE(v_j, v_tilde))` and its gradient w.r.t. `v_tilde`.
pub fn reconstruction_loss(
    v_i: &[f64],
    v_j: &[f64],
    v_tilde: &[f64],
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    reconstruction_loss_signed(v_i, v_j, v_tilde, eta, false)
}

/// As [`reconstruction_loss`]; with `literal` the two distance terms swap sign,
/// giving `max(0, eta - MSE(v_i, v_tilde) + MSE(v_j, v_tilde))`.
pub fn reconstruction_loss_signed(
    v_i: &[f64],
    v_j: &[f64],
    v_tilde: &[f64],
    eta: f64,
    literal: bool,
) -> Result<(f64, Vec<f64>)> {
    if v_j.len() != v_i.len() {
        return Err(Error::Shape(format!(
            "anchor has length {} but negative has {}",
            v_i.len(),
            v_j.len()
        )));
    }
    let d_pos = mse(v_i, v_tilde)?;
    let d_neg = mse(v_j, v_tilde)?;
    let sign = if literal { -1.0 } else { 1.0 };
    let margin = eta + sign * (d_pos - d_neg);
    if margin <= 0.0 {
        return Ok((0.0, vec![0.0; v_tilde.len()]));
    }
    let gp = mse_grad(v_i, v_tilde);
    let gn = mse_grad(v_j, v_tilde);
    Ok((margin, gp.iter().zip(&gn).map(|(a, b)| sign * (a - b)).collect()))
}

/// `||z|| + ||theta||` over the flattened decoder parameters.
pub fn regularization_loss(z: &[f64], decoder_params: &[f64]) -> f64 {
    l2_norm(z) + l2_norm(decoder_params)
}

/// Components of one triplet's loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    /// `||z|| (+ ||theta||` when included`)`, before multiplying by alpha.
    pub regularization: f64,
    pub category: f64,
    pub hinge_active: bool,
}

/// Loss for anchor `v_i` against negative `v_j`, accumulating gradients of all
/// model parameters (flat layout) into `grads`.
///
/// `include_decoder_norm` adds the `alpha * ||theta||` term; batch training
/// adds it once per batch instead of once per triplet. `anchor_class` feeds
/// the auxiliary head, when the model has one.
pub fn triplet_loss(
    model: &ImaginationModel,
    v_i: &[f64],
    v_j: &[f64],
    anchor_category: Option<usize>,
    include_decoder_norm: bool,
    grads: &mut [f64],
) -> Result<LossParts> {
    let n_enc = model.encoder.num_params();
    let n_dec = model.decoder.num_params();
    if grads.len() != model.num_flat_params() {
        return Err(Error::Shape(format!(
            "gradient buffer of length {} for {} parameters",
            grads.len(),
            model.num_flat_params()
        )));
    }
    let (g_enc, rest) = grads.split_at_mut(n_enc);
    let (g_dec, g_head) = rest.split_at_mut(n_dec);

    let enc_trace = model.encoder.forward_trace(v_i)?;
    let z = enc_trace.output().to_vec();
    let dec_trace = model.decoder.forward_trace(&z)?;
    let (rec, g_tilde) =
        reconstruction_loss_signed(v_i, v_j, dec_trace.output(), model.eta, model.paper_literal_sign)?;

    let mut g_z = model.decoder.backward_trace(&dec_trace, &g_tilde, g_dec)?;
    let z_norm = l2_norm(&z);
    for (g, n) in g_z.iter_mut().zip(l2_norm_grad(&z)) {
        *g += model.alpha * n;
    }
    let mut reg = z_norm;
    if include_decoder_norm {
        let theta = model.decoder.params();
        reg += l2_norm(&theta);
        for (g, n) in g_dec.iter_mut().zip(l2_norm_grad(&theta)) {
            *g += model.alpha * n;
        }
    }

    let mut cat = 0.0;
    if let (Some(head), Some(category)) = (&model.category_head, anchor_category) {
        if let Some(k) = head.class_index(category) {
            let head_trace = head.net.forward_trace(&z)?;
            let logits = head.net.logits(&z)?;
            let (ce, g_logits) =
                softmax_cross_entropy(&logits, k, model.lambda_cat * head.class_weights[k]);
            cat = ce;
            let g_from_head = head.net.backward_trace_logits(&head_trace, &g_logits, g_head)?;
            for (g, h) in g_z.iter_mut().zip(g_from_head) {
                *g += h;
            }
        }
    }

    model.encoder.backward_trace(&enc_trace, &g_z, g_enc)?;
    Ok(LossParts {
        total: rec + model.alpha * reg + cat,
        reconstruction: rec,
        regularization: reg,
        category: cat,
        hinge_active: rec > 0.0,
    })
}

/// Full composite loss `L_IMG` for object `i` of `scene` with a freshly
/// sampled negative, and the gradient of every parameter.
pub fn imagination_loss<R: Rng + ?Sized>(
    model: &ImaginationModel,
    scene: &Scene,
    i: usize,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let j = sample_negative(scene, i, rng)?;
    let anchor = &scene.objects[i];
    let mut grads = vec![0.0; model.num_flat_params()];
    let parts = triplet_loss(
        model,
        &anchor.v,
        &scene.objects[j].v,
        Some(anchor.category),
        true,
        &mut grads,
    )?;
    Ok((parts.total, grads))
}
