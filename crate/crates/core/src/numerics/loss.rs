use super::softmax;
use crate::error::{Error, Result};

/// Mean of squared element-wise differences.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "mse of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Gradient of `mse(target, x)` with respect to `x`.
pub fn mse_grad(target: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    x.iter().zip(target).map(|(xi, ti)| 2.0 * (xi - ti) / n).collect()
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gradient of the Euclidean norm; the zero subgradient at the origin.
pub fn l2_norm_grad(x: &[f64]) -> Vec<f64> {
    let n = l2_norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| v / n).collect()
}

/// Weighted softmax cross-entropy on logits.
///
/// Returns `(weight * -ln p_target, weight * (p - onehot))`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize, weight: f64) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -weight * p[target].max(f64::MIN_POSITIVE).ln();
    let mut grad: Vec<f64> = p.iter().map(|pi| weight * pi).collect();
    grad[target] -= weight;
    (loss, grad)
}
