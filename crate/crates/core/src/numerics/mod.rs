//! Minimal dense-network stack: forward/backward passes, losses, Adam and a
//! portable checkpoint container. All arithmetic is `f64`.

mod adam;
mod checkpoint;
mod dense;
mod embedding;
mod loss;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use dense::{softmax, Activation, Dense, DenseNet, Trace};
pub use embedding::CategoryTable;
pub use loss::{l2_norm, l2_norm_grad, mse, mse_grad, softmax_cross_entropy};

/// Names the contiguous tensors that make up a flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamLayout {
    segments: Vec<(String, usize)>,
}

impl ParamLayout {
    pub fn single(name: impl Into<String>, len: usize) -> Self {
        let mut layout = Self::default();
        layout.push(name, len);
        layout
    }

    pub fn push(&mut self, name: impl Into<String>, len: usize) {
        self.segments.push((name.into(), len));
    }

    pub fn extend(&mut self, other: ParamLayout) {
        self.segments.extend(other.segments);
    }

    pub fn total(&self) -> usize {
        self.segments.iter().map(|(_, n)| n).sum()
    }

    /// Tensor name and offset within it for a flat index.
    pub fn locate(&self, index: usize) -> Option<(&str, usize)> {
        let mut start = 0;
        for (name, len) in &self.segments {
            if index < start + len {
                return Some((name, index - start));
            }
            start += len;
        }
        None
    }
}

/// A model whose trainable parameters can be viewed as one flat vector.
pub trait Parameterized {
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, src: &[f64]) -> crate::error::Result<()>;
    fn param_layout(&self) -> ParamLayout;

    fn num_flat_params(&self) -> usize {
        self.param_layout().total()
    }
}

/// One Adam update of a whole model from a flat gradient.
pub fn apply_adam<M: Parameterized + ?Sized>(
    model: &mut M,
    grads: &[f64],
    state: &mut AdamState,
) -> crate::error::Result<()> {
    let mut params = model.flat_params();
    state.step(&mut params, grads, &model.param_layout())?;
    model.set_flat_params(&params)
}

/// Central finite differences `(f(p + h e_k) - f(p - h e_k)) / 2h` per coordinate.
///
/// Test oracle for every analytic gradient in the crate.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    let mut grads = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + h;
        let up = f(&p);
        p[k] = orig - h;
        let down = f(&p);
        p[k] = orig;
        grads.push((up - down) / (2.0 * h));
    }
    grads
}

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates skipped because `f` has a kink (ReLU or hinge boundary)
    /// within `h` of the evaluation point.
    pub kinks: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol && self.kinks * 10 <= self.checked + self.kinks
    }
}

/// Relative error `|a - n| / max(|a|, |n|, floor)` per coordinate, where
/// `floor = max(1e-6, 1e4 * eps * |f| / h)` keeps coordinates whose true
/// derivative is below the central-difference round-off out of the ratio.
///
/// A mismatching coordinate whose one-sided differences disagree is a kink
/// of `f`, where no derivative exists; it is counted but not scored.
pub fn gradcheck<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64, tol: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut p = params.to_vec();
    let f0 = f(&p);
    let floor = (1e4 * f64::EPSILON * f0.abs() / h).max(1e-6);
    let mut report = GradCheck {
        checked: 0,
        kinks: 0,
        max_rel_error: 0.0,
    };
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + h;
        let up = f(&p);
        p[k] = orig - h;
        let down = f(&p);
        p[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel >= tol {
            let fwd = (up - f0) / h;
            let bwd = (f0 - down) / h;
            if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()) + 1e-7 {
                report.kinks += 1;
                continue;
            }
        }
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
    }
    report
}
