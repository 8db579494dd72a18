use super::ParamLayout;
use crate::error::{Error, Result};

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    /// Zeroed moments, beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    /// One bias-corrected Adam update, in place.
    ///
    /// Nothing is modified if any gradient entry is non-finite; the error names
    /// the tensor the entry belongs to according to `layout`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], layout: &ParamLayout) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            let (tensor, offset) = layout
                .locate(index)
                .map(|(n, o)| (n.to_string(), o))
                .unwrap_or_else(|| ("params".to_string(), index));
            return Err(Error::NonFiniteGradient {
                tensor,
                index: offset,
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`] for a single anonymous tensor.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    let layout = ParamLayout::single("params", params.len());
    state.step(params, grads, &layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut st = AdamState::new(3, 0.1);
        adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let lr = 0.01;
        let g = 0.3;
        let mut p = vec![1.0];
        let mut st = AdamState::new(1, lr);
        adam_step(&mut p, &[g], &mut st).unwrap();
        // t = 1: m = 0.1 g, v = 0.001 g^2; m_hat = g, v_hat = g^2.
        let m_hat = (0.1 * g) / (1.0 - 0.9);
        let v_hat = (0.001 * g * g) / (1.0 - 0.999);
        let expected = 1.0 - lr * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        // Approximately a step of -lr * sign(g).
        assert!((p[0] - (1.0 - lr)).abs() < 1e-6);
    }

    #[test]
    fn descends_a_scalar_parabola() {
        let mut w = vec![0.0];
        let mut st = AdamState::new(1, 0.1);
        for _ in 0..100 {
            let g = 2.0 * (w[0] - 3.0);
            adam_step(&mut w, &[g], &mut st).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.5, "w = {}", w[0]);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut layout = ParamLayout::single("encoder.layer0.weight", 2);
        layout.push("encoder.layer0.bias", 1);
        let mut p = vec![0.0; 3];
        let mut st = AdamState::new(3, 0.1);
        let err = st.step(&mut p, &[0.0, 0.0, f64::NAN], &layout).unwrap_err();
        match err {
            Error::NonFiniteGradient { tensor, index } => {
                assert_eq!(tensor, "encoder.layer0.bias");
                assert_eq!(index, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step_count, 0);
        assert_eq!(p, vec![0.0; 3]);
    }
}
