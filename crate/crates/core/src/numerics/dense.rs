//! Dense feed-forward networks with exact backpropagation.
//!
//! Parameters of a [`DenseNet`] are addressed through a flat layout: for each
//! layer in order, the row-major weight matrix `(out, in)` followed by the
//! bias vector. Gradients returned by [`DenseNet::backward`] use the same
//! layout, which is what the optimizer and the checkpoint container consume.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    /// Softmax over the layer output. Only valid on the final layer.
    Softmax,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Checkpoint(format!("unknown activation tag `{other}`"))),
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// Row-major, shape (out_dim, in_dim).
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
        let weights = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *zo += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        z
    }

    fn activate(&self, z: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Identity => z.to_vec(),
            Activation::Softmax => softmax(z),
        }
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input fed to each layer.
    inputs: Vec<Vec<f64>>,
    /// Output of each layer after activation.
    outputs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("trace of non-empty net")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        let last = layers.len() - 1;
        if layers[..last]
            .iter()
            .any(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::Config(
                "softmax is only allowed as the final activation".into(),
            ));
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(&l.bias).any(|p| !p.is_finite()))
        {
            return Err(Error::Validation("non-finite network parameter".into()));
        }
        Ok(Self { layers })
    }

    /// Builds a Glorot-initialised network from a list of widths.
    ///
    /// `widths = [in, h1, ..., out]`; every hidden layer uses `hidden`, the
    /// last layer uses `output`.
    pub fn glorot<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("bad layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n { output } else { hidden };
                Dense::glorot(widths[k], widths[k + 1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    /// Same architecture as `glorot`, every parameter zero.
    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("bad layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n { output } else { hidden };
                Dense::zeros(widths[k], widths[k + 1], act)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Layer widths `[in, h1, ..., out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.append_params(&mut out);
        out
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Overwrites parameters from the front of `src`; returns how many were read.
    pub fn load_params(&mut self, src: &[f64]) -> Result<usize> {
        if src.len() < self.num_params() {
            return Err(Error::Shape(format!(
                "need {} parameters, got {}",
                self.num_params(),
                src.len()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&src[at..at + nw]);
            at += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&src[at..at + nb]);
            at += nb;
        }
        Ok(at)
    }

    /// Names of each parameter tensor in flat-layout order.
    pub fn layout(&self, prefix: &str) -> super::ParamLayout {
        let mut layout = super::ParamLayout::default();
        for (k, layer) in self.layers.iter().enumerate() {
            layout.push(format!("{prefix}.layer{k}.weight"), layer.weights.len());
            layout.push(format!("{prefix}.layer{k}.bias"), layer.bias.len());
        }
        layout
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut act = x.to_vec();
        for layer in &self.layers {
            act = layer.activate(&layer.pre_activation(&act));
        }
        Ok(act)
    }

    /// Forward pass that stops before the final activation.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut act = x.to_vec();
        for layer in &self.layers[..last] {
            act = layer.activate(&layer.pre_activation(&act));
        }
        Ok(self.layers[last].pre_activation(&act))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for layer in &self.layers {
            let out = layer.activate(&layer.pre_activation(&act));
            inputs.push(act);
            act = out.clone();
            outputs.push(out);
        }
        Ok(Trace { inputs, outputs })
    }

    /// Gradients of `<upstream, forward(x)>` with respect to `x` and all parameters.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let mut grads = vec![0.0; self.num_params()];
        let input_grad = self.backward_trace(&trace, upstream, &mut grads)?;
        Ok((input_grad, grads))
    }

    /// Backpropagates `upstream` (gradient w.r.t. the network output) through a
    /// recorded trace, *adding* parameter gradients into `grads`.
    pub fn backward_trace(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient of length {} for output of length {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let g = activation_backward(
            self.layers[last].activation,
            &trace.outputs[last],
            upstream,
        );
        self.backward_pre(trace, g, grads)
    }

    /// Like [`backward_trace`](Self::backward_trace), but `logit_grad` is the
    /// gradient w.r.t. the final layer's *pre-activation*. Used by
    /// softmax-cross-entropy heads, where `p - onehot` is exact and stable.
    pub fn backward_trace_logits(
        &self,
        trace: &Trace,
        logit_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if logit_grad.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "logit gradient of length {} for output of length {}",
                logit_grad.len(),
                self.output_dim()
            )));
        }
        self.backward_pre(trace, logit_grad.to_vec(), grads)
    }

    fn backward_pre(&self, trace: &Trace, mut g: Vec<f64>, grads: &mut [f64]) -> Result<Vec<f64>> {
        if grads.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "gradient buffer of length {} for {} parameters",
                grads.len(),
                self.num_params()
            )));
        }
        // Offsets of each layer's block in the flat layout.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            offsets.push(at);
            at += layer.num_params();
        }
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &trace.inputs[k];
            let base = offsets[k];
            let (wgrad, bgrad) =
                grads[base..base + layer.num_params()].split_at_mut(layer.weights.len());
            for o in 0..layer.out_dim {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                bgrad[o] += go;
                let row = &mut wgrad[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, xi) in row.iter_mut().zip(input) {
                    *w += go * xi;
                }
            }
            let mut gin = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += go * w;
                }
            }
            if k > 0 {
                let prev = &self.layers[k - 1];
                gin = activation_backward(prev.activation, &trace.outputs[k - 1], &gin);
            }
            g = gin;
        }
        Ok(g)
    }
}

/// Maps a gradient w.r.t. an activation's output to one w.r.t. its input.
fn activation_backward(act: Activation, output: &[f64], g: &[f64]) -> Vec<f64> {
    match act {
        Activation::Identity => g.to_vec(),
        Activation::Relu => output
            .iter()
            .zip(g)
            .map(|(&y, &gi)| if y > 0.0 { gi } else { 0.0 })
            .collect(),
        Activation::Softmax => {
            let dot: f64 = output.iter().zip(g).map(|(y, gi)| y * gi).sum();
            output.iter().zip(g).map(|(y, gi)| y * (gi - dot)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use crate::rng::substream;

    fn identity_layer(n: usize, act: Activation) -> Dense {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Dense::from_parts(n, n, act, w, vec![0.0; n]).unwrap()
    }

    #[test]
    fn identity_net_passes_input_through() {
        let net = DenseNet::new(vec![identity_layer(2, Activation::Identity)]).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let net = DenseNet::new(vec![identity_layer(2, Activation::Relu)]).unwrap();
        assert_eq!(net.forward(&[-3.0, 4.0]).unwrap(), vec![0.0, 4.0]);
    }

    #[test]
    fn two_layer_forward_matches_hand_matrix_arithmetic() {
        let mut rng = substream(11, "dense.forward");
        let net = DenseNet::glorot(&[2, 3, 2], Activation::Relu, Activation::Identity, &mut rng)
            .unwrap();
        let x = [0.5, -0.5];
        // Independent evaluation: explicit nested loops over the stored matrices.
        let l0 = &net.layers()[0];
        let mut h = [0.0; 3];
        for o in 0..3 {
            let mut acc = l0.bias()[o];
            for i in 0..2 {
                acc += l0.weights()[o * 2 + i] * x[i];
            }
            h[o] = if acc > 0.0 { acc } else { 0.0 };
        }
        let l1 = &net.layers()[1];
        let mut y = [0.0; 2];
        for o in 0..2 {
            let mut acc = l1.bias()[o];
            for i in 0..3 {
                acc += l1.weights()[o * 3 + i] * h[i];
            }
            y[o] = acc;
        }
        let got = net.forward(&x).unwrap();
        for (a, b) in got.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let net = DenseNet::new(vec![identity_layer(2, Activation::Identity)]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(net.backward(&[1.0, 2.0], &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_only_last() {
        let layers = vec![
            Dense::zeros(2, 2, Activation::Softmax),
            Dense::zeros(2, 2, Activation::Identity),
        ];
        assert!(matches!(DenseNet::new(layers), Err(Error::Config(_))));
    }

    #[test]
    fn chained_dims_enforced() {
        let layers = vec![
            Dense::zeros(2, 3, Activation::Relu),
            Dense::zeros(2, 2, Activation::Identity),
        ];
        assert!(matches!(DenseNet::new(layers), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_layer_gradient() {
        let layer =
            Dense::from_parts(2, 1, Activation::Identity, vec![0.3, -0.7], vec![0.1]).unwrap();
        let net = DenseNet::new(vec![layer]).unwrap();
        let (gin, grads) = net.backward(&[2.0, 5.0], &[1.0]).unwrap();
        assert_eq!(&grads[..2], &[2.0, 5.0]);
        assert_eq!(grads[2], 1.0);
        assert_eq!(gin, vec![0.3, -0.7]);
    }

    #[test]
    fn relu_dead_zone_has_zero_gradient() {
        let layer = Dense::from_parts(1, 1, Activation::Relu, vec![1.0], vec![-5.0]).unwrap();
        let net = DenseNet::new(vec![layer]).unwrap();
        let (gin, grads) = net.backward(&[1.0], &[1.0]).unwrap();
        assert_eq!(gin, vec![0.0]);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    fn check_net_gradients(net: &DenseNet, x: &[f64], upstream: &[f64]) {
        let (_, grads) = net.backward(x, upstream).unwrap();
        let base = net.params();
        let numeric = finite_diff_grad(
            |p| {
                let mut n = net.clone();
                n.load_params(p).unwrap();
                let y = n.forward(x).unwrap();
                y.iter().zip(upstream).map(|(a, b)| a * b).sum()
            },
            &base,
            1e-5,
        );
        for (a, n) in grads.iter().zip(&numeric) {
            let scale = a.abs().max(n.abs()).max(1e-3);
            assert!((a - n).abs() / scale < 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn random_two_layer_gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = substream(seed, "dense.gradcheck");
            let net =
                DenseNet::glorot(&[4, 5, 3], Activation::Relu, Activation::Identity, &mut rng)
                    .unwrap();
            let x: Vec<f64> = (0..4).map(|i| (i as f64 * 0.37 + seed as f64 * 0.11).sin()).collect();
            check_net_gradients(&net, &x, &[0.3, -1.2, 0.8]);
        }
    }

    #[test]
    fn softmax_output_gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = substream(seed, "dense.softmax");
            let net =
                DenseNet::glorot(&[3, 4, 3], Activation::Relu, Activation::Softmax, &mut rng)
                    .unwrap();
            check_net_gradients(&net, &[0.2, -0.4, 0.9], &[1.0, -0.5, 2.0]);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = substream(3, "dense.input");
        let net = DenseNet::glorot(&[3, 6, 2], Activation::Relu, Activation::Identity, &mut rng)
            .unwrap();
        let x = [0.4, -0.1, 0.7];
        let up = [1.5, -0.3];
        let (gin, _) = net.backward(&x, &up).unwrap();
        let numeric = finite_diff_grad(
            |xx| {
                let y = net.forward(xx).unwrap();
                y[0] * up[0] + y[1] * up[1]
            },
            &x,
            1e-5,
        );
        for (a, n) in gin.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-7);
        }
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let mut rng = substream(5, "dense.pure");
        let net = DenseNet::glorot(&[3, 8, 3], Activation::Relu, Activation::Softmax, &mut rng)
            .unwrap();
        let x = [0.123, -4.5, 2.25];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[2] == 0.0);
    }

    #[test]
    fn params_round_trip_through_flat_layout() {
        let mut rng = substream(9, "dense.flat");
        let net = DenseNet::glorot(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng)
            .unwrap();
        let mut other = DenseNet::zeros(&[3, 4, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(other.load_params(&net.params()).unwrap(), net.num_params());
        assert_eq!(other, net);
        assert_eq!(net.layout("enc").total(), net.num_params());
    }
}
