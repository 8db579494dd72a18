use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{softmax_cross_entropy, Activation, AdamState, DenseNet};
use crate::world::Scene;

/// Softmax classifier from a perceptual embedding to an in-domain category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryClassifier {
    pub net: DenseNet,
    /// Category id of each output unit.
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            lr: 1e-3,
            batch_size: 64,
            epochs: 20,
        }
    }
}

impl CategoryClassifier {
    /// Predicted category id, ties going to the lowest output unit.
    pub fn predict(&self, v: &[f64]) -> Result<usize> {
        let logits = self.net.logits(v)?;
        Ok(self.classes[super::argmax_lowest(&logits)])
    }

    /// Fraction of objects in `scenes` whose category is predicted exactly.
    pub fn accuracy(&self, scenes: &[Scene]) -> Result<f64> {
        let (mut hit, mut n) = (0usize, 0usize);
        for o in scenes.iter().flat_map(|s| &s.objects) {
            hit += usize::from(self.predict(&o.v)? == o.category);
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { hit as f64 / n as f64 })
    }
}

/// Trains on every object of `train`; the class set is the sorted set of
/// categories that occur there. Keeps the best epoch by accuracy on `val`.
pub fn train_category_classifier<R: Rng + ?Sized>(
    train: &[Scene],
    val: &[Scene],
    config: &ClassifierConfig,
    rng: &mut R,
) -> Result<CategoryClassifier> {
    let mut classes: Vec<usize> = train.iter().flat_map(|s| s.objects.iter().map(|o| o.category)).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Validation("category classifier needs at least two classes".into()));
    }
    let objects: Vec<(&[f64], usize)> = train
        .iter()
        .flat_map(|s| &s.objects)
        .map(|o| (o.v.as_slice(), classes.binary_search(&o.category).expect("collected class")))
        .collect();
    let d_o = objects[0].0.len();
    let mut model = CategoryClassifier {
        net: DenseNet::glorot(
            &[d_o, config.hidden, classes.len()],
            Activation::Relu,
            Activation::Softmax,
            rng,
        )?,
        classes,
    };
    let layout = model.net.layout("classifier");
    let mut adam = AdamState::new(layout.total(), config.lr);
    let mut order: Vec<usize> = (0..objects.len()).collect();
    let mut grads = vec![0.0; layout.total()];
    let mut best = (f64::NEG_INFINITY, model.net.params());
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &k in batch {
                let (v, label) = objects[k];
                let trace = model.net.forward_trace(v)?;
                let (_, g) = softmax_cross_entropy(&model.net.logits(v)?, label, 1.0);
                model.net.backward_trace_logits(&trace, &g, &mut grads)?;
            }
            let m = batch.len() as f64;
            grads.iter_mut().for_each(|g| *g /= m);
            let mut params = model.net.params();
            adam.step(&mut params, &grads, &layout)
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            model.net.load_params(&params)?;
        }
        let acc = model.accuracy(if val.is_empty() { train } else { val })?;
        if acc > best.0 {
            best = (acc, model.net.params());
        }
    }
    model.net.load_params(&best.1)?;
    Ok(model)
}
