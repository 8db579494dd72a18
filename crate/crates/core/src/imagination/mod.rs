//! Regularised auto-encoder producing label-free object embeddings.
//!
//! The encoder maps a perceptual vector `v` to `z`, the decoder maps `z` back
//! to `v_tilde`. Training minimises
//!
//! ```text
//! L_IMG = L_REC + alpha * L_REG
//! L_REC = max(0, eta + MSE(v_i, v_tilde) - MSE(v_j, v_tilde))
//! L_REG = ||z|| + ||theta_decoder||
//! ```
//!
//! where `v_j` is a different-category object from the same scene. Category
//! labels are used only to pick `j` (and by the optional auxiliary head);
//! `encode` takes nothing but `v`.

mod loss;
mod train;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Activation, Checkpoint, DenseNet, ParamLayout, Parameterized};

pub use loss::{
    imagination_loss, reconstruction_loss, reconstruction_loss_signed, regularization_loss,
    sample_negative, triplet_loss, LossParts,
};
pub use train::{hinge_rate, train_imagination, EpochLog, ImaginationTrainConfig, TrainingCurve};

pub const CHECKPOINT_KIND: &str = "imagination";

/// Architecture and loss hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginationConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub eta: f64,
    /// Use `max(0, eta - MSE(v_i, .) + MSE(v_j, .))` instead of the standard orientation.
    pub paper_literal_sign: bool,
    pub aux_category_loss: bool,
    pub lambda_cat: f64,
}

impl Default for ImaginationConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: 32,
            alpha: 1e-5,
            eta: 1.0,
            paper_literal_sign: false,
            aux_category_loss: false,
            lambda_cat: 0.1,
        }
    }
}

/// Auxiliary softmax head on `z` over in-domain categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryHead {
    pub net: DenseNet,
    /// Category id of each output unit.
    pub classes: Vec<usize>,
    /// Per-class loss weights (inverse frequency, mean 1).
    pub class_weights: Vec<f64>,
}

impl CategoryHead {
    pub fn class_index(&self, category: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == category)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImaginationModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub alpha: f64,
    pub eta: f64,
    pub paper_literal_sign: bool,
    pub lambda_cat: f64,
    pub category_head: Option<CategoryHead>,
}

impl ImaginationModel {
    /// Glorot-initialised model. `head_classes` must be given iff the
    /// auxiliary category loss is enabled.
    pub fn new<R: Rng + ?Sized>(
        perceptual_dim: usize,
        config: &ImaginationConfig,
        head_classes: Option<(Vec<usize>, Vec<f64>)>,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = DenseNet::glorot(
            &[perceptual_dim, config.hidden, config.latent_dim],
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        let decoder = DenseNet::glorot(
            &[config.latent_dim, config.hidden, perceptual_dim],
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        let category_head = match (config.aux_category_loss, head_classes) {
            (false, _) => None,
            (true, Some((classes, class_weights))) => Some(CategoryHead {
                net: DenseNet::glorot(
                    &[config.latent_dim, classes.len()],
                    Activation::Identity,
                    Activation::Softmax,
                    rng,
                )?,
                classes,
                class_weights,
            }),
            (true, None) => {
                return Err(Error::Config(
                    "auxiliary category loss needs the in-domain class list".into(),
                ))
            }
        };
        let model = Self {
            encoder,
            decoder,
            alpha: config.alpha,
            eta: config.eta,
            paper_literal_sign: config.paper_literal_sign,
            lambda_cat: config.lambda_cat,
            category_head,
        };
        model.validate()?;
        Ok(model)
    }

    /// All-zero parameters; `encode` and `decode` return zero vectors.
    pub fn zeros(perceptual_dim: usize, config: &ImaginationConfig) -> Result<Self> {
        let model = Self {
            encoder: DenseNet::zeros(
                &[perceptual_dim, config.hidden, config.latent_dim],
                Activation::Relu,
                Activation::Identity,
            )?,
            decoder: DenseNet::zeros(
                &[config.latent_dim, config.hidden, perceptual_dim],
                Activation::Relu,
                Activation::Identity,
            )?,
            alpha: config.alpha,
            eta: config.eta,
            paper_literal_sign: config.paper_literal_sign,
            lambda_cat: config.lambda_cat,
            category_head: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let mut mirrored = self.encoder.widths();
        mirrored.reverse();
        if self.decoder.widths() != mirrored {
            return Err(Error::Shape(format!(
                "decoder widths {:?} do not mirror encoder widths {:?}",
                self.decoder.widths(),
                self.encoder.widths()
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if let Some(head) = &self.category_head {
            if head.net.input_dim() != self.latent_dim()
                || head.net.output_dim() != head.classes.len()
                || head.class_weights.len() != head.classes.len()
            {
                return Err(Error::Shape("category head does not match latent/classes".into()));
            }
        }
        Ok(())
    }

    pub fn perceptual_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(v)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(z)
    }

    pub fn reconstruct(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(v)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND)
            .with_hparam("alpha", self.alpha)
            .with_hparam("eta", self.eta)
            .with_hparam("paper_literal_sign", self.paper_literal_sign)
            .with_hparam("lambda_cat", self.lambda_cat)
            .with_net("encoder", &self.encoder)
            .with_net("decoder", &self.decoder);
        if let Some(head) = &self.category_head {
            ck = ck
                .with_net("category_head", &head.net)
                .with_tensor(
                    "head_classes",
                    vec![head.classes.len()],
                    head.classes.iter().map(|&c| c as f64).collect(),
                )
                .with_tensor("head_class_weights", vec![head.class_weights.len()], head.class_weights.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let category_head = if ck.has_net("category_head") {
            Some(CategoryHead {
                net: ck.net("category_head")?.clone(),
                classes: ck.tensor("head_classes")?.1.iter().map(|&c| c as usize).collect(),
                class_weights: ck.tensor("head_class_weights")?.1.to_vec(),
            })
        } else {
            None
        };
        let model = Self {
            encoder: ck.net("encoder")?.clone(),
            decoder: ck.net("decoder")?.clone(),
            alpha: ck.hparam_f64("alpha")?,
            eta: ck.hparam_f64("eta")?,
            paper_literal_sign: ck.hparam("paper_literal_sign")? == "true",
            lambda_cat: ck.hparam_f64("lambda_cat")?,
            category_head,
        };
        model.validate()?;
        Ok(model)
    }
}

impl Parameterized for ImaginationModel {
    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        self.decoder.append_params(&mut p);
        if let Some(head) = &self.category_head {
            head.net.append_params(&mut p);
        }
        p
    }

    fn set_flat_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_flat_params() {
            return Err(Error::Shape(format!(
                "imagination model has {} parameters, got {}",
                self.num_flat_params(),
                src.len()
            )));
        }
        let mut at = self.encoder.load_params(src)?;
        at += self.decoder.load_params(&src[at..])?;
        if let Some(head) = &mut self.category_head {
            head.net.load_params(&src[at..])?;
        }
        Ok(())
    }

    fn param_layout(&self) -> ParamLayout {
        let mut layout = self.encoder.layout("encoder");
        layout.extend(self.decoder.layout("decoder"));
        if let Some(head) = &self.category_head {
            layout.extend(head.net.layout("category_head"));
        }
        layout
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn zero_model_maps_to_zero() {
        let m = ImaginationModel::zeros(32, &ImaginationConfig::default()).unwrap();
        let v: Vec<f64> = (0..32).map(|i| i as f64 * 0.1 - 1.0).collect();
        assert_eq!(m.encode(&v).unwrap(), vec![0.0; 16]);
        assert_eq!(m.decode(&[0.3; 16]).unwrap(), vec![0.0; 32]);
    }

    #[test]
    fn encode_is_deterministic_and_shaped() {
        let mut rng = substream(1, "img");
        let m = ImaginationModel::new(32, &ImaginationConfig::default(), None, &mut rng).unwrap();
        let v = vec![0.5; 32];
        assert_eq!(m.encode(&v).unwrap(), m.encode(&v).unwrap());
        assert_eq!(m.reconstruct(&v).unwrap().len(), 32);
        assert!(matches!(m.encode(&[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let mut rng = substream(2, "img");
        let mut m = ImaginationModel::new(32, &ImaginationConfig::default(), None, &mut rng).unwrap();
        m.decoder = DenseNet::zeros(&[16, 20, 32], Activation::Relu, Activation::Identity).unwrap();
        assert!(m.validate().is_err());
    }

    #[test]
    fn head_present_iff_enabled() {
        let mut rng = substream(3, "img");
        let cfg = ImaginationConfig {
            aux_category_loss: true,
            ..ImaginationConfig::default()
        };
        assert!(ImaginationModel::new(32, &cfg, None, &mut rng).is_err());
        let m = ImaginationModel::new(32, &cfg, Some((vec![0, 4, 7], vec![1.0; 3])), &mut rng)
            .unwrap();
        assert_eq!(m.category_head.as_ref().unwrap().net.output_dim(), 3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = substream(4, "img");
        let cfg = ImaginationConfig {
            aux_category_loss: true,
            ..ImaginationConfig::default()
        };
        let m = ImaginationModel::new(32, &cfg, Some((vec![1, 2], vec![0.5, 1.5])), &mut rng)
            .unwrap();
        let ck = Checkpoint::from_bytes(&m.to_checkpoint().to_bytes().unwrap()).unwrap();
        assert_eq!(ImaginationModel::from_checkpoint(&ck).unwrap(), m);
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = substream(5, "img");
        let mut m = ImaginationModel::new(8, &ImaginationConfig::default(), None, &mut rng).unwrap();
        let p = m.flat_params();
        let shifted: Vec<f64> = p.iter().map(|x| x + 1.0).collect();
        m.set_flat_params(&shifted).unwrap();
        assert_eq!(m.flat_params(), shifted);
        assert_eq!(m.param_layout().total(), p.len());
    }
}
