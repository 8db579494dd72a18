//! Flat `key = value` run configuration.
//!
//! Every key is a dotted path into [`RunConfig`] (`world.train_scenes`,
//! `guesser.lr`, ...). Values take the type of the default they replace;
//! lists are comma separated. `#` starts a comment.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};
use crate::gameplay::{BeliefSource, GameConfig, PolicyKind, QuestionerPolicy};
use crate::guesser::{ClassifierConfig, GuesserConfig, ReprMode};
use crate::imagination::{ImaginationConfig, ImaginationTrainConfig};
use crate::oracle::{FeatureSet, OracleConfig};
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginationSection {
    pub latent_dim: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub eta: f64,
    pub paper_literal_sign: bool,
    pub aux_category_loss: bool,
    pub lambda_cat: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSection {
    pub hidden: usize,
    pub category_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub questions_per_object: usize,
    /// Oracles scored by `eval oracle`.
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSection {
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuesserSection {
    pub state_dim: usize,
    pub category_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Gold dialogues about every object of a scene rather than its target only.
    pub all_objects: bool,
    /// Guessers scored by the evaluation suites; `joint` is the jointly trained one.
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSection {
    /// Guesser epoch on every n-th epoch, imagination epochs otherwise.
    pub n: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub max_turns: usize,
    pub stop_threshold: f64,
    /// Game seeds, as offsets added to the root seed.
    pub seeds: Vec<u64>,
    /// `infogain` or `random`.
    pub policy: String,
    /// `guesser` or `consistency`.
    pub belief: String,
    /// Answer from ground truth instead of a learned oracle.
    pub gold_answer_oracle: bool,
    /// Feature set of the oracle that answers during self-play.
    pub oracle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrollaSection {
    /// Subset of `gameplay`, `a_f1`, `s_f1`, `as_f1`, `l_f1`, `zeroshot`.
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsSection {
    /// Dataset directory, relative to the output directory unless absolute.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub imagination: ImaginationSection,
    pub oracle: OracleSection,
    pub classifier: ClassifierSection,
    pub guesser: GuesserSection,
    pub joint: JointSection,
    pub eval: EvalSection,
    pub probe: ProbeSection,
    pub grolla: GrollaSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world: WorldConfig::default(),
            imagination: ImaginationSection {
                latent_dim: 16,
                hidden: 32,
                alpha: 1e-5,
                eta: 1.0,
                paper_literal_sign: false,
                aux_category_loss: false,
                lambda_cat: 0.1,
                lr: 1e-4,
                batch_size: 64,
                epochs: 30,
                patience: 0,
            },
            oracle: OracleSection {
                hidden: 64,
                category_dim: 16,
                lr: 1e-3,
                batch_size: 64,
                epochs: 30,
                patience: 0,
                questions_per_object: 2,
                features: vec![
                    "question+spatial+category".into(),
                    "question+spatial+imagination".into(),
                ],
            },
            classifier: ClassifierSection {
                hidden: 32,
                lr: 1e-3,
                batch_size: 64,
                epochs: 20,
            },
            guesser: GuesserSection {
                state_dim: 64,
                category_dim: 16,
                lr: 1e-3,
                batch_size: 64,
                epochs: 20,
                patience: 0,
                all_objects: true,
                modes: ReprMode::ALL.iter().map(|m| m.name().to_string()).collect(),
            },
            joint: JointSection { n: 2, epochs: 10 },
            eval: EvalSection {
                max_turns: 10,
                stop_threshold: 0.9,
                seeds: vec![0],
                policy: "infogain".into(),
                belief: "guesser".into(),
                gold_answer_oracle: false,
                oracle: "question+spatial+imagination".into(),
            },
            probe: ProbeSection {
                lr: 1e-2,
                batch_size: 32,
                epochs: 30,
            },
            grolla: GrollaSection {
                components: vec!["gameplay".into(), "as_f1".into(), "zeroshot".into()],
            },
            paths: PathsSection { data: "data".into() },
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) => out.push((
            prefix.to_string(),
            items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
        )),
        other => out.push((prefix.to_string(), scalar_text(other))),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses `text` as a value of the same JSON type as `like`.
fn parse_like(key: &str, like: &Value, text: &str) -> Result<Value> {
    let bad = || Error::Config(format!("`{key}`: cannot parse `{text}` as {}", type_name(like)));
    Ok(match like {
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| bad())?),
        Value::Number(n) if n.is_u64() => Value::Number(text.parse::<u64>().map_err(|_| bad())?.into()),
        Value::Number(_) => {
            let x: f64 = text.parse().map_err(|_| bad())?;
            Value::Number(Number::from_f64(x).ok_or_else(bad)?)
        }
        Value::String(_) => Value::String(text.to_string()),
        Value::Array(items) => {
            let elem = items.first().cloned().unwrap_or(Value::String(String::new()));
            Value::Array(
                text.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_like(key, &elem, s))
                    .collect::<Result<_>>()?,
            )
        }
        _ => return Err(bad()),
    })
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Bool(_) => "a boolean",
        Value::Number(n) if n.is_u64() => "a non-negative integer",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "a comma-separated list",
        _ => "a value",
    }
}

fn lookup<'a>(root: &'a mut Map<String, Value>, key: &str) -> Option<&'a mut Value> {
    let mut parts = key.split('.');
    let mut cur = root.get_mut(parts.next()?)?;
    for p in parts {
        cur = cur.as_object_mut()?.get_mut(p)?;
    }
    (!cur.is_object()).then_some(cur)
}

impl RunConfig {
    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", k + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one dotted key, typed after its current value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = match serde_json::to_value(&*self) {
            Ok(Value::Object(m)) => m,
            _ => return Err(Error::Encoding("config is not an object".into())),
        };
        let slot = lookup(&mut root, key).ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        *slot = parse_like(key, slot, value)?;
        *self = serde_json::from_value(Value::Object(root))
            .map_err(|e| Error::Config(format!("`{key}`: {e}")))?;
        Ok(())
    }

    /// Applies a `K=V` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not K=V")))?;
        self.set(k.trim(), v.trim())
    }

    /// Every key with its value, in key order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        flatten("", &serde_json::to_value(self).unwrap_or(Value::Null), &mut out);
        out.sort();
        out
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must not be empty".into()));
        }
        if self.joint.n == 0 {
            return Err(Error::Config("joint.n must be at least 1".into()));
        }
        for m in &self.guesser.modes {
            if m != "joint" {
                ReprMode::parse(m)?;
            }
        }
        for f in self.oracle.features.iter().chain([&self.eval.oracle]) {
            FeatureSet::parse(f)?;
        }
        self.policy()?;
        for c in &self.grolla.components {
            if !["gameplay", "a_f1", "s_f1", "as_f1", "l_f1", "zeroshot"].contains(&c.as_str()) {
                return Err(Error::Config(format!("unknown GroLLA component `{c}`")));
            }
        }
        if !(0.0..=1.0).contains(&self.eval.stop_threshold) {
            return Err(Error::Config("eval.stop_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Actual game seeds.
    pub fn game_seeds(&self) -> Vec<u64> {
        self.eval.seeds.iter().map(|s| self.seed.wrapping_add(*s)).collect()
    }

    pub fn imagination_config(&self) -> ImaginationConfig {
        let s = &self.imagination;
        ImaginationConfig {
            latent_dim: s.latent_dim,
            hidden: s.hidden,
            alpha: s.alpha,
            eta: s.eta,
            paper_literal_sign: s.paper_literal_sign,
            aux_category_loss: s.aux_category_loss,
            lambda_cat: s.lambda_cat,
        }
    }

    pub fn imagination_train_config(&self) -> ImaginationTrainConfig {
        let s = &self.imagination;
        ImaginationTrainConfig {
            lr: s.lr,
            batch_size: s.batch_size,
            epochs: s.epochs,
            patience: s.patience,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let s = &self.oracle;
        OracleConfig {
            hidden: s.hidden,
            category_dim: s.category_dim,
            lr: s.lr,
            batch_size: s.batch_size,
            epochs: s.epochs,
            patience: s.patience,
            questions_per_object: s.questions_per_object,
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        let s = &self.classifier;
        ClassifierConfig {
            hidden: s.hidden,
            lr: s.lr,
            batch_size: s.batch_size,
            epochs: s.epochs,
        }
    }

    pub fn guesser_config(&self) -> GuesserConfig {
        let s = &self.guesser;
        GuesserConfig {
            state_dim: s.state_dim,
            category_dim: s.category_dim,
            max_turns: self.eval.max_turns,
            lr: s.lr,
            batch_size: s.batch_size,
            epochs: s.epochs,
            patience: s.patience,
        }
    }

    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            max_turns: self.eval.max_turns,
            stop_threshold: self.eval.stop_threshold,
        }
    }

    pub fn policy(&self) -> Result<QuestionerPolicy> {
        let mut p = match self.eval.policy.as_str() {
            "infogain" => QuestionerPolicy::infogain(),
            "random" => QuestionerPolicy::random(),
            other => return Err(Error::Config(format!("unknown policy `{other}`"))),
        };
        p.belief = match self.eval.belief.as_str() {
            "guesser" => BeliefSource::Guesser,
            "consistency" => BeliefSource::Consistency,
            other => return Err(Error::Config(format!("unknown belief source `{other}`"))),
        };
        debug_assert!(p.kind != PolicyKind::Scripted);
        Ok(p)
    }
}
