//! Portable checkpoint container.
//!
//! Layout: a UTF-8 text header terminated by the line `data`, followed by the
//! raw parameters as little-endian `f64`.
//!
//! ```text
//! IMAGINE-CHECKPOINT 1
//! kind imagination
//! hparam alpha 0.00001
//! net encoder 32x32:relu 32x16:identity
//! net decoder 16x32:relu 32x32:identity
//! tensor category_table 22x16
//! data
//! <encoder params><decoder params><category_table values>
//! ```
//!
//! Nets are written in header order, each layer as row-major weights then
//! bias; tensors follow in header order. Hyperparameter values are stored as
//! Rust's shortest round-trip `f64` text or verbatim strings.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Activation, Dense, DenseNet};
use crate::error::{Error, Result};

const MAGIC: &str = "IMAGINE-CHECKPOINT 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub hparams: BTreeMap<String, String>,
    pub nets: Vec<(String, DenseNet)>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Checkpoint(format!("{what} `{s}` must be a non-empty single token")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            hparams: BTreeMap::new(),
            nets: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_hparam(mut self, key: &str, value: impl ToString) -> Self {
        self.hparams.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_net(mut self, name: &str, net: &DenseNet) -> Self {
        self.nets.push((name.to_string(), net.clone()));
        self
    }

    pub fn with_tensor(mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> Self {
        self.tensors.push((name.to_string(), shape, values));
        self
    }

    pub fn hparam(&self, key: &str) -> Result<&str> {
        self.hparams
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing hyperparameter `{key}`")))
    }

    pub fn hparam_f64(&self, key: &str) -> Result<f64> {
        let raw = self.hparam(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("hyperparameter `{key}`=`{raw}` is not a number")))
    }

    pub fn hparam_usize(&self, key: &str) -> Result<usize> {
        let raw = self.hparam(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("hyperparameter `{key}`=`{raw}` is not an integer")))
    }

    pub fn net(&self, name: &str) -> Result<&DenseNet> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
            .ok_or_else(|| Error::Checkpoint(format!("missing network `{name}`")))
    }

    pub fn has_net(&self, name: &str) -> bool {
        self.nets.iter().any(|(n, _)| n == name)
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, v)| (s.as_slice(), v.as_slice()))
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected checkpoint kind `{kind}`, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        check_token("kind", &self.kind)?;
        let mut header = format!("{MAGIC}\nkind {}\n", self.kind);
        for (k, v) in &self.hparams {
            check_token("hparam key", k)?;
            check_token("hparam value", v)?;
            header.push_str(&format!("hparam {k} {v}\n"));
        }
        for (name, net) in &self.nets {
            check_token("net name", name)?;
            header.push_str(&format!("net {name}"));
            for layer in net.layers() {
                header.push_str(&format!(
                    " {}x{}:{}",
                    layer.in_dim(),
                    layer.out_dim(),
                    layer.activation().tag()
                ));
            }
            header.push('\n');
        }
        for (name, shape, values) in &self.tensors {
            check_token("tensor name", name)?;
            if shape.iter().product::<usize>() != values.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` shape {shape:?} does not match {} values",
                    values.len()
                )));
            }
            let dims: Vec<String> = shape.iter().map(ToString::to_string).collect();
            header.push_str(&format!("tensor {name} {}\n", dims.join("x")));
        }
        header.push_str("data\n");

        let mut bytes = header.into_bytes();
        for (_, net) in &self.nets {
            for value in net.params() {
                bytes.extend_from_slice(&value.to_le_bytes());
            }
        }
        for (_, _, values) in &self.tensors {
            for value in values {
                bytes.extend_from_slice(&value.to_le_bytes());
            }
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const MARKER: &[u8] = b"\ndata\n";
        let split = bytes
            .windows(MARKER.len())
            .position(|w| w == MARKER)
            .ok_or_else(|| Error::Checkpoint("missing `data` marker".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let mut payload = &bytes[split + MARKER.len()..];

        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("bad magic line".into()));
        }
        let mut kind = None;
        let mut hparams = BTreeMap::new();
        let mut net_specs: Vec<(String, Vec<(usize, usize, Activation)>)> = Vec::new();
        let mut tensor_specs: Vec<(String, Vec<usize>)> = Vec::new();
        for line in lines {
            let parts: Vec<&str> = line.split(' ').collect();
            match parts.as_slice() {
                ["kind", k] => kind = Some(k.to_string()),
                ["hparam", k, v] => {
                    hparams.insert(k.to_string(), v.to_string());
                }
                ["net", name, layers @ ..] => {
                    let mut spec = Vec::new();
                    for l in layers {
                        spec.push(parse_layer_spec(l)?);
                    }
                    net_specs.push((name.to_string(), spec));
                }
                ["tensor", name, shape] => {
                    let dims = shape
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::Checkpoint(format!("bad tensor shape `{shape}`")))?;
                    tensor_specs.push((name.to_string(), dims));
                }
                _ => return Err(Error::Checkpoint(format!("unrecognised header line `{line}`"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Checkpoint("missing kind".into()))?;

        let mut take = |n: usize| -> Result<Vec<f64>> {
            if payload.len() < n * 8 {
                return Err(Error::Checkpoint("truncated parameter data".into()));
            }
            let (head, rest) = payload.split_at(n * 8);
            payload = rest;
            Ok(head
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };

        let mut nets = Vec::new();
        for (name, spec) in net_specs {
            let mut layers = Vec::new();
            for (i, o, act) in spec {
                let w = take(i * o)?;
                let b = take(o)?;
                layers.push(Dense::from_parts(i, o, act, w, b)?);
            }
            nets.push((name, DenseNet::new(layers)?));
        }
        let mut tensors = Vec::new();
        for (name, shape) in tensor_specs {
            let values = take(shape.iter().product())?;
            tensors.push((name, shape, values));
        }
        if !payload.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after parameter data".into()));
        }
        Ok(Self {
            kind,
            hparams,
            nets,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse_layer_spec(s: &str) -> Result<(usize, usize, Activation)> {
    let bad = || Error::Checkpoint(format!("bad layer spec `{s}`"));
    let (dims, act) = s.split_once(':').ok_or_else(bad)?;
    let (i, o) = dims.split_once('x').ok_or_else(bad)?;
    Ok((
        i.parse().map_err(|_| bad())?,
        o.parse().map_err(|_| bad())?,
        Activation::from_tag(act)?,
    ))
}
