use std::collections::BTreeMap;

use rand::Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±1/sqrt(fan_in).
    Uniform {
        fan_in: usize,
    },
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn linear(out: &mut Vec<WeightSpec>, name: &str, fan_in: usize, fan_out: usize) {
    out.push(WeightSpec {
        name: format!("{name}.weight"),
        shape: vec![fan_in, fan_out],
        init: Init::Uniform { fan_in },
    });
    out.push(WeightSpec {
        name: format!("{name}.bias"),
        shape: vec![fan_out],
        init: Init::Uniform { fan_in },
    });
}

fn norm(out: &mut Vec<WeightSpec>, name: &str, d: usize) {
    out.push(WeightSpec {
        name: format!("{name}.gain"),
        shape: vec![d],
        init: Init::Ones,
    });
    out.push(WeightSpec {
        name: format!("{name}.bias"),
        shape: vec![d],
        init: Init::Zeros,
    });
}

fn attention(out: &mut Vec<WeightSpec>, name: &str, d: usize) {
    for p in ["q", "k", "v", "o"] {
        linear(out, &format!("{name}.{p}"), d, d);
    }
}

/// Every weight the architecture uses, in a fixed order.
pub fn manifest(cfg: &ModelConfig) -> Vec<WeightSpec> {
    let d = cfg.d_model;
    let ff = cfg.ff_mult * d;
    let mut out = Vec::new();
    for l in 0..cfg.gcn_layers {
        let fan_in = if l == 0 { 2 } else { cfg.gcn_hidden };
        let fan_out = if l + 1 == cfg.gcn_layers {
            d
        } else {
            cfg.gcn_hidden
        };
        linear(&mut out, &format!("gcn.{l}"), fan_in, fan_out);
    }
    linear(&mut out, "enc.in_proj", 3, d);
    for l in 0..cfg.n_enc_layers {
        let p = format!("enc.{l}");
        norm(&mut out, &format!("{p}.ln1"), d);
        attention(&mut out, &format!("{p}.attn"), d);
        norm(&mut out, &format!("{p}.ln2"), d);
        linear(&mut out, &format!("{p}.ff1"), d, ff);
        linear(&mut out, &format!("{p}.ff2"), ff, d);
    }
    norm(&mut out, "enc.ln_f", d);
    for l in 0..cfg.n_dec_layers {
        let p = format!("dec.{l}");
        norm(&mut out, &format!("{p}.ln1"), d);
        attention(&mut out, &format!("{p}.self"), d);
        norm(&mut out, &format!("{p}.ln2"), d);
        norm(&mut out, &format!("{p}.ln_kv"), d);
        attention(&mut out, &format!("{p}.cross"), d);
        norm(&mut out, &format!("{p}.ln3"), d);
        linear(&mut out, &format!("{p}.ff1"), d, ff);
        linear(&mut out, &format!("{p}.ff2"), ff, d);
    }
    norm(&mut out, "dec.ln_f", d);
    linear(&mut out, "head", d, 2);
    out
}

/// Named parameter tensors.
#[derive(Debug, Clone)]
pub struct Params {
    order: Vec<String>,
    map: BTreeMap<String, Tensor>,
}

impl Params {
    /// Seeded initialisation following the manifest.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        let mut rng = seed::rng_for(cfg.seed, "model-init");
        let mut order = Vec::new();
        let mut map = BTreeMap::new();
        for spec in manifest(cfg) {
            let n: usize = spec.shape.iter().product();
            let data: Vec<f64> = match spec.init {
                Init::Uniform { fan_in } => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            order.push(spec.name.clone());
            map.insert(spec.name, Tensor::param(&spec.shape, data)?);
        }
        Ok(Params { order, map })
    }

    /// Rebuild from stored weights; checks names and shapes against the
    /// manifest.
    pub fn from_weights(
        cfg: &ModelConfig,
        weights: &BTreeMap<String, (Vec<usize>, Vec<f64>)>,
        trainable: bool,
    ) -> Result<Self> {
        let specs = manifest(cfg);
        let mut order = Vec::new();
        let mut map = BTreeMap::new();
        for spec in &specs {
            let (shape, data) = weights
                .get(&spec.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing weight {}", spec.name)))?;
            if *shape != spec.shape {
                return Err(Error::Checkpoint(format!(
                    "weight {} has shape {shape:?}, expected {:?}",
                    spec.name, spec.shape
                )));
            }
            let t = if trainable {
                Tensor::param(shape, data.clone())?
            } else {
                Tensor::new(shape, data.clone())?
            };
            order.push(spec.name.clone());
            map.insert(spec.name.clone(), t);
        }
        if weights.len() != specs.len() {
            let extra: Vec<&String> = weights.keys().filter(|k| !map.contains_key(*k)).collect();
            return Err(Error::Checkpoint(format!("unexpected weights {extra:?}")));
        }
        Ok(Params { order, map })
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Tensors in manifest order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.order.iter().map(|n| self.map[n].clone()).collect()
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.order.iter().map(|n| (n.as_str(), &self.map[n]))
    }

    pub fn zero_grad(&self) {
        self.map.values().for_each(Tensor::zero_grad);
    }

    pub fn to_weights(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        self.map
            .iter()
            .map(|(k, t)| (k.clone(), (t.shape().to_vec(), t.to_vec())))
            .collect()
    }

    /// Copy of the values as constant tensors (no gradient tracking).
    pub fn frozen(&self) -> Params {
        Params {
            order: self.order.clone(),
            map: self
                .map
                .iter()
                .map(|(k, t)| (k.clone(), t.detach()))
                .collect(),
        }
    }
}
