use std::cell::RefCell;

use rand_chacha::ChaCha8Rng;

use super::{gcn, ModelConfig, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LN_EPS: f64 = 1e-5;

/// Sinusoidal position table, `[len, d]`.
pub fn positional_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            out[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Parameters plus the forward pass. Dropout is active only when an RNG is
/// attached.
pub struct Model {
    pub cfg: ModelConfig,
    pub params: Params,
    dropout_rng: Option<RefCell<ChaCha8Rng>>,
}

impl Model {
    pub fn new(cfg: ModelConfig, params: Params) -> Self {
        Model {
            cfg,
            params,
            dropout_rng: None,
        }
    }

    pub fn with_dropout(mut self, rng: ChaCha8Rng) -> Self {
        self.dropout_rng = Some(RefCell::new(rng));
        self
    }

    fn p(&self, name: &str) -> &Tensor {
        self.params.get(name)
    }

    fn dropout(&self, x: Tensor) -> Result<Tensor> {
        match &self.dropout_rng {
            Some(rng) if self.cfg.dropout_p > 0.0 => {
                x.dropout(self.cfg.dropout_p, &mut *rng.borrow_mut())
            }
            _ => Ok(x),
        }
    }

    fn linear(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        x.matmul(self.p(&format!("{name}.weight")))?
            .add(self.p(&format!("{name}.bias")))
    }

    fn norm(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        x.layer_norm(
            self.p(&format!("{name}.gain")),
            self.p(&format!("{name}.bias")),
            LN_EPS,
        )
    }

    /// Multi-head attention of `queries` over `keys_values`; keys with a
    /// false `key_mask` entry receive zero weight.
    fn attention(
        &self,
        queries: &Tensor,
        keys_values: &Tensor,
        key_mask: &[bool],
        name: &str,
    ) -> Result<Tensor> {
        let q = self.linear(queries, &format!("{name}.q"))?;
        let k = self.linear(keys_values, &format!("{name}.k"))?;
        let v = self.linear(keys_values, &format!("{name}.v"))?;
        let dh = self.cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        for h in 0..self.cfg.n_heads {
            let qh = q.slice(1, h * dh, dh)?;
            let kh = k.slice(1, h * dh, dh)?;
            let vh = v.slice(1, h * dh, dh)?;
            let weights = qh
                .matmul(&kh.transpose()?)?
                .scale(scale)?
                .softmax_masked(Some(key_mask))?;
            heads.push(weights.matmul(&vh)?);
        }
        let merged = if heads.len() == 1 {
            heads.pop().expect("one head")
        } else {
            Tensor::concat(&heads, 1)?
        };
        self.linear(&merged, &format!("{name}.o"))
    }

    fn feed_forward(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        let h = self.linear(x, &format!("{name}.ff1"))?.gelu()?;
        self.linear(&h, &format!("{name}.ff2"))
    }

    /// GCN node embeddings from a normalised adjacency and `[N, 2]` features.
    pub fn gcn_embed(&self, adj_norm: &Tensor, node_feats: &Tensor) -> Result<Tensor> {
        gcn::gcn_embed(adj_norm, node_feats, &self.params, self.cfg.gcn_layers)
    }

    /// `[L, 3]` normalised (lat, lon, t) rows to `[L, d_model]` memory.
    pub fn encode(&self, traj_norm: &[[f64; 3]], pad_mask: &[bool]) -> Result<Tensor> {
        let len = traj_norm.len();
        if len > self.cfg.max_len {
            return Err(Error::SequenceTooLong {
                len,
                max_len: self.cfg.max_len,
            });
        }
        check_mask(len, pad_mask)?;
        let d = self.cfg.d_model;
        let input = Tensor::new(&[len, 3], traj_norm.iter().flatten().copied().collect())?;
        let pe = Tensor::new(&[len, d], positional_encoding(len, d))?;
        let mut x = self.linear(&input, "enc.in_proj")?.add(&pe)?;
        for l in 0..self.cfg.n_enc_layers {
            let p = format!("enc.{l}");
            let h = self.norm(&x, &format!("{p}.ln1"))?;
            let a = self.attention(&h, &h, pad_mask, &format!("{p}.attn"))?;
            x = x.add(&self.dropout(a)?)?;
            let h = self.norm(&x, &format!("{p}.ln2"))?;
            let f = self.feed_forward(&h, &p)?;
            x = x.add(&self.dropout(f)?)?;
        }
        self.norm(&x, "enc.ln_f")?.mask_rows(pad_mask)
    }

    /// Per-position normalised (lat, lon), `[L, 2]`. With `residual` set in
    /// the config, `base` (the degraded input coordinates, `[L, 2]`) is added
    /// to the head output.
    pub fn decode(
        &self,
        memory: &Tensor,
        gcn_embeds: &Tensor,
        pad_mask: &[bool],
        base: Option<&[[f64; 2]]>,
    ) -> Result<Tensor> {
        let (sm, sg) = (memory.shape(), gcn_embeds.shape());
        if sm.len() != 2 || sg.len() != 2 || sm[1] != sg[1] || sm[1] != self.cfg.d_model {
            return Err(Error::Shape(format!(
                "decode: memory {sm:?} and GCN embeddings {sg:?} must share d_model {}",
                self.cfg.d_model
            )));
        }
        if sg[0] == 0 {
            return Err(Error::Shape("decode: no GCN node embeddings".into()));
        }
        let len = sm[0];
        check_mask(len, pad_mask)?;
        let mut cross_mask = pad_mask.to_vec();
        cross_mask.extend(std::iter::repeat(true).take(sg[0]));
        let kv_src = Tensor::concat(&[memory.clone(), gcn_embeds.clone()], 0)?;

        let mut x = memory.clone();
        for l in 0..self.cfg.n_dec_layers {
            let p = format!("dec.{l}");
            let h = self.norm(&x, &format!("{p}.ln1"))?;
            let a = self.attention(&h, &h, pad_mask, &format!("{p}.self"))?;
            x = x.add(&self.dropout(a)?)?;
            let h = self.norm(&x, &format!("{p}.ln2"))?;
            let kv = self.norm(&kv_src, &format!("{p}.ln_kv"))?;
            let c = self.attention(&h, &kv, &cross_mask, &format!("{p}.cross"))?;
            x = x.add(&self.dropout(c)?)?;
            let h = self.norm(&x, &format!("{p}.ln3"))?;
            let f = self.feed_forward(&h, &p)?;
            x = x.add(&self.dropout(f)?)?;
        }
        let mut out = self.linear(&self.norm(&x, "dec.ln_f")?, "head")?;
        if self.cfg.residual {
            let base = base
                .ok_or_else(|| Error::invalid("residual decoding needs the input coordinates"))?;
            if base.len() != len {
                return Err(Error::Shape(format!(
                    "decode: {} base rows for length {len}",
                    base.len()
                )));
            }
            out = out.add(&Tensor::new(
                &[len, 2],
                base.iter().flatten().copied().collect(),
            )?)?;
        }
        out.mask_rows(pad_mask)
    }
}

fn check_mask(len: usize, pad_mask: &[bool]) -> Result<()> {
    if pad_mask.len() != len {
        return Err(Error::Shape(format!(
            "pad mask of length {} for sequence length {len}",
            pad_mask.len()
        )));
    }
    if !pad_mask.iter().any(|m| *m) {
        return Err(Error::invalid("pad mask has no real positions"));
    }
    Ok(())
}

/// Free-function form of [`Model::encode`].
pub fn encode(
    traj_norm: &[[f64; 3]],
    pad_mask: &[bool],
    params: &Params,
    cfg: &ModelConfig,
) -> Result<Tensor> {
    Model::new(cfg.clone(), params.clone()).encode(traj_norm, pad_mask)
}

/// Free-function form of [`Model::decode`].
pub fn decode(
    memory: &Tensor,
    gcn_embeds: &Tensor,
    pad_mask: &[bool],
    base: Option<&[[f64; 2]]>,
    params: &Params,
    cfg: &ModelConfig,
) -> Result<Tensor> {
    Model::new(cfg.clone(), params.clone()).decode(memory, gcn_embeds, pad_mask, base)
}
