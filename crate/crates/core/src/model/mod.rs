//! Reconstruction model: GCN road embedding, transformer encoder over the
//! degraded sequence, and a non-autoregressive decoder that cross-attends
//! to `[encoder memory ; GCN node embeddings]`.

mod checkpoint;
mod gcn;
mod params;
pub mod softdtw;
mod train;
mod transformer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use gcn::{gcn_embed, normalized_adjacency};
pub use params::{Params, WeightSpec};
pub use softdtw::{softdtw, softdtw_loss};
pub use train::{
    prepare_sample, reconstruct, reconstruct_batch, sample_loss, train, train_with_observer,
    EpochStats, Sample,
};
pub use transformer::{decode, encode, positional_encoding, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ff_mult: usize,
    pub gcn_layers: usize,
    pub gcn_hidden: usize,
    pub dropout_p: f64,
    pub softdtw_gamma: f64,
    pub max_len: usize,
    pub subgraph_radius_km: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Add the degraded input coordinates to the decoder head output, so
    /// the network predicts a correction rather than absolute positions.
    pub residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 2,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ff_mult: 2,
            gcn_layers: 2,
            gcn_hidden: 32,
            dropout_p: 0.0,
            softdtw_gamma: 0.1,
            max_len: 128,
            subgraph_radius_km: 0.6,
            lr: 1e-3,
            batch_size: 16,
            epochs: 60,
            seed: 0,
            residual: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < 2 {
            return bad("max_len must be >= 2".into());
        }
        if !(self.softdtw_gamma > 0.0) {
            return bad("softdtw_gamma must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)".into());
        }
        if self.gcn_layers == 0 || self.gcn_hidden == 0 || self.ff_mult == 0 {
            return bad("gcn_layers, gcn_hidden and ff_mult must be >= 1".into());
        }
        if !(self.subgraph_radius_km > 0.0) || !(self.lr > 0.0) || self.batch_size == 0 {
            return bad("subgraph_radius_km, lr and batch_size must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
