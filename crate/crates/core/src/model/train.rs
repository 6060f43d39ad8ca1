use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::softdtw::softdtw_loss;
use super::{normalized_adjacency, Checkpoint, Model, ModelConfig, Params};
use crate::degrade::{HexGrid, NormStats};
use crate::error::{Error, Result};
use crate::geo::{BBox, GeoPoint};
use crate::roadnet::RoadGraph;
use crate::seed;
use crate::tensor::{Adam, Tensor};
use crate::trajectory::Trajectory;

/// Clipping margin for reconstructed coordinates, as a fraction of the
/// training bbox extent.
const CLIP_MARGIN: f64 = 0.1;
/// Minimum clipping margin in degrees, so thin training boxes still leave
/// room on both axes.
const CLIP_MARGIN_MIN_DEG: f64 = 0.005;

/// Model-ready tensors for one trajectory.
pub struct Sample {
    pub id: String,
    /// Normalised (lat, lon, t) of the degraded input.
    pub input: Vec<[f64; 3]>,
    /// Normalised (lat, lon) of the degraded input.
    pub base: Vec<[f64; 2]>,
    /// Normalised (lat, lon) of the ground truth, when known.
    pub target: Option<Vec<[f64; 2]>>,
    pub adj_norm: Tensor,
    pub node_feats: Tensor,
}

pub fn prepare_sample(
    g: &RoadGraph,
    degraded: &Trajectory,
    original: Option<&Trajectory>,
    stats: &NormStats,
    cfg: &ModelConfig,
) -> Result<Sample> {
    if degraded.len() > cfg.max_len {
        return Err(Error::SequenceTooLong {
            len: degraded.len(),
            max_len: cfg.max_len,
        });
    }
    if degraded.is_empty() {
        return Err(Error::invalid(format!(
            "trajectory {} is empty",
            degraded.id
        )));
    }
    let sg = g.local_subgraph(degraded, cfg.subgraph_radius_km)?;
    let adj_norm = normalized_adjacency(&sg.inverse_distance_weights()?)?;
    let feats: Vec<f64> = sg
        .graph
        .coords()
        .iter()
        .flat_map(|p| stats.normalize_point(*p))
        .collect();
    let node_feats = Tensor::new(&[sg.len(), 2], feats)?;
    let input = stats.normalize(degraded);
    let base = input.iter().map(|r| [r[0], r[1]]).collect();
    let target = original.map(|o| o.positions().map(|p| stats.normalize_point(p)).collect());
    Ok(Sample {
        id: degraded.id.clone(),
        input,
        base,
        target,
        adj_norm,
        node_feats,
    })
}

/// Forward pass returning the `[L, 2]` normalised prediction.
fn predict(model: &Model, sample: &Sample) -> Result<Tensor> {
    let mask = vec![true; sample.input.len()];
    let gcn = model.gcn_embed(&sample.adj_norm, &sample.node_feats)?;
    let memory = model.encode(&sample.input, &mask)?;
    model.decode(&memory, &gcn, &mask, Some(&sample.base))
}

/// SoftDTW between the prediction and the sample's target.
pub fn sample_loss(model: &Model, sample: &Sample) -> Result<Tensor> {
    let target = sample
        .target
        .as_ref()
        .ok_or_else(|| Error::Training(format!("sample {} has no target", sample.id)))?;
    softdtw_loss(&predict(model, sample)?, target, model.cfg.softdtw_gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Fit the model on `(degraded, original)` pairs.
pub fn train(
    g: &RoadGraph,
    pairs: &[(Trajectory, Trajectory)],
    cfg: &ModelConfig,
    hexgrid: Option<HexGrid>,
) -> Result<Checkpoint> {
    train_with_observer(g, pairs, cfg, hexgrid, &mut |_| {})
}

pub fn train_with_observer(
    g: &RoadGraph,
    pairs: &[(Trajectory, Trajectory)],
    cfg: &ModelConfig,
    hexgrid: Option<HexGrid>,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let originals: Vec<Trajectory> = pairs.iter().map(|(_, o)| o.clone()).collect();
    let stats = NormStats::fit(&originals)?;
    let bbox = BBox::enclosing(
        originals
            .iter()
            .flat_map(|t| t.positions().collect::<Vec<_>>()),
    )
    .ok_or_else(|| Error::Training("training trajectories have no points".into()))?;
    let samples: Vec<Sample> = pairs
        .iter()
        .map(|(d, o)| prepare_sample(g, d, Some(o), &stats, cfg))
        .collect::<Result<_>>()?;

    let params = Params::init(cfg)?;
    let tensors = params.tensors();
    let mut opt = Adam::new(&tensors, cfg.lr)?;
    let mut model = Model::new(cfg.clone(), params);
    if cfg.dropout_p > 0.0 {
        model = model.with_dropout(seed::rng_for(cfg.seed, "dropout"));
    }
    let mut shuffle_rng = seed::rng_for(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.params.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let loss = sample_loss(&model, &samples[i]).map_err(|e| {
                    Error::Training(format!(
                        "epoch {epoch} batch {bi} sample {}: {e}",
                        samples[i].id
                    ))
                })?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch} batch {bi} sample {}",
                        samples[i].id
                    )));
                }
                total += value;
                loss.scale(scale)?.backward()?;
            }
            opt.step(&tensors)
                .map_err(|e| Error::Training(format!("epoch {epoch} batch {bi}: {e}")))?;
        }
        let mean_loss = total / samples.len() as f64;
        log.push(mean_loss);
        observer(&EpochStats { epoch, mean_loss });
    }
    model.params.zero_grad();

    Ok(Checkpoint {
        config: cfg.clone(),
        weights: model.params.to_weights(),
        norm_stats: stats,
        hexgrid,
        bbox,
        training_log: log,
    })
}

/// Refine one degraded trajectory. Output keeps the input's id, length and
/// timestamps.
pub fn reconstruct(ckpt: &Checkpoint, g: &RoadGraph, degraded: &Trajectory) -> Result<Trajectory> {
    reconstruct_with(&ckpt.model()?, ckpt, g, degraded)
}

/// Reconstruct many trajectories in parallel; output order follows input.
pub fn reconstruct_batch(
    ckpt: &Checkpoint,
    g: &RoadGraph,
    degraded: &[Trajectory],
) -> Result<Vec<Trajectory>> {
    ckpt.model()?;
    degraded
        .par_iter()
        .map_init(
            || ckpt.model().expect("checked above"),
            |model, d| reconstruct_with(model, ckpt, g, d),
        )
        .collect()
}

/// As [`reconstruct`], reusing an already built model.
pub(crate) fn reconstruct_with(
    model: &Model,
    ckpt: &Checkpoint,
    g: &RoadGraph,
    degraded: &Trajectory,
) -> Result<Trajectory> {
    let len = degraded.len();
    if len < 2 || len > ckpt.config.max_len {
        return Err(Error::Reconstruction(format!(
            "trajectory {} has {len} points; expected 2..={}",
            degraded.id, ckpt.config.max_len
        )));
    }
    let sample = match prepare_sample(g, degraded, None, &ckpt.norm_stats, &ckpt.config) {
        Ok(s) => s,
        Err(Error::EmptySubgraph { radius_km }) => {
            return Err(Error::Reconstruction(format!(
                "no road node within {radius_km} km of trajectory {}; increase subgraph_radius_km",
                degraded.id
            )))
        }
        Err(e) => return Err(e),
    };
    let out = predict(model, &sample)?;
    let bbox = ckpt.bbox;
    let margin_lat = ((bbox.max.lat - bbox.min.lat) * CLIP_MARGIN).max(CLIP_MARGIN_MIN_DEG);
    let margin_lon = ((bbox.max.lon - bbox.min.lon) * CLIP_MARGIN).max(CLIP_MARGIN_MIN_DEG);
    let clip = BBox {
        min: GeoPoint {
            lat: bbox.min.lat - margin_lat,
            lon: bbox.min.lon - margin_lon,
        },
        max: GeoPoint {
            lat: bbox.max.lat + margin_lat,
            lon: bbox.max.lon + margin_lon,
        },
    };
    let data = out.data();
    let positions: Vec<GeoPoint> = data
        .chunks(2)
        .map(|c| clip.clamp(ckpt.norm_stats.denormalize([c[0], c[1]])))
        .collect();
    Ok(degraded.with_positions(positions))
}
