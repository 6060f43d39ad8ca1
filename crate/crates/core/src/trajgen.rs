//! Virtual trajectory generation: random origin/destination nodes, shortest
//! path routing, and constant-speed resampling into timestamped points.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::BBox;
use crate::roadnet::{NodeId, RoadGraph};
use crate::seed;
use crate::trajectory::{TrajPoint, Trajectory};

/// Draws allowed per requested trajectory before giving up.
pub const RETRIES_PER_TRAJECTORY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Sampling region for origins and destinations; the graph's bounding
    /// box when absent.
    pub bbox: Option<BBox>,
    pub n_traj: usize,
    pub speed_mps: f64,
    pub dt_s: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            bbox: None,
            n_traj: 200,
            speed_mps: 8.0,
            dt_s: 15.0,
            max_len: 128,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj < 1 {
            return Err(Error::invalid("n_traj must be >= 1"));
        }
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::invalid("speed_mps must be > 0"));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::invalid("dt_s must be > 0"));
        }
        if self.max_len < 2 {
            return Err(Error::invalid("max_len must be >= 2"));
        }
        Ok(())
    }
}

pub fn trajectory_id(index: usize) -> String {
    format!("traj-{index:06}")
}

/// Generate `cfg.n_traj` trajectories. Trajectory `i` draws from its own
/// RNG stream derived from `(cfg.seed, i)`.
pub fn generate_dataset(g: &RoadGraph, cfg: &GenConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::invalid("road graph is empty"));
    }
    let region = match cfg.bbox {
        Some(b) => b,
        None => g.bbox().expect("non-empty graph has a bbox"),
    };
    let candidates: Vec<NodeId> = g
        .node_ids()
        .iter()
        .zip(g.coords())
        .filter(|(_, p)| region.contains(**p))
        .map(|(id, _)| *id)
        .collect();
    if candidates.len() < 2 {
        return Err(Error::GenerationFailed(format!(
            "only {} graph node(s) inside the sampling bbox",
            candidates.len()
        )));
    }

    let mut out = Vec::with_capacity(cfg.n_traj);
    for index in 0..cfg.n_traj {
        let mut rng = seed::rng_indexed(cfg.seed, "trajgen", index as u64);
        let mut produced = None;
        for _ in 0..RETRIES_PER_TRAJECTORY {
            let a = candidates[rng.gen_range(0..candidates.len())];
            let b = candidates[rng.gen_range(0..candidates.len())];
            if a == b {
                continue;
            }
            let path = match g.shortest_path(a, b) {
                Ok(p) => p,
                Err(Error::Unreachable { .. }) => continue,
                Err(e) => return Err(e),
            };
            let traj = path_to_trajectory(g, &path, cfg.speed_mps, cfg.dt_s, trajectory_id(index))?;
            if (2..=cfg.max_len).contains(&traj.len()) {
                produced = Some(traj);
                break;
            }
        }
        match produced {
            Some(t) => out.push(t),
            None => {
                return Err(Error::GenerationFailed(format!(
                    "retry budget exhausted for trajectory {index} ({} draws)",
                    RETRIES_PER_TRAJECTORY
                )))
            }
        }
    }
    Ok(out)
}

/// Traverse `path` at constant speed, emitting a point every `dt_s` seconds
/// plus the exact arrival point.
pub fn path_to_trajectory(
    g: &RoadGraph,
    path: &[NodeId],
    speed_mps: f64,
    dt_s: f64,
    id: impl Into<String>,
) -> Result<Trajectory> {
    if !(speed_mps > 0.0) || !(dt_s > 0.0) {
        return Err(Error::invalid("speed_mps and dt_s must be > 0"));
    }
    let frame = *g
        .frame()
        .ok_or_else(|| Error::invalid("road graph is empty"))?;
    let mut verts = Vec::with_capacity(path.len());
    for w in path.windows(2) {
        if g.edge_between(w[0], w[1]).is_none() {
            return Err(Error::invalid(format!(
                "nodes {} and {} are not adjacent",
                w[0], w[1]
            )));
        }
    }
    for id in path {
        let p = g.point(*id).ok_or(Error::NodeNotFound(id.0))?;
        verts.push(frame.to_local(p));
    }
    // cumulative arc length at each vertex
    let mut cum = vec![0.0; verts.len()];
    for i in 1..verts.len() {
        let (a, b) = (verts[i - 1], verts[i]);
        cum[i] = cum[i - 1] + (b.0 - a.0).hypot(b.1 - a.1);
    }
    let total = cum.last().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(Error::invalid("path polyline has zero length"));
    }
    let duration = total / speed_mps;
    let eps = 1e-9 * duration.max(1.0);

    let mut points = Vec::new();
    let mut seg = 0;
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt_s;
        if t >= duration - eps {
            break;
        }
        let s = t * speed_mps;
        while seg + 2 < verts.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let frac = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (verts[seg], verts[seg + 1]);
        let pos = frame.from_local(a.0 + frac * (b.0 - a.0), a.1 + frac * (b.1 - a.1));
        points.push(TrajPoint { pos, t });
        k += 1;
    }
    let end = g
        .point(*path.last().expect("non-empty"))
        .expect("checked above");
    points.push(TrajPoint {
        pos: end,
        t: duration,
    });
    Ok(Trajectory::new(id, points))
}

/// Seeded shuffle then contiguous split. Validation and test sizes are
/// floored; the remainder goes to training.
pub fn split_dataset(
    trajs: &[Trajectory],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>, Vec<Trajectory>)> {
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    let n = trajs.len();
    if n < 3 {
        return Err(Error::Split(format!(
            "need at least 3 trajectories, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng_for(seed, "split"));
    let n_val = (n as f64 * va + 1e-9).floor() as usize;
    let n_test = (n as f64 * te + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let pick = |idx: &[usize]| idx.iter().map(|&i| trajs[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}
