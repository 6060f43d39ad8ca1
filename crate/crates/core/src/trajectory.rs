//! Trajectory type and the JSON Lines interchange format.
//!
//! One JSON object per point:
//! `{"traj_id":"...","seq":0,"lat":39.9,"lon":116.4,"t":0.0}` with `seq`
//! counting up from 0 inside each trajectory.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub pos: GeoPoint,
    /// Seconds since trajectory start.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, points: Vec<TrajPoint>) -> Self {
        Trajectory {
            id: id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        self.points.iter().map(|p| p.pos)
    }

    /// Same id and timestamps, new coordinates.
    pub fn with_positions(&self, positions: impl IntoIterator<Item = GeoPoint>) -> Trajectory {
        Trajectory {
            id: self.id.clone(),
            points: self
                .points
                .iter()
                .zip(positions)
                .map(|(p, pos)| TrajPoint { pos, t: p.t })
                .collect(),
        }
    }

    /// Coordinates valid, timestamps finite and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            p.pos
                .validate()
                .map_err(|e| Error::invalid(format!("trajectory {} point {i}: {e}", self.id)))?;
            if !p.t.is_finite() {
                return Err(Error::invalid(format!(
                    "trajectory {} point {i}: non-finite timestamp",
                    self.id
                )));
            }
        }
        if let Some(i) = self.points.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::invalid(format!(
                "trajectory {}: timestamps not strictly increasing at point {}",
                self.id,
                i + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    traj_id: String,
    seq: usize,
    lat: f64,
    lon: f64,
    t: f64,
}

pub fn write_jsonl<W: Write>(mut out: W, trajs: &[Trajectory]) -> std::io::Result<()> {
    for traj in trajs {
        for (seq, p) in traj.points.iter().enumerate() {
            let rec = PointRecord {
                traj_id: traj.id.clone(),
                seq,
                lat: p.pos.lat,
                lon: p.pos.lon,
                t: p.t,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

/// Reads trajectories in order of first appearance of their `traj_id`.
pub fn read_jsonl<R: BufRead>(input: R, context: &str) -> Result<Vec<Trajectory>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(usize, TrajPoint)>> = HashMap::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PointRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{context}:{}", lineno + 1),
            message: e.to_string(),
        })?;
        let entry = groups.entry(rec.traj_id.clone()).or_insert_with(|| {
            order.push(rec.traj_id.clone());
            Vec::new()
        });
        entry.push((
            rec.seq,
            TrajPoint {
                pos: GeoPoint {
                    lat: rec.lat,
                    lon: rec.lon,
                },
                t: rec.t,
            },
        ));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut pts = groups.remove(&id).unwrap_or_default();
        pts.sort_by_key(|(seq, _)| *seq);
        if let Some((k, _)) = pts.iter().enumerate().find(|(k, (seq, _))| k != seq) {
            return Err(Error::Parse {
                context: context.to_string(),
                message: format!(
                    "trajectory {id}: seq values are not 0..n (gap or duplicate at {k})"
                ),
            });
        }
        out.push(Trajectory::new(
            id,
            pts.into_iter().map(|(_, p)| p).collect(),
        ));
    }
    Ok(out)
}

pub fn read_jsonl_path(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_jsonl_path(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(std::io::BufWriter::new(file), trajs).map_err(|e| Error::io(path, e))
}
