//! Privacy degradation operators (hexagonal snapping, coordinate rounding,
//! Gaussian noise) and z-score normalisation statistics.
//!
//! The hexagonal snapper is a planar pointy-top axial lattice laid over a
//! [`LocalFrame`]. It mimics H3 snap-to-centre behaviour at a configurable
//! edge length; it does not produce H3 indexes.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalFrame, METERS_PER_DEG_LAT};
use crate::seed;
use crate::trajectory::Trajectory;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Lower bound applied to every normalisation standard deviation.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexGrid {
    pub frame: LocalFrame,
    pub edge_len_m: f64,
}

/// Axial hex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub q: i64,
    pub r: i64,
}

impl HexGrid {
    pub fn new(frame: LocalFrame, edge_len_m: f64) -> Result<Self> {
        if !(edge_len_m > 0.0 && edge_len_m.is_finite()) {
            return Err(Error::invalid(format!(
                "hex edge length must be > 0, got {edge_len_m}"
            )));
        }
        Ok(HexGrid { frame, edge_len_m })
    }

    /// Grid at an H3-like resolution level.
    pub fn at_resolution(frame: LocalFrame, level: u8) -> Result<Self> {
        Self::new(frame, resolution_edge_len(level)?)
    }

    pub fn cell_center_local(&self, c: CellId) -> (f64, f64) {
        let e = self.edge_len_m;
        (
            e * SQRT3 * (c.q as f64 + c.r as f64 / 2.0),
            e * 1.5 * c.r as f64,
        )
    }

    pub fn cell_center(&self, c: CellId) -> GeoPoint {
        let (x, y) = self.cell_center_local(c);
        self.frame.from_local(x, y)
    }

    pub fn cell_of_local(&self, x: f64, y: f64) -> CellId {
        let e = self.edge_len_m;
        let qf = (SQRT3 / 3.0 * x - y / 3.0) / e;
        let rf = (2.0 / 3.0 * y) / e;
        cube_round(qf, rf)
    }

    pub fn hex_cell_of(&self, p: GeoPoint) -> CellId {
        let (x, y) = self.frame.to_local(p);
        self.cell_of_local(x, y)
    }

    /// Replace every point with its cell centre; timestamps untouched.
    pub fn truncate_trajectory(&self, traj: &Trajectory) -> Trajectory {
        traj.with_positions(
            traj.positions()
                .map(|p| self.cell_center(self.hex_cell_of(p))),
        )
    }
}

/// Standard cube-coordinate rounding of fractional axial coordinates.
fn cube_round(qf: f64, rf: f64) -> CellId {
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    CellId {
        q: q as i64,
        r: r as i64,
    }
}

/// Approximate average H3 hexagon edge length (metres) per resolution.
pub fn resolution_edge_len(level: u8) -> Result<f64> {
    match level {
        5 => Ok(8540.0),
        6 => Ok(3230.0),
        7 => Ok(1220.0),
        8 => Ok(461.0),
        9 => Ok(174.0),
        _ => Err(Error::invalid(format!(
            "unsupported hex resolution {level} (expected 5..=9)"
        ))),
    }
}

/// Round latitude and longitude half away from zero.
pub fn round_coords(traj: &Trajectory, decimals: u32) -> Result<Trajectory> {
    if decimals > 9 {
        return Err(Error::invalid(format!(
            "decimals must be in 0..=9, got {decimals}"
        )));
    }
    let scale = 10f64.powi(decimals as i32);
    let r = |v: f64| (v * scale).round() / scale;
    Ok(traj.with_positions(traj.positions().map(|p| GeoPoint {
        lat: r(p.lat),
        lon: r(p.lon),
    })))
}

/// Isotropic Gaussian offsets of `sigma_m` metres, east/north at each point.
pub fn add_noise(traj: &Trajectory, sigma_m: f64, seed: u64) -> Result<Trajectory> {
    if !(sigma_m >= 0.0 && sigma_m.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma_m must be >= 0, got {sigma_m}"
        )));
    }
    if sigma_m == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, sigma_m).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seed::rng_for(seed, &format!("noise/{}", traj.id));
    Ok(traj.with_positions(
        traj.positions()
            .map(|p| {
                let dx = normal.sample(&mut rng);
                let dy = normal.sample(&mut rng);
                let m_lon = METERS_PER_DEG_LAT * p.lat.to_radians().cos();
                GeoPoint {
                    lat: p.lat + dy / METERS_PER_DEG_LAT,
                    lon: p.lon + dx / m_lon,
                }
            })
            .collect::<Vec<_>>(),
    ))
}

/// Configured degradation operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    Hex(HexGrid),
    Round { decimals: u32 },
    Noise { sigma_m: f64, seed: u64 },
}

impl Degradation {
    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        match *self {
            Degradation::Hex(grid) => Ok(grid.truncate_trajectory(traj)),
            Degradation::Round { decimals } => round_coords(traj, decimals),
            Degradation::Noise { sigma_m, seed } => add_noise(traj, sigma_m, seed),
        }
    }
}

/// Per-channel z-score statistics fitted on training trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_lat: f64,
    pub std_lat: f64,
    pub mean_lon: f64,
    pub std_lon: f64,
    pub mean_t: f64,
    pub std_t: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, channel: &str) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        log::warn!("normalisation channel {channel} is constant; std floored at {STD_FLOOR}");
        (mean, STD_FLOOR)
    } else {
        (mean, std)
    }
}

impl NormStats {
    pub fn fit(trajs: &[Trajectory]) -> Result<Self> {
        let pts = || trajs.iter().flat_map(|t| t.points.iter());
        if pts().count() < 2 {
            return Err(Error::invalid("normalisation needs at least 2 points"));
        }
        let (mean_lat, std_lat) = mean_std(pts().map(|p| p.pos.lat), "lat");
        let (mean_lon, std_lon) = mean_std(pts().map(|p| p.pos.lon), "lon");
        let (mean_t, std_t) = mean_std(pts().map(|p| p.t), "t");
        Ok(NormStats {
            mean_lat,
            std_lat,
            mean_lon,
            std_lon,
            mean_t,
            std_t,
        })
    }

    /// `(lat̂, lon̂, t̂)` per point.
    pub fn normalize(&self, traj: &Trajectory) -> Vec<[f64; 3]> {
        traj.points
            .iter()
            .map(|p| {
                [
                    (p.pos.lat - self.mean_lat) / self.std_lat,
                    (p.pos.lon - self.mean_lon) / self.std_lon,
                    (p.t - self.mean_t) / self.std_t,
                ]
            })
            .collect()
    }

    pub fn normalize_point(&self, p: GeoPoint) -> [f64; 2] {
        [
            (p.lat - self.mean_lat) / self.std_lat,
            (p.lon - self.mean_lon) / self.std_lon,
        ]
    }

    pub fn denormalize(&self, value: [f64; 2]) -> GeoPoint {
        GeoPoint {
            lat: value[0] * self.std_lat + self.mean_lat,
            lon: value[1] * self.std_lon + self.mean_lon,
        }
    }
}
