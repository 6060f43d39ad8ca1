//! Trajectory distances and evaluation summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_km_unchecked;
use crate::trajectory::Trajectory;

/// Discrete Fréchet distance with haversine point cost, in km.
pub fn discrete_frechet_km(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_non_empty(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let d = haversine_km_unchecked(a.points[i].pos, b.points[j].pos);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d.max(cur[j - 1]),
                (_, 0) => d.max(prev[0]),
                _ => d.max(prev[j].min(cur[j - 1]).min(prev[j - 1])),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Classic DTW with haversine point cost and sum aggregation, in km.
pub fn dtw_km(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_non_empty(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let d = haversine_km_unchecked(a.points[i - 1].pos, b.points[j - 1].pos);
            cur[j] = d + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

fn check_non_empty(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid(format!(
            "distance needs non-empty trajectories ({} has {} points, {} has {})",
            a.id,
            a.len(),
            b.id,
            b.len()
        )));
    }
    Ok(())
}

/// 0 to 2 km in 0.1 km steps, then an overflow bin.
pub fn default_bins() -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=20).map(|k| k as f64 / 10.0).collect();
    edges.push(f64::INFINITY);
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges in km; the last may be infinite (serialized as `null`).
    #[serde(with = "edges_serde")]
    pub edges: Vec<f64>,
    /// `counts[k]` covers `[edges[k], edges[k+1])`.
    pub counts: Vec<usize>,
}

mod edges_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(edges: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Option<f64>> = edges.iter().map(|e| e.is_finite().then_some(*e)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|e| e.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    /// `(trajectory id, Fréchet km)` in input order.
    pub per_trajectory: Vec<(String, f64)>,
    pub mean_km: f64,
    pub median_km: f64,
    pub p85_km: f64,
    pub histogram: Histogram,
}

/// Nearest-rank percentile of an ascending slice, `q` in (0, 100].
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 {
        return Err(Error::invalid("histogram needs at least two bin edges"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1]))
        || edges[..edges.len() - 1].iter().any(|e| !e.is_finite())
    {
        return Err(Error::invalid(
            "bin edges must be strictly increasing and finite except the last",
        ));
    }
    let mut counts = vec![0; edges.len() - 1];
    for &v in values {
        // index of the last edge <= v
        let k = edges.partition_point(|e| *e <= v);
        if k >= 1 && k < edges.len() {
            counts[k - 1] += 1;
        }
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
    })
}

/// Fréchet distance of every `(candidate, reference)` pair plus summary
/// statistics.
pub fn evaluate(
    pairs: &[(Trajectory, Trajectory)],
    bins: &[f64],
    label: &str,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("evaluate needs at least one pair"));
    }
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|(c, r)| discrete_frechet_km(c, r))
        .collect::<Result<_>>()?;
    let hist = histogram(&dists, bins)?;
    let total: usize = hist.counts.iter().sum();
    if total != dists.len() {
        return Err(Error::invalid(format!(
            "{} of {} distances fall outside the histogram range",
            dists.len() - total,
            dists.len()
        )));
    }
    let mut sorted = dists.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EvalReport {
        label: label.to_string(),
        per_trajectory: pairs
            .iter()
            .map(|(c, _)| c.id.clone())
            .zip(dists.iter().copied())
            .collect(),
        mean_km: dists.iter().sum::<f64>() / dists.len() as f64,
        median_km: nearest_rank(&sorted, 50.0),
        p85_km: nearest_rank(&sorted, 85.0),
        histogram: hist,
    })
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "label,mean_km,median_km,p85_km,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{}",
            csv_field(&self.label),
            self.mean_km,
            self.median_km,
            self.p85_km,
            self.per_trajectory.len()
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            context: "eval report".into(),
            message: e.to_string(),
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Markdown table with one row per report.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("| Trajectory | Distance |\n|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {:.3} km |\n",
            r.label.replace('|', "\\|"),
            r.mean_km
        ));
    }
    out
}
