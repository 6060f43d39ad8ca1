#![allow(dead_code)]

use std::collections::HashSet;
use trajsr::degrade::add_noise;
use trajsr::geo::{GeoPoint, LocalFrame};

use trajsr::mapmatch::{map_match, map_match_route, HmmParams};
use trajsr::roadnet::{grid_graph, project_on_segment, NodeId, RoadGraph};
use trajsr::trajectory::Trajectory;
use trajsr::trajgen::{generate_dataset, GenConfig};

pub const CENTER: GeoPoint = GeoPoint {
    lat: 39.9,
    lon: 116.4,
};

/// 20 x 20 grid with 200 m spacing.
pub fn desk_graph() -> RoadGraph {
    grid_graph(CENTER, 20, 20, 200.0).unwrap()
}

pub fn desk_trajectories(g: &RoadGraph, n: usize, seed: u64) -> Vec<Trajectory> {
    generate_dataset(
        g,
        &GenConfig {
            n_traj: n,
            seed,
            ..GenConfig::default()
        },
    )
    .unwrap()
}

fn node_at(g: &RoadGraph, p: GeoPoint) -> NodeId {
    let i = g
        .coords()
        .iter()
        .position(|c| *c == p)
        .expect("trajectory endpoint is a graph node");
    g.id_at(i)
}

/// Node path a generated trajectory was sampled from.
pub fn source_path(g: &RoadGraph, t: &Trajectory) -> Vec<NodeId> {
    let a = node_at(g, t.points[0].pos);
    let b = node_at(g, t.points[t.len() - 1].pos);
    g.shortest_path(a, b).unwrap()
}

/// Distance in metres from `p` to the nearest segment of `path`.
pub fn distance_to_path_m(g: &RoadGraph, path: &[NodeId], p: GeoPoint) -> f64 {
    let f: &LocalFrame = g.frame().unwrap();
    let q = f.to_local(p);
    path.windows(2)
        .map(|w| {
            let a = f.to_local(g.point(w[0]).unwrap());
            let b = f.to_local(g.point(w[1]).unwrap());
            let (_, x, y) = project_on_segment(q, a, b);
            (q.0 - x).hypot(q.1 - y)
        })
        .fold(f64::INFINITY, f64::min)
}

pub struct NoisyMatch {
    /// Share of ground-truth edges present in the matched routes.
    pub edge_recall: f64,
    /// Share of matched points lying on a ground-truth edge.
    pub point_accuracy: f64,
}

/// Map-match noisy copies of `trajs` and score them against the paths they
/// were generated from.
pub fn noisy_match_scores(
    g: &RoadGraph,
    trajs: &[Trajectory],
    sigma_m: f64,
    seed: u64,
) -> NoisyMatch {
    let params = HmmParams {
        sigma_m: 10.0,
        beta_m: 200.0,
        ..HmmParams::default()
    };
    let (mut hit, mut total) = (0usize, 0usize);
    let (mut found, mut edges) = (0usize, 0usize);
    for t in trajs {
        let path = source_path(g, t);
        let noisy = add_noise(t, sigma_m, seed).unwrap();
        let m = map_match_route(g, &noisy, &params).unwrap();
        for p in m.trajectory.positions() {
            total += 1;
            if distance_to_path_m(g, &path, p) < 1e-6 {
                hit += 1;
            }
        }
        let matched: HashSet<(NodeId, NodeId)> = m.route.into_iter().collect();
        for w in path.windows(2) {
            edges += 1;
            if matched.contains(&(w[0].min(w[1]), w[0].max(w[1]))) {
                found += 1;
            }
        }
    }
    NoisyMatch {
        edge_recall: found as f64 / edges as f64,
        point_accuracy: hit as f64 / total as f64,
    }
}

/// Largest displacement in metres when map matching noiseless input.
pub fn noiseless_match_max_shift_m(g: &RoadGraph, trajs: &[Trajectory]) -> f64 {
    let f = *g.frame().unwrap();
    let mut worst: f64 = 0.0;
    for t in trajs {
        let m = map_match(g, t, &HmmParams::default()).unwrap();
        for (a, b) in m.positions().zip(t.positions()) {
            worst = worst.max(f.distance_m(a, b));
        }
    }
    worst
}
