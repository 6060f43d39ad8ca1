//! HMM map matching with Gaussian emissions and exponential transitions on
//! the gap between route distance and great-circle distance.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_km_unchecked;
use crate::roadnet::{EdgeProjection, NodeId, RoadGraph};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmParams {
    /// Emission standard deviation, metres.
    pub sigma_m: f64,
    /// Transition scale, metres.
    pub beta_m: f64,
    pub candidate_radius_m: f64,
    pub max_candidates: usize,
}

impl Default for HmmParams {
    fn default() -> Self {
        HmmParams {
            sigma_m: 10.0,
            beta_m: 200.0,
            candidate_radius_m: 1000.0,
            max_candidates: 8,
        }
    }
}

impl HmmParams {
    /// Defaults with the search radius set to twice the hex edge length.
    pub fn for_hex_edge(edge_len_m: f64) -> Self {
        HmmParams {
            candidate_radius_m: 2.0 * edge_len_m,
            ..HmmParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.sigma_m)
            || !ok(self.beta_m)
            || !ok(self.candidate_radius_m)
            || self.max_candidates == 0
        {
            return Err(Error::Config(format!(
                "HMM parameters must be positive (sigma_m {}, beta_m {}, candidate_radius_m {}, max_candidates {})",
                self.sigma_m, self.beta_m, self.candidate_radius_m, self.max_candidates
            )));
        }
        Ok(())
    }
}

type Tree = (Vec<f64>, Vec<Option<usize>>);

/// Shortest-path trees from graph nodes, computed on demand.
struct RouteCache<'a> {
    g: &'a RoadGraph,
    from: HashMap<usize, Tree>,
}

impl<'a> RouteCache<'a> {
    fn tree(&mut self, a: usize) -> &Tree {
        let g = self.g;
        self.from.entry(a).or_insert_with(|| g.dijkstra(a, None))
    }

    /// Network distance in km between two projections, with the endpoint
    /// pair the best route leaves and enters through (`None` on a shared
    /// edge).
    fn route(&mut self, x: &EdgeProjection, y: &EdgeProjection) -> (f64, Option<(usize, usize)>) {
        let ex = self.g.edges()[x.edge];
        let ey = self.g.edges()[y.edge];
        if x.edge == y.edge {
            return ((y.fraction - x.fraction).abs() * ex.weight_km, None);
        }
        let xs = [
            (ex.a, x.fraction * ex.weight_km),
            (ex.b, (1.0 - x.fraction) * ex.weight_km),
        ];
        let ys = [
            (ey.a, y.fraction * ey.weight_km),
            (ey.b, (1.0 - y.fraction) * ey.weight_km),
        ];
        let mut best = (f64::INFINITY, None);
        for (nx, ox) in xs {
            for (ny, oy) in ys {
                let d = ox + self.tree(nx).0[ny] + oy;
                if d < best.0 {
                    best = (d, Some((nx, ny)));
                }
            }
        }
        best
    }

    fn route_km(&mut self, x: &EdgeProjection, y: &EdgeProjection) -> f64 {
        self.route(x, y).0
    }

    /// Dense node indices from `a` to `b` inclusive.
    fn node_path(&mut self, a: usize, b: usize) -> Vec<usize> {
        let prev = &self.tree(a).1;
        let mut path = vec![b];
        let mut cur = b;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

/// Matched positions plus the road edges the matched route traverses.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub trajectory: Trajectory,
    /// Traversed edges in order as `(smaller id, larger id)`, without
    /// consecutive repeats.
    pub route: Vec<(NodeId, NodeId)>,
}

/// Candidate projections for each point, nearest first.
pub fn candidates(
    g: &RoadGraph,
    traj: &Trajectory,
    p: &HmmParams,
) -> Result<Vec<Vec<EdgeProjection>>> {
    traj.positions()
        .enumerate()
        .map(|(i, pos)| {
            let mut c = g.project_to_edges(pos, p.candidate_radius_m);
            if c.is_empty() {
                return Err(Error::UnmatchedPoint { index: i });
            }
            c.truncate(p.max_candidates);
            Ok(c)
        })
        .collect()
}

/// Most likely sequence of on-road positions for `traj`. Output keeps the
/// input's id, length and timestamps.
pub fn map_match(g: &RoadGraph, traj: &Trajectory, p: &HmmParams) -> Result<Trajectory> {
    map_match_route(g, traj, p).map(|m| m.trajectory)
}

/// As [`map_match`], also returning the traversed route.
pub fn map_match_route(g: &RoadGraph, traj: &Trajectory, p: &HmmParams) -> Result<MatchResult> {
    p.validate()?;
    if traj.is_empty() {
        return Err(Error::invalid(format!("trajectory {} is empty", traj.id)));
    }
    if g.is_empty() {
        return Err(Error::invalid("road graph is empty"));
    }
    let cands = candidates(g, traj, p)?;
    let emission =
        |c: &EdgeProjection| -(c.distance_m * c.distance_m) / (2.0 * p.sigma_m * p.sigma_m);
    let mut cache = RouteCache {
        g,
        from: HashMap::new(),
    };

    let mut score: Vec<f64> = cands[0].iter().map(emission).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(traj.len());
    back.push(vec![0; cands[0].len()]);
    for i in 1..cands.len() {
        let gc_km = haversine_km_unchecked(traj.points[i - 1].pos, traj.points[i].pos);
        let mut next = Vec::with_capacity(cands[i].len());
        let mut ptr = Vec::with_capacity(cands[i].len());
        for c in &cands[i] {
            let mut best = (f64::NEG_INFINITY, 0);
            for (k, prev) in cands[i - 1].iter().enumerate() {
                if score[k] == f64::NEG_INFINITY {
                    continue;
                }
                let route = cache.route_km(prev, c);
                if !route.is_finite() {
                    continue;
                }
                let s = score[k] - (route - gc_km).abs() * 1000.0 / p.beta_m;
                if s > best.0 {
                    best = (s, k);
                }
            }
            next.push(best.0 + emission(c));
            ptr.push(best.1);
        }
        if next.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(Error::BrokenChain { index: i });
        }
        score = next;
        back.push(ptr);
    }

    let mut k = 0;
    for (j, s) in score.iter().enumerate() {
        if *s > score[k] {
            k = j;
        }
    }
    let mut picks = vec![0; cands.len()];
    for i in (0..cands.len()).rev() {
        picks[i] = k;
        k = back[i][k];
    }
    let chosen: Vec<&EdgeProjection> = picks
        .iter()
        .enumerate()
        .map(|(i, &k)| &cands[i][k])
        .collect();

    let edge_key = |a: usize, b: usize| {
        let (x, y) = (g.id_at(a), g.id_at(b));
        if x < y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let mut route: Vec<(NodeId, NodeId)> = Vec::new();
    let mut push = |e: (NodeId, NodeId)| {
        if route.last() != Some(&e) {
            route.push(e);
        }
    };
    // A projection sitting on an edge endpoint does not traverse that edge.
    let push_own = |c: &EdgeProjection, push: &mut dyn FnMut((NodeId, NodeId))| {
        if c.fraction > 0.0 && c.fraction < 1.0 {
            let e = g.edges()[c.edge];
            push(edge_key(e.a, e.b));
        }
    };
    push_own(chosen[0], &mut push);
    for w in chosen.windows(2) {
        if let (_, Some((nx, ny))) = cache.route(w[0], w[1]) {
            let nodes = cache.node_path(nx, ny);
            for h in nodes.windows(2) {
                push(edge_key(h[0], h[1]));
            }
        }
        push_own(w[1], &mut push);
    }
    Ok(MatchResult {
        trajectory: traj.with_positions(chosen.iter().map(|c| c.point).collect::<Vec<_>>()),
        route,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::roadnet::{grid_graph, NodeId};
    use crate::trajectory::TrajPoint;

    fn grid() -> RoadGraph {
        grid_graph(
            GeoPoint {
                lat: 39.9,
                lon: 116.4,
            },
            4,
            4,
            200.0,
        )
        .unwrap()
    }

    fn traj(pts: &[GeoPoint]) -> Trajectory {
        Trajectory::new(
            "m",
            pts.iter()
                .enumerate()
                .map(|(i, &pos)| TrajPoint {
                    pos,
                    t: 10.0 * i as f64,
                })
                .collect(),
        )
    }

    fn lerp(a: GeoPoint, b: GeoPoint, t: f64) -> GeoPoint {
        GeoPoint {
            lat: a.lat + (b.lat - a.lat) * t,
            lon: a.lon + (b.lon - a.lon) * t,
        }
    }

    #[test]
    fn points_on_one_edge_unchanged() {
        let g = grid();
        let (a, b) = (g.point(NodeId(5)).unwrap(), g.point(NodeId(6)).unwrap());
        let input = traj(&[lerp(a, b, 0.2), lerp(a, b, 0.5), lerp(a, b, 0.8)]);
        let out = map_match(&g, &input, &HmmParams::default()).unwrap();
        let frame = g.frame().unwrap();
        for (x, y) in out.points.iter().zip(&input.points) {
            assert!(frame.distance_m(x.pos, y.pos) < 1e-6);
            assert_eq!(x.t, y.t);
        }
        assert_eq!(out.id, input.id);
    }

    #[test]
    fn single_point_takes_nearest_projection() {
        let g = grid();
        let a = g.point(NodeId(0)).unwrap();
        let b = g.point(NodeId(1)).unwrap();
        let mut p = lerp(a, b, 0.3);
        p.lat += 30.0 / crate::geo::METERS_PER_DEG_LAT;
        let out = map_match(&g, &traj(&[p]), &HmmParams::default()).unwrap();
        let nearest = g.project_to_edges(p, 1000.0)[0].point;
        assert_eq!(out.points[0].pos, nearest);
    }

    #[test]
    fn unmatched_point_is_reported() {
        let g = grid();
        let a = g.point(NodeId(0)).unwrap();
        let far = GeoPoint {
            lat: a.lat - 0.5,
            lon: a.lon,
        };
        let err = map_match(&g, &traj(&[a, far]), &HmmParams::default()).unwrap_err();
        assert!(matches!(err, Error::UnmatchedPoint { index: 1 }));
    }

    #[test]
    fn disconnected_components_break_the_chain() {
        let c = GeoPoint {
            lat: 39.9,
            lon: 116.4,
        };
        let d = GeoPoint {
            lat: 39.9,
            lon: 116.41,
        };
        let off = |p: GeoPoint| GeoPoint {
            lat: p.lat + 0.001,
            lon: p.lon,
        };
        let g = RoadGraph::new(
            [
                (NodeId(1), c),
                (NodeId(2), off(c)),
                (NodeId(3), d),
                (NodeId(4), off(d)),
            ],
            [(NodeId(1), NodeId(2)), (NodeId(3), NodeId(4))],
        )
        .unwrap();
        let params = HmmParams {
            candidate_radius_m: 50.0,
            ..HmmParams::default()
        };
        let err = map_match(&g, &traj(&[c, d]), &params).unwrap_err();
        assert!(matches!(err, Error::BrokenChain { index: 1 }));
    }

    #[test]
    fn route_follows_the_network() {
        let g = grid();
        let (a, b, c) = (
            g.point(NodeId(0)).unwrap(),
            g.point(NodeId(1)).unwrap(),
            g.point(NodeId(3)).unwrap(),
        );
        // along the bottom row from near node 0 to near node 3
        let input = traj(&[lerp(a, b, 0.5), lerp(b, c, 0.75)]);
        let m = map_match_route(&g, &input, &HmmParams::default()).unwrap();
        assert_eq!(
            m.route,
            vec![
                (NodeId(0), NodeId(1)),
                (NodeId(1), NodeId(2)),
                (NodeId(2), NodeId(3))
            ]
        );
    }

    #[test]
    fn bad_params_rejected() {
        let g = grid();
        let p = HmmParams {
            max_candidates: 0,
            ..HmmParams::default()
        };
        assert!(matches!(
            map_match(&g, &traj(&[g.coords()[0]]), &p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn same_edge_route_uses_offsets() {
        let g = grid();
        let (a, b) = (g.point(NodeId(0)).unwrap(), g.point(NodeId(1)).unwrap());
        let x = g.project_to_edges(lerp(a, b, 0.25), 1.0)[0];
        let y = g.project_to_edges(lerp(a, b, 0.75), 1.0)[0];
        let mut cache = RouteCache {
            g: &g,
            from: HashMap::new(),
        };
        let w = g.edges()[x.edge].weight_km;
        assert!((cache.route_km(&x, &y) - 0.5 * w).abs() < 1e-9);
        assert!((cache.route_km(&y, &x) - 0.5 * w).abs() < 1e-9);
    }
}
