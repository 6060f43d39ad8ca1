//! Undirected road graph over intersections with haversine edge weights.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_km_unchecked, BBox, GeoPoint, LocalFrame};
use crate::trajectory::Trajectory;

/// Edges shorter than this are treated as coincident endpoints.
pub const MIN_EDGE_KM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Undirected edge, endpoints stored as dense node indices with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight_km: f64,
}

#[derive(Debug, Clone)]
pub struct RoadGraph {
    ids: Vec<NodeId>,
    coords: Vec<GeoPoint>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    /// node index -> (neighbour index, edge index)
    adjacency: Vec<Vec<(usize, usize)>>,
    frame: Option<LocalFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: u64,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    u: u64,
    v: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl RoadGraph {
    /// Build a graph from nodes and undirected edges. Edge weights are always
    /// derived from node coordinates.
    pub fn new(
        nodes: impl IntoIterator<Item = (NodeId, GeoPoint)>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        let mut sorted: Vec<(NodeId, GeoPoint)> = nodes.into_iter().collect();
        sorted.sort_by_key(|(id, _)| *id);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Load(format!("duplicate node id {}", w[0].0)));
            }
        }
        for (id, p) in &sorted {
            p.validate()
                .map_err(|e| Error::Load(format!("node {id}: {e}")))?;
        }
        let ids: Vec<NodeId> = sorted.iter().map(|(id, _)| *id).collect();
        let coords: Vec<GeoPoint> = sorted.iter().map(|(_, p)| *p).collect();
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

        let mut seen = BTreeMap::new();
        for (u, v) in edges {
            let iu = *index
                .get(&u)
                .ok_or_else(|| Error::Load(format!("dangling endpoint {u}")))?;
            let iv = *index
                .get(&v)
                .ok_or_else(|| Error::Load(format!("dangling endpoint {v}")))?;
            if iu == iv {
                return Err(Error::Load(format!("self-loop on node {u}")));
            }
            let (a, b) = if iu < iv { (iu, iv) } else { (iv, iu) };
            let w = haversine_km_unchecked(coords[a], coords[b]);
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Load(format!(
                    "edge {u}-{v} has non-positive length (coincident endpoints)"
                )));
            }
            seen.entry((a, b)).or_insert(w);
        }
        let edges: Vec<Edge> = seen
            .into_iter()
            .map(|((a, b), weight_km)| Edge { a, b, weight_km })
            .collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        for (ei, e) in edges.iter().enumerate() {
            adjacency[e.a].push((e.b, ei));
            adjacency[e.b].push((e.a, ei));
        }
        let frame = match BBox::enclosing(coords.iter().copied()) {
            Some(bb) => Some(LocalFrame::at(bb.centroid())?),
            None => None,
        };
        Ok(RoadGraph {
            ids,
            coords,
            index,
            edges,
            adjacency,
            frame,
        })
    }

    /// Parse the graph-JSON document format.
    pub fn load_json<R: Read>(source: R) -> Result<Self> {
        let doc: GraphDoc =
            serde_json::from_reader(source).map_err(|e| Error::Load(e.to_string()))?;
        Self::new(
            doc.nodes.into_iter().map(|n| {
                (
                    NodeId(n.id),
                    GeoPoint {
                        lat: n.lat,
                        lon: n.lon,
                    },
                )
            }),
            doc.edges.into_iter().map(|e| (NodeId(e.u), NodeId(e.v))),
        )
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load_json(std::io::BufReader::new(file))
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDoc {
            nodes: self
                .ids
                .iter()
                .zip(&self.coords)
                .map(|(id, p)| NodeRecord {
                    id: id.0,
                    lat: p.lat,
                    lon: p.lon,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    u: self.ids[e.a].0,
                    v: self.ids[e.b].0,
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("graph serializes")
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Node ids in ascending order; position equals the dense index.
    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn coords(&self) -> &[GeoPoint] {
        &self.coords
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, idx: usize) -> &[(usize, usize)] {
        &self.adjacency[idx]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id_at(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn point(&self, id: NodeId) -> Option<GeoPoint> {
        self.index_of(id).map(|i| self.coords[i])
    }

    /// Local frame centred on the node bounding box (None for an empty graph).
    pub fn frame(&self) -> Option<&LocalFrame> {
        self.frame.as_ref()
    }

    pub fn bbox(&self) -> Option<BBox> {
        BBox::enclosing(self.coords.iter().copied())
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<&Edge> {
        let (iu, iv) = (self.index_of(u)?, self.index_of(v)?);
        self.adjacency[iu]
            .iter()
            .find(|(n, _)| *n == iv)
            .map(|(_, ei)| &self.edges[*ei])
    }

    /// Dijkstra from one dense index. Returns distances (km, `INFINITY` when
    /// unreachable) and predecessors.
    pub fn dijkstra(&self, source: usize, target: Option<usize>) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.ids.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        // Equal tentative distances pop in ascending NodeId order because
        // dense indices follow NodeId order.
        heap.push(Reverse((Dist(0.0), source)));
        while let Some(Reverse((Dist(d), u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if Some(u) == target {
                break;
            }
            for &(v, ei) in &self.adjacency[u] {
                if done[v] {
                    continue;
                }
                let nd = d + self.edges[ei].weight_km;
                let better = nd < dist[v] || (nd == dist[v] && prev[v].is_some_and(|p| u < p));
                if better {
                    dist[v] = nd;
                    prev[v] = Some(u);
                    heap.push(Reverse((Dist(nd), v)));
                }
            }
        }
        (dist, prev)
    }

    /// Minimum-weight path from `u` to `v`, inclusive of both endpoints.
    pub fn shortest_path(&self, u: NodeId, v: NodeId) -> Result<Vec<NodeId>> {
        let iu = self.index_of(u).ok_or(Error::NodeNotFound(u.0))?;
        let iv = self.index_of(v).ok_or(Error::NodeNotFound(v.0))?;
        if iu == iv {
            return Ok(vec![u]);
        }
        let (dist, prev) = self.dijkstra(iu, Some(iv));
        if !dist[iv].is_finite() {
            return Err(Error::Unreachable { from: u.0, to: v.0 });
        }
        let mut path = vec![iv];
        let mut cur = iv;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path.into_iter().map(|i| self.ids[i]).collect())
    }

    /// Total weight of consecutive hops along `path`.
    pub fn path_length_km(&self, path: &[NodeId]) -> Result<f64> {
        let mut total = 0.0;
        for w in path.windows(2) {
            let e = self.edge_between(w[0], w[1]).ok_or_else(|| {
                Error::invalid(format!("nodes {} and {} are not adjacent", w[0], w[1]))
            })?;
            total += e.weight_km;
        }
        Ok(total)
    }

    /// Restrict to nodes within `radius_km` of any trajectory point.
    pub fn local_subgraph(&self, traj: &Trajectory, radius_km: f64) -> Result<Subgraph> {
        if !(radius_km > 0.0) {
            return Err(Error::invalid(format!(
                "radius_km must be > 0, got {radius_km}"
            )));
        }
        if traj.is_empty() {
            return Err(Error::invalid("empty trajectory"));
        }
        let keep: Vec<usize> = (0..self.ids.len())
            .filter(|&i| {
                traj.points
                    .iter()
                    .any(|tp| haversine_km_unchecked(tp.pos, self.coords[i]) <= radius_km)
            })
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptySubgraph { radius_km });
        }
        let mut kept = vec![false; self.ids.len()];
        for &i in &keep {
            kept[i] = true;
        }
        let graph = RoadGraph::new(
            keep.iter().map(|&i| (self.ids[i], self.coords[i])),
            self.edges
                .iter()
                .filter(|e| kept[e.a] && kept[e.b])
                .map(|e| (self.ids[e.a], self.ids[e.b])),
        )?;
        let index_map = graph
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect();
        Ok(Subgraph { graph, index_map })
    }

    /// Nearest points on every edge within `radius_m`, ascending by distance
    /// and then by endpoint ids.
    pub fn project_to_edges(&self, p: GeoPoint, radius_m: f64) -> Vec<EdgeProjection> {
        let Some(frame) = self.frame else {
            return Vec::new();
        };
        let (px, py) = frame.to_local(p);
        let mut out: Vec<EdgeProjection> = self
            .edges
            .iter()
            .enumerate()
            .filter_map(|(ei, e)| {
                let (ax, ay) = frame.to_local(self.coords[e.a]);
                let (bx, by) = frame.to_local(self.coords[e.b]);
                let (t, qx, qy) = project_on_segment((px, py), (ax, ay), (bx, by));
                let d = (px - qx).hypot(py - qy);
                (d <= radius_m).then(|| EdgeProjection {
                    edge: ei,
                    u: self.ids[e.a],
                    v: self.ids[e.b],
                    fraction: t,
                    point: frame.from_local(qx, qy),
                    distance_m: d,
                })
            })
            .collect();
        out.sort_by(|x, y| {
            x.distance_m
                .total_cmp(&y.distance_m)
                .then((x.u, x.v).cmp(&(y.u, y.v)))
        });
        out
    }
}

/// Clamped projection of `p` onto segment `a`-`b`; returns (fraction, x, y).
pub fn project_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (t, a.0 + t * dx, a.1 + t * dy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeProjection {
    /// Index into [`RoadGraph::edges`].
    pub edge: usize,
    /// Smaller endpoint id.
    pub u: NodeId,
    /// Larger endpoint id.
    pub v: NodeId,
    /// Position along the edge from `u` (0) to `v` (1).
    pub fraction: f64,
    pub point: GeoPoint,
    pub distance_m: f64,
}

#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: RoadGraph,
    /// NodeId -> row index, ascending by NodeId.
    pub index_map: BTreeMap<NodeId, usize>,
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.graph.node_count()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Reciprocal edge lengths (1/km) as a symmetric adjacency matrix.
    pub fn inverse_distance_weights(&self) -> Result<SquareMatrix> {
        let g = &self.graph;
        let mut m = SquareMatrix::zeros(g.node_count());
        for e in &g.edges {
            if e.weight_km < MIN_EDGE_KM {
                return Err(Error::DegenerateEdge {
                    u: g.ids[e.a].0,
                    v: g.ids[e.b].0,
                    length_km: e.weight_km,
                });
            }
            let w = 1.0 / e.weight_km;
            m.set(e.a, e.b, w);
            m.set(e.b, e.a, w);
        }
        Ok(m)
    }
}

/// Regular `rows` x `cols` lattice with `spacing_m` between neighbours,
/// centred on `center`. Node ids are `row * cols + col`.
pub fn grid_graph(center: GeoPoint, rows: usize, cols: usize, spacing_m: f64) -> Result<RoadGraph> {
    if rows == 0 || cols == 0 || !(spacing_m > 0.0) {
        return Err(Error::invalid(
            "grid needs rows, cols >= 1 and spacing_m > 0",
        ));
    }
    let frame = LocalFrame::at(center)?;
    let x0 = -(cols as f64 - 1.0) * spacing_m / 2.0;
    let y0 = -(rows as f64 - 1.0) * spacing_m / 2.0;
    let id = |r: usize, c: usize| NodeId((r * cols + c) as u64);
    let mut nodes = Vec::with_capacity(rows * cols);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let p = frame.from_local(x0 + c as f64 * spacing_m, y0 + r as f64 * spacing_m);
            nodes.push((id(r, c), p));
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    RoadGraph::new(nodes, edges)
}
