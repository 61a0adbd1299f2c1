//! Planar road graphs: lifting skeletons to graphs, merging nearby nodes
//! and removing near-collinear degree-2 nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AffineTransform, LineString, Point2};
use crate::raster::{Mask, NEIGHBORS_8};

pub type NodeId = u64;

/// Default smoothness threshold, cos 15 degrees.
pub const DEFAULT_C_TR: f64 = 0.966;
pub const DEFAULT_MERGE_EPS_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoadClass {
    RoadP,
    RoadS,
}

impl RoadClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoadClass::RoadP => "RoadP",
            RoadClass::RoadS => "RoadS",
        }
    }
}

impl fmt::Display for RoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoadClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RoadP" => Ok(RoadClass::RoadP),
            "RoadS" => Ok(RoadClass::RoadS),
            other => Err(Error::format("class", format!("unknown road class `{other}`"))),
        }
    }
}

/// An undirected edge stored with `u < v` and geometry running from `u` to `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub class: RoadClass,
    pub geometry: LineString,
}

impl Edge {
    pub fn length(&self) -> f64 {
        self.geometry.length()
    }

    /// Geometry oriented to start at `from`.
    pub fn geometry_from(&self, from: NodeId) -> LineString {
        if from == self.u {
            self.geometry.clone()
        } else {
            self.geometry.reversed()
        }
    }

    pub fn other(&self, id: NodeId) -> NodeId {
        if id == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Vector from node `from` to its neighbor `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeVector {
    pub from: NodeId,
    pub to: NodeId,
    pub dx: f64,
    pub dy: f64,
}

impl EdgeVector {
    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Cosine of the angle between two vectors.
    pub fn cos_angle(&self, other: &EdgeVector) -> f64 {
        (self.dx * other.dx + self.dy * other.dy) / (self.norm() * other.norm())
    }
}

/// Simple undirected graph embedded in the plane.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoadGraph {
    nodes: BTreeMap<NodeId, Point2>,
    edges: BTreeMap<(NodeId, NodeId), Edge>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl RoadGraph {
    pub fn new() -> Self {
        RoadGraph::default()
    }

    pub fn add_node(&mut self, id: NodeId, p: Point2) {
        self.nodes.insert(id, p);
        self.adjacency.entry(id).or_default();
    }

    /// Adds an edge whose geometry joins the two node positions (either
    /// direction). End points are snapped to the node coordinates.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId, class: RoadClass, geometry: LineString) -> Result<()> {
        let pa = *self
            .nodes
            .get(&a)
            .ok_or_else(|| Error::format("edges.u", format!("unknown node {a}")))?;
        let pb = *self
            .nodes
            .get(&b)
            .ok_or_else(|| Error::format("edges.v", format!("unknown node {b}")))?;
        if a == b {
            return Err(Error::format("edges", format!("self-loop on node {a}")));
        }
        let k = key(a, b);
        if self.edges.contains_key(&k) {
            return Err(Error::format("edges", format!("duplicate edge {a}-{b}")));
        }
        let close = |p: Point2, q: Point2| p.distance(&q) <= 1e-6 * p.x.abs().max(p.y.abs()).max(1.0);
        let geometry = if close(geometry.first(), pa) && close(geometry.last(), pb) {
            geometry
        } else if close(geometry.first(), pb) && close(geometry.last(), pa) {
            geometry.reversed()
        } else {
            return Err(Error::format(
                "edges.geometry",
                format!("geometry of edge {a}-{b} does not join its nodes"),
            ));
        };
        let mut pts = geometry.into_points();
        let n = pts.len();
        pts[0] = pa;
        pts[n - 1] = pb;
        let mut geometry = LineString::new(pts)?;
        if a > b {
            geometry = geometry.reversed();
        }
        self.edges.insert(
            k,
            Edge {
                u: k.0,
                v: k.1,
                class,
                geometry,
            },
        );
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
        Ok(())
    }

    /// Adds a straight two-point edge between existing nodes.
    pub fn add_straight_edge(&mut self, a: NodeId, b: NodeId, class: RoadClass) -> Result<()> {
        let (pa, pb) = (self.position(a)?, self.position(b)?);
        self.add_edge(a, b, class, LineString::new(vec![pa, pb])?)
    }

    pub fn remove_edge(&mut self, a: NodeId, b: NodeId) -> Option<Edge> {
        let e = self.edges.remove(&key(a, b))?;
        if let Some(s) = self.adjacency.get_mut(&a) {
            s.remove(&b);
        }
        if let Some(s) = self.adjacency.get_mut(&b) {
            s.remove(&a);
        }
        Some(e)
    }

    pub fn remove_node(&mut self, id: NodeId) {
        if let Some(nbrs) = self.adjacency.remove(&id) {
            for n in nbrs {
                self.edges.remove(&key(id, n));
                if let Some(s) = self.adjacency.get_mut(&n) {
                    s.remove(&id);
                }
            }
        }
        self.nodes.remove(&id);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Point2)> + '_ {
        self.nodes.iter().map(|(k, v)| (*k, *v))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.values()
    }

    pub fn position(&self, id: NodeId) -> Result<Point2> {
        self.nodes
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown node {id}")))
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn edge(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        self.edges.get(&key(a, b))
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains_key(&key(a, b))
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, |s| s.len())
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn edge_vector(&self, from: NodeId, to: NodeId) -> Result<EdgeVector> {
        let (a, b) = (self.position(from)?, self.position(to)?);
        Ok(EdgeVector {
            from,
            to,
            dx: b.x - a.x,
            dy: b.y - a.y,
        })
    }

    pub fn total_length(&self) -> f64 {
        self.edges.values().map(Edge::length).sum()
    }

    pub fn set_edge_class(&mut self, a: NodeId, b: NodeId, class: RoadClass) {
        if let Some(e) = self.edges.get_mut(&key(a, b)) {
            e.class = class;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub total_length_m: f64,
    pub node_count: usize,
    pub edge_count: usize,
}

pub fn graph_stats(g: &RoadGraph) -> GraphStats {
    GraphStats {
        total_length_m: g.total_length(),
        node_count: g.node_count(),
        edge_count: g.edge_count(),
    }
}

struct SkeletonBuilder<'a> {
    mask: &'a Mask,
    transform: &'a AffineTransform,
    class: RoadClass,
    /// Node id owning each node pixel.
    node_of: Vec<Option<NodeId>>,
    visited: Vec<bool>,
    graph: RoadGraph,
}

impl SkeletonBuilder<'_> {
    fn pixel_of(&self, i: usize) -> (usize, usize) {
        (i % self.mask.width(), i / self.mask.width())
    }

    fn center(&self, i: usize) -> Point2 {
        let (c, r) = self.pixel_of(i);
        self.transform.pixel_center(c, r)
    }

    fn is_node(&self, i: usize) -> bool {
        self.node_of[i].is_some()
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.pixel_of(i);
        let w = self.mask.width();
        NEIGHBORS_8.iter().filter_map(move |(dc, dr)| {
            let (nc, nr) = (c as isize + dc, r as isize + dr);
            self.mask.get_signed(nc, nr).then(|| nr as usize * w + nc as usize)
        })
    }

    /// Registers a cluster of node pixels as one node at their centroid.
    fn make_node(&mut self, pixels: &[usize]) {
        let id = *pixels.iter().min().unwrap() as NodeId;
        let n = pixels.len() as f64;
        let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(x, y), &i| {
            let p = self.center(i);
            (x + p.x, y + p.y)
        });
        for &i in pixels {
            self.node_of[i] = Some(id);
        }
        self.graph.add_node(id, Point2::new(sx / n, sy / n));
    }

    /// Adds an edge along a pixel chain whose ends are node pixels. Chains
    /// that would duplicate an existing edge or close on their own node are
    /// split at their middle pixel.
    fn add_chain(&mut self, chain: &[usize]) {
        let a = self.node_of[chain[0]].expect("chain starts at a node");
        let b = self.node_of[chain[chain.len() - 1]].expect("chain ends at a node");
        if a == b || self.graph.has_edge(a, b) {
            if chain.len() <= 2 {
                return;
            }
            let mid = chain.len() / 2;
            self.make_node(&[chain[mid]]);
            self.add_chain(&chain[..=mid]);
            self.add_chain(&chain[mid..]);
            return;
        }
        let mut pts = Vec::with_capacity(chain.len());
        pts.push(self.graph.nodes[&a]);
        pts.extend(chain[1..chain.len() - 1].iter().map(|&i| self.center(i)));
        pts.push(self.graph.nodes[&b]);
        let Ok(geometry) = LineString::new(pts) else {
            return;
        };
        self.graph
            .add_edge(a, b, self.class, geometry)
            .expect("chain endpoints are nodes");
    }

    fn walk(&mut self, start: usize, first: usize) -> Vec<usize> {
        let mut chain = vec![start, first];
        self.visited[first] = true;
        let (mut prev, mut cur) = (start, first);
        loop {
            let next = self
                .neighbors(cur)
                .find(|&n| n != prev && (self.is_node(n) || !self.visited[n]));
            match next {
                Some(n) => {
                    chain.push(n);
                    if self.is_node(n) {
                        return chain;
                    }
                    self.visited[n] = true;
                    prev = cur;
                    cur = n;
                }
                None => return chain,
            }
        }
    }
}

/// Converts a one-pixel-wide skeleton into a graph.
///
/// Pixels whose 8-neighbor count is not 2 are node pixels; each
/// 8-connected cluster of node pixels is one node placed at the cluster
/// centroid. Chains of degree-2 pixels become edges whose geometry runs
/// through the pixel centers. Isolated pixels are dropped. A ring without
/// any node gets anchors at its leftmost and rightmost pixels.
pub fn skeleton_to_graph(skeleton: &Mask, transform: &AffineTransform, class: RoadClass) -> RoadGraph {
    let w = skeleton.width();
    let n = w * skeleton.height();
    let mut b = SkeletonBuilder {
        mask: skeleton,
        transform,
        class,
        node_of: vec![None; n],
        visited: vec![false; n],
        graph: RoadGraph::new(),
    };
    let pixels: Vec<usize> = skeleton.iter_set().map(|(c, r)| r * w + c).collect();
    let mut node_pixel = vec![false; n];
    for &i in &pixels {
        let (c, r) = b.pixel_of(i);
        let k = skeleton.neighbor_count(c, r);
        node_pixel[i] = k != 2 && k != 0;
    }
    // a degree-2 pixel squeezed between two node pixels joins them
    for &i in &pixels {
        if !node_pixel[i] {
            let nbrs: Vec<usize> = b.neighbors(i).collect();
            if nbrs.len() == 2 && nbrs.iter().all(|&q| node_pixel[q]) {
                let (p, q) = (b.pixel_of(nbrs[0]), b.pixel_of(nbrs[1]));
                if p.0.abs_diff(q.0) <= 1 && p.1.abs_diff(q.1) <= 1 {
                    node_pixel[i] = true;
                }
            }
        }
    }
    for &i in &pixels {
        if !node_pixel[i] || b.is_node(i) {
            continue;
        }
        let mut cluster = vec![i];
        let mut seen = BTreeSet::from([i]);
        let mut k = 0;
        while k < cluster.len() {
            let nbrs: Vec<usize> = b.neighbors(cluster[k]).collect();
            for q in nbrs {
                if node_pixel[q] && seen.insert(q) {
                    cluster.push(q);
                }
            }
            k += 1;
        }
        b.make_node(&cluster);
    }
    for &node in &pixels {
        if !b.is_node(node) {
            continue;
        }
        let nbrs: Vec<usize> = b.neighbors(node).collect();
        for q in nbrs {
            if !b.is_node(q) && !b.visited[q] {
                let chain = b.walk(node, q);
                if b.is_node(*chain.last().unwrap()) {
                    b.add_chain(&chain);
                }
            }
        }
    }
    // pure rings: every pixel has two neighbors and none was reached
    for &i in &pixels {
        if b.is_node(i) || b.visited[i] {
            continue;
        }
        let (c, r) = b.pixel_of(i);
        if skeleton.neighbor_count(c, r) == 0 {
            continue;
        }
        let mut ring = vec![i];
        b.visited[i] = true;
        let (mut prev, mut cur) = (usize::MAX, i);
        loop {
            let Some(next) = b.neighbors(cur).find(|&q| q != prev && !b.visited[q]) else {
                break;
            };
            b.visited[next] = true;
            ring.push(next);
            prev = cur;
            cur = next;
        }
        if ring.len() < 3 {
            continue;
        }
        let lo = (0..ring.len()).min_by_key(|&k| b.pixel_of(ring[k])).unwrap();
        let hi = (0..ring.len()).max_by_key(|&k| b.pixel_of(ring[k])).unwrap();
        b.make_node(&[ring[lo]]);
        b.make_node(&[ring[hi]]);
        let (s, e) = (lo.min(hi), lo.max(hi));
        let first: Vec<usize> = ring[s..=e].to_vec();
        let mut second: Vec<usize> = ring[e..].to_vec();
        second.extend_from_slice(&ring[..=s]);
        b.add_chain(&first);
        b.add_chain(&second);
    }
    b.graph
}

/// Re-labels each edge as primary when most of its geometry points fall
/// on `primary` pixels.
pub fn classify_edges_by_mask(g: &mut RoadGraph, primary: &Mask, transform: &AffineTransform) {
    let keys: Vec<(NodeId, NodeId)> = g.edges.keys().copied().collect();
    for k in keys {
        let e = &g.edges[&k];
        let pts = e.geometry.points();
        let hits = pts
            .iter()
            .filter(|p| match transform.world_to_pixel(**p) {
                Ok((c, r)) => primary.get_signed(c.floor() as isize, r.floor() as isize),
                Err(_) => false,
            })
            .count();
        let class = if 2 * hits > pts.len() {
            RoadClass::RoadP
        } else {
            RoadClass::RoadS
        };
        g.set_edge_class(k.0, k.1, class);
    }
}

struct UnionFind {
    parent: HashMap<NodeId, NodeId>,
}

impl UnionFind {
    fn find(&mut self, x: NodeId) -> NodeId {
        let p = self.parent[&x];
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    /// Union keeping the smaller id as root.
    fn union(&mut self, a: NodeId, b: NodeId) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent.insert(hi, lo);
        }
    }
}

/// Merges every pair of nodes within `eps` (transitively). Each cluster
/// becomes one node at its centroid, keeping the smallest id. Edges are
/// re-targeted; self-loops disappear and, among parallel edges, the
/// shortest survives.
pub fn merge_close_nodes(g: &RoadGraph, eps: f64) -> RoadGraph {
    if !(eps > 0.0) || g.node_count() < 2 {
        return g.clone();
    }
    let mut uf = UnionFind {
        parent: g.nodes.keys().map(|&k| (k, k)).collect(),
    };
    let cell = |p: Point2| ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<NodeId>> = HashMap::new();
    for (&id, &p) in &g.nodes {
        grid.entry(cell(p)).or_default().push(id);
    }
    for (&id, &p) in &g.nodes {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &other in bucket {
                    if other > id && p.distance(&g.nodes[&other]) <= eps {
                        uf.union(id, other);
                    }
                }
            }
        }
    }
    let mut clusters: BTreeMap<NodeId, Vec<Point2>> = BTreeMap::new();
    for (&id, &p) in &g.nodes {
        clusters.entry(uf.find(id)).or_default().push(p);
    }
    let mut out = RoadGraph::new();
    for (&root, pts) in &clusters {
        let n = pts.len() as f64;
        let c = Point2::new(
            pts.iter().map(|p| p.x).sum::<f64>() / n,
            pts.iter().map(|p| p.y).sum::<f64>() / n,
        );
        out.add_node(root, c);
    }
    for e in g.edges.values() {
        let (ru, rv) = (uf.find(e.u), uf.find(e.v));
        if ru == rv {
            continue;
        }
        let mut pts = e.geometry.points().to_vec();
        let n = pts.len();
        pts[0] = out.nodes[&ru];
        pts[n - 1] = out.nodes[&rv];
        let Ok(geometry) = LineString::new(pts) else {
            continue;
        };
        if let Some(existing) = out.edge(ru, rv) {
            if existing.length() <= geometry.length() {
                continue;
            }
            out.remove_edge(ru, rv);
        }
        // endpoints already snapped, so this cannot fail
        let _ = out.add_edge(ru, rv, e.class, geometry);
    }
    out
}

/// Removes degree-2 nodes whose two edge vectors satisfy
/// `|cos angle| > c_tr`, splicing the incident edges into one, until no
/// such node remains. Splices that would create a parallel edge are
/// skipped.
pub fn simplify(g: &RoadGraph, c_tr: f64) -> RoadGraph {
    let mut out = g.clone();
    loop {
        let mut changed = false;
        let ids: Vec<NodeId> = out.nodes.keys().copied().collect();
        for k in ids {
            if out.degree(k) != 2 {
                continue;
            }
            let nb: Vec<NodeId> = out.neighbors(k).collect();
            let (i, j) = (nb[0], nb[1]);
            if out.has_edge(i, j) {
                continue;
            }
            let (Ok(ei), Ok(ej)) = (out.edge_vector(k, i), out.edge_vector(k, j)) else {
                continue;
            };
            if ei.cos_angle(&ej).abs() <= c_tr {
                continue;
            }
            let a = out.edge(i, k).unwrap().clone();
            let b = out.edge(k, j).unwrap().clone();
            let mut pts = a.geometry_from(i).into_points();
            pts.pop();
            pts.extend(b.geometry_from(k).into_points());
            let class = if a.length() >= b.length() { a.class } else { b.class };
            let Ok(geometry) = LineString::new(pts) else {
                continue;
            };
            out.remove_node(k);
            out.add_edge(i, j, class, geometry)
                .expect("splice joins existing nodes");
            changed = true;
        }
        if !changed {
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path_graph(points: &[(f64, f64)]) -> RoadGraph {
        let mut g = RoadGraph::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            g.add_node(i as NodeId, Point2::new(x, y));
        }
        for i in 1..points.len() {
            g.add_straight_edge(i as NodeId - 1, i as NodeId, RoadClass::RoadS)
                .unwrap();
        }
        g
    }

    #[test]
    fn stats_examples() {
        let empty = graph_stats(&RoadGraph::new());
        assert_eq!((empty.total_length_m, empty.node_count, empty.edge_count), (0.0, 0, 0));
        let g = path_graph(&[(0.0, 0.0), (500.0, 0.0)]);
        let s = graph_stats(&g);
        assert_eq!((s.total_length_m, s.node_count, s.edge_count), (500.0, 2, 1));
    }

    #[test]
    fn add_edge_validation() {
        let mut g = path_graph(&[(0.0, 0.0), (10.0, 0.0)]);
        assert!(g.add_straight_edge(0, 0, RoadClass::RoadS).is_err());
        assert!(g.add_straight_edge(0, 1, RoadClass::RoadS).is_err());
        assert!(g.add_straight_edge(0, 9, RoadClass::RoadS).is_err());
        g.add_node(2, Point2::new(0.0, 10.0));
        let wrong = LineString::new(vec![Point2::new(50.0, 50.0), Point2::new(0.0, 10.0)]).unwrap();
        assert!(g.add_edge(0, 2, RoadClass::RoadS, wrong).is_err());
        // geometry given in reverse is re-oriented from u to v
        let rev = LineString::new(vec![Point2::new(0.0, 10.0), Point2::new(0.0, 0.0)]).unwrap();
        g.add_edge(2, 0, RoadClass::RoadS, rev).unwrap();
        let e = g.edge(0, 2).unwrap();
        assert_eq!((e.u, e.v), (0, 2));
        assert_eq!(e.geometry.first(), Point2::new(0.0, 0.0));
    }

    fn transform() -> AffineTransform {
        AffineTransform::north_up(5.0, Point2::new(0.0, 0.0))
    }

    #[test]
    fn straight_skeleton() {
        let m = Mask::from_fn(40, 5, |c, r| r == 2 && (5..35).contains(&c));
        let g = skeleton_to_graph(&m, &transform(), RoadClass::RoadS);
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        assert_eq!(g.edges().next().unwrap().geometry.points().len(), 30);
    }

    #[test]
    fn plus_skeleton() {
        let m = Mask::from_fn(21, 21, |c, r| {
            (c == 10 && (2..19).contains(&r)) || (r == 10 && (2..19).contains(&c))
        });
        let g = skeleton_to_graph(&m, &transform(), RoadClass::RoadS);
        assert_eq!((g.node_count(), g.edge_count()), (5, 4));
        let degs: Vec<usize> = g.node_ids().map(|n| g.degree(n)).collect();
        assert_eq!(degs.iter().filter(|&&d| d == 1).count(), 4);
        assert_eq!(degs.iter().filter(|&&d| d == 4).count(), 1);
    }

    #[test]
    fn ring_skeleton_gets_anchors() {
        // 1-px octagon ring: a square outline with its corners cut
        let m = Mask::from_fn(12, 12, |c, r| {
            let on_x = (3..9).contains(&c);
            let on_y = (3..9).contains(&r);
            (on_x && (r == 2 || r == 9)) || (on_y && (c == 2 || c == 9))
        });
        assert!(m.iter_set().all(|(c, r)| m.neighbor_count(c, r) == 2));
        let g = skeleton_to_graph(&m, &transform(), RoadClass::RoadS);
        // two extreme-x anchors, the second chain split at its middle
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        let t = transform();
        assert!(g.nodes().any(|(_, p)| p == t.pixel_center(2, 3)));
        assert!(g.nodes().any(|(_, p)| p == t.pixel_center(9, 8)));
        assert_pixels_conserved(&m, &g);
        assert!(g.node_ids().all(|n| g.degree(n) == 2));
    }

    /// Every skeleton pixel is an interior vertex of exactly one edge or
    /// belongs to a junction cluster close to a node.
    fn assert_pixels_conserved(m: &Mask, g: &RoadGraph) {
        let t = transform();
        let mut hits: HashMap<(usize, usize), usize> = HashMap::new();
        for e in g.edges() {
            let pts = e.geometry.points();
            for p in &pts[1..pts.len() - 1] {
                let (c, r) = t.world_to_pixel(*p).unwrap();
                *hits.entry((c.floor() as usize, r.floor() as usize)).or_default() += 1;
            }
        }
        for (c, r) in m.iter_set() {
            if m.neighbor_count(c, r) == 0 {
                continue;
            }
            let on_edges = hits.get(&(c, r)).copied().unwrap_or(0);
            let center = t.pixel_center(c, r);
            let near_node = g.nodes().any(|(_, p)| p.distance(&center) <= 2.0 * 5.0 * 1.5);
            assert!(on_edges == 1 || (on_edges == 0 && near_node), "pixel {c},{r}");
        }
    }

    #[test]
    fn skeleton_conserves_pixels_on_thinned_shapes() {
        use crate::raster::thin;
        let shapes = [
            Mask::from_fn(60, 60, |c, r| (c as i32 - 30).abs() < 3 || (r as i32 - 30).abs() < 3),
            Mask::from_fn(60, 60, |c, r| {
                let d = ((c as f64 - 30.0).powi(2) + (r as f64 - 30.0).powi(2)).sqrt();
                (18.0..22.0).contains(&d) || (c as i32 - r as i32).abs() < 2
            }),
        ];
        for s in &shapes {
            let sk = thin(s);
            let g = skeleton_to_graph(&sk, &transform(), RoadClass::RoadS);
            assert!(g.edge_count() > 0);
            assert_pixels_conserved(&sk, &g);
        }
    }

    #[test]
    fn isolated_pixels_dropped() {
        let m = Mask::from_fn(5, 5, |c, r| c == 2 && r == 2);
        assert!(skeleton_to_graph(&m, &transform(), RoadClass::RoadS).is_empty());
    }

    #[test]
    fn merge_examples() {
        let g = path_graph(&[(0.0, 0.0), (5.0, 0.0), (100.0, 0.0)]);
        assert_eq!(merge_close_nodes(&g, 0.0), g);
        let m = merge_close_nodes(&g, 10.0);
        assert_eq!(m.node_count(), 2);
        assert_eq!(m.position(0).unwrap(), Point2::new(2.5, 0.0));
        assert_eq!(m.edge_count(), 1);
        assert_eq!(m.edge(0, 2).unwrap().geometry.first(), Point2::new(2.5, 0.0));

        let mut tri = path_graph(&[(0.0, 0.0), (4.0, 0.0), (2.0, 3.0)]);
        tri.add_straight_edge(0, 2, RoadClass::RoadS).unwrap();
        let t = merge_close_nodes(&tri, 5.0);
        assert_eq!((t.node_count(), t.edge_count()), (1, 0));
    }

    #[test]
    fn merge_keeps_shortest_parallel_edge() {
        let mut g = RoadGraph::new();
        g.add_node(0, Point2::new(0.0, 0.0));
        g.add_node(1, Point2::new(3.0, 0.0));
        g.add_node(2, Point2::new(100.0, 0.0));
        g.add_straight_edge(0, 2, RoadClass::RoadP).unwrap();
        let detour = LineString::new(vec![
            Point2::new(3.0, 0.0),
            Point2::new(50.0, 40.0),
            Point2::new(100.0, 0.0),
        ])
        .unwrap();
        g.add_edge(1, 2, RoadClass::RoadS, detour).unwrap();
        let m = merge_close_nodes(&g, 5.0);
        assert_eq!(m.edge_count(), 1);
        assert_eq!(m.edge(0, 2).unwrap().class, RoadClass::RoadP);
    }

    #[test]
    fn simplify_examples() {
        let straight = simplify(&path_graph(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)]), DEFAULT_C_TR);
        assert_eq!((straight.node_count(), straight.edge_count()), (2, 1));
        assert!(straight.has_edge(0, 2));
        assert_eq!(straight.edge(0, 2).unwrap().geometry.points().len(), 3);

        let corner = path_graph(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]);
        assert_eq!(simplify(&corner, DEFAULT_C_TR), corner);

        // 175 degrees at node 1: |cos| = 0.9962 > 0.966
        let t = 5f64.to_radians();
        let bend = path_graph(&[(-10.0, 0.0), (0.0, 0.0), (10.0 * t.cos(), 10.0 * t.sin())]);
        let s = simplify(&bend, DEFAULT_C_TR);
        assert_eq!(s.node_count(), 2);
        assert!(!s.contains_node(1));
    }

    #[test]
    fn simplify_avoids_parallel_edges() {
        // triangle with a collinear extra node on one side
        let mut g = path_graph(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]);
        g.add_node(3, Point2::new(5.0, 8.0));
        g.add_straight_edge(0, 3, RoadClass::RoadS).unwrap();
        g.add_straight_edge(3, 2, RoadClass::RoadS).unwrap();
        let s = simplify(&g, DEFAULT_C_TR);
        // node 1 goes, node 3 would then duplicate edge 0-2 and stays
        assert_eq!(s.node_count(), 3);
        assert_eq!(s.edge_count(), 3);
    }

    fn arb_polyline_graph() -> impl Strategy<Value = RoadGraph> {
        proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..25).prop_map(|steps| {
            let mut pts = vec![(0.0, 0.0)];
            for (dx, dy) in steps {
                let (x, y) = *pts.last().unwrap();
                if dx.abs() + dy.abs() > 1e-3 {
                    pts.push((x + dx, y + dy));
                }
            }
            path_graph(&pts)
        })
    }

    proptest! {
        #[test]
        fn simplify_invariants(g in arb_polyline_graph(), c_tr in 0.5f64..0.999) {
            let s = simplify(&g, c_tr);
            let (l0, l1) = (g.total_length(), s.total_length());
            prop_assert!((l0 - l1).abs() <= 1e-6 * l0.max(1.0));
            let fixed = |h: &RoadGraph| h.node_ids().filter(|&n| h.degree(n) != 2).collect::<BTreeSet<_>>();
            prop_assert_eq!(fixed(&g), fixed(&s));
            prop_assert_eq!(simplify(&s, c_tr), s);
        }

        #[test]
        fn merge_is_monotone_in_eps(g in arb_polyline_graph(), e1 in 0.0f64..30.0, e2 in 0.0f64..30.0) {
            let (lo, hi) = (e1.min(e2), e1.max(e2));
            prop_assert!(merge_close_nodes(&g, hi).node_count() <= merge_close_nodes(&g, lo).node_count());
        }
    }
}
