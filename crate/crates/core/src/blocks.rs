//! City blocks: minimal cycles of the road graph, their boundary polygons
//! and the buildings they contain.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::buildings::Building;
use crate::geo::{point_in_polygon, ring_signed_area, Point2, Polygon};
use crate::roadgraph::{NodeId, RoadGraph};

pub const DEFAULT_CUTOFF: usize = 12;

/// Closed walk through distinct nodes; the closing edge is implicit.
/// Stored canonically: starts at the smallest id, second node is the
/// smaller of its two cycle neighbors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cycle {
    pub node_ids: Vec<NodeId>,
}

impl Cycle {
    pub fn new(mut nodes: Vec<NodeId>) -> Cycle {
        let n = nodes.len();
        if n >= 3 {
            let k = (0..n).min_by_key(|&i| nodes[i]).unwrap();
            nodes.rotate_left(k);
            if nodes[n - 1] < nodes[1] {
                nodes[1..].reverse();
            }
        }
        Cycle { node_ids: nodes }
    }

    pub fn length_edges(&self) -> usize {
        self.node_ids.len()
    }

    /// Consecutive node pairs including the closing pair.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        let n = self.node_ids.len();
        (0..n).map(move |i| (self.node_ids[i], self.node_ids[(i + 1) % n]))
    }

    fn node_set(&self) -> BTreeSet<NodeId> {
        self.node_ids.iter().copied().collect()
    }
}

/// How cycles are found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMode {
    /// Repeated peeling of degree-1 vertices and shortest cycles through
    /// degree-2 vertices.
    #[default]
    Peeling,
    /// Bounded faces of the planar embedding.
    FaceTraversal,
}

/// Counters describing one run of the peeling search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleSearchStats {
    pub sweeps: usize,
    /// Sweeps that removed no vertex and deleted an outer edge instead.
    pub forced_removals: usize,
    pub duplicates: usize,
    /// Degree-2 vertices removed while bordering two bounded faces, so the
    /// face not recorded merged into its neighbor.
    pub shared_removals: usize,
}

/// Working copy of the topology only.
#[derive(Clone)]
struct Topo {
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Topo {
    fn of(g: &RoadGraph) -> Topo {
        Topo {
            adj: g.node_ids().map(|n| (n, g.neighbors(n).collect())).collect(),
        }
    }

    fn degree(&self, v: NodeId) -> usize {
        self.adj.get(&v).map_or(0, |s| s.len())
    }

    fn remove(&mut self, v: NodeId) {
        if let Some(nbrs) = self.adj.remove(&v) {
            for n in nbrs {
                if let Some(s) = self.adj.get_mut(&n) {
                    s.remove(&v);
                }
            }
        }
    }

    fn remove_edge(&mut self, a: NodeId, b: NodeId) {
        if let Some(s) = self.adj.get_mut(&a) {
            s.remove(&b);
        }
        if let Some(s) = self.adj.get_mut(&b) {
            s.remove(&a);
        }
    }

    /// Removes every vertex of degree ≤ 1 until none remains.
    fn peel(&mut self) {
        let mut queue: VecDeque<NodeId> = self.adj.iter().filter(|(_, s)| s.len() <= 1).map(|(v, _)| *v).collect();
        while let Some(v) = queue.pop_front() {
            let Some(nbrs) = self.adj.get(&v) else {
                continue;
            };
            if nbrs.len() > 1 {
                continue;
            }
            let nbrs: Vec<NodeId> = nbrs.iter().copied().collect();
            self.remove(v);
            for n in nbrs {
                if self.degree(n) <= 1 {
                    queue.push_back(n);
                }
            }
        }
    }

    /// Every shortest path `from → to` avoiding `skip` with at most
    /// `max_edges` edges, in lexicographic order of node ids.
    fn shortest_paths(&self, from: NodeId, to: NodeId, skip: NodeId, max_edges: usize) -> Vec<Vec<NodeId>> {
        let mut dist: BTreeMap<NodeId, usize> = BTreeMap::from([(to, 0)]);
        let mut queue = VecDeque::from([to]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if u == from || d >= max_edges {
                continue;
            }
            for &w in &self.adj[&u] {
                if w != skip && !dist.contains_key(&w) {
                    dist.insert(w, d + 1);
                    queue.push_back(w);
                }
            }
        }
        let mut out = Vec::new();
        if dist.contains_key(&from) {
            let mut path = vec![from];
            self.descend(&dist, skip, &mut path, &mut out);
        }
        out
    }

    /// Extends `path` along strictly decreasing distances to the target.
    fn descend(
        &self,
        dist: &BTreeMap<NodeId, usize>,
        skip: NodeId,
        path: &mut Vec<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let cur = *path.last().unwrap();
        let d = dist[&cur];
        if d == 0 {
            out.push(path.clone());
            return;
        }
        for &w in &self.adj[&cur] {
            if w != skip && dist.get(&w) == Some(&(d - 1)) {
                path.push(w);
                self.descend(dist, skip, path, out);
                path.pop();
            }
        }
    }
}

/// Minimal cycles by iterative peeling.
///
/// Each sweep peels degree-1 vertices, then visits degree-2 vertices one at
/// a time, those on the outer face first and otherwise in ascending id
/// order. Degrees are checked at visit time, so a vertex that drops to
/// degree 2 during the sweep is visited in the same sweep. For a visited vertex `v` with neighbors `v1 < v2` the
/// shortest cycle through `v` is closed from a shortest path
/// `v → v2 → … → v1` of at most `cutoff` edges; among equally short cycles
/// the one enclosing the least area wins, then the lexicographically first.
/// The cycle is recorded and `v` removed. A sweep that removes nothing falls back to the leftmost vertex:
/// the bounded face left of its first outer-boundary edge is recorded and
/// that edge deleted, so the loop always terminates. Cycles with the same
/// node set are reported once.
pub fn find_geometric_minimal_cycles(g: &RoadGraph, cutoff: usize) -> Vec<Cycle> {
    find_minimal_cycles_with_stats(g, cutoff).0
}

/// Choices left open by the peeling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeelingOptions {
    /// Visit degree-2 vertices on the outer face before the others.
    pub outer_first: bool,
    /// Break ties between equally short cycles by smaller enclosed area
    /// instead of node-id order alone.
    pub area_tie_break: bool,
}

impl Default for PeelingOptions {
    fn default() -> Self {
        PeelingOptions {
            outer_first: true,
            area_tie_break: true,
        }
    }
}

impl PeelingOptions {
    /// A single pass in ascending id order per sweep and lexicographic
    /// tie-breaking.
    pub const BY_ID: PeelingOptions = PeelingOptions {
        outer_first: false,
        area_tie_break: false,
    };
}

pub fn find_minimal_cycles_with_stats(g: &RoadGraph, cutoff: usize) -> (Vec<Cycle>, CycleSearchStats) {
    find_minimal_cycles_with(g, cutoff, PeelingOptions::default())
}

pub fn find_minimal_cycles_with(g: &RoadGraph, cutoff: usize, opts: PeelingOptions) -> (Vec<Cycle>, CycleSearchStats) {
    let mut t = Topo::of(g);
    let mut stats = CycleSearchStats::default();
    let mut seen: BTreeSet<BTreeSet<NodeId>> = BTreeSet::new();
    let mut out = Vec::new();
    let mut record = |c: Cycle, stats: &mut CycleSearchStats| {
        if seen.insert(c.node_set()) {
            out.push(c);
        } else {
            stats.duplicates += 1;
        }
    };
    loop {
        t.peel();
        if t.adj.is_empty() {
            break;
        }
        stats.sweeps += 1;
        // vertices that reach degree 2 during the sweep are visited in the
        // same sweep; each vertex at most once
        let mut tried: BTreeSet<NodeId> = BTreeSet::new();
        let mut last = None;
        let mut removed = false;
        loop {
            let outer = if opts.outer_first {
                outer_face_nodes(&t, g)
            } else {
                BTreeSet::new()
            };
            let next = t
                .adj
                .iter()
                .filter(|(v, s)| s.len() == 2 && !tried.contains(*v))
                .filter(|(v, _)| opts.outer_first || last.is_none_or(|l| **v > l))
                .map(|(v, _)| *v)
                .min_by_key(|v| (!outer.contains(v), *v));
            let Some(v) = next else {
                break;
            };
            tried.insert(v);
            last = Some(v);
            let mut it = t.adj[&v].iter().copied();
            let (v1, v2) = (it.next().unwrap(), it.next().unwrap());
            // paths v → v1 through v2 have the edge v-v2 plus a v2 → v1 part
            let best = t
                .shortest_paths(v2, v1, v, cutoff.saturating_sub(1))
                .into_iter()
                .map(|path| {
                    let mut nodes = vec![v];
                    nodes.extend(path);
                    let area = if opts.area_tie_break {
                        ring_signed_area(&cycle_ring(&nodes, g)).abs()
                    } else {
                        0.0
                    };
                    (area, nodes)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((_, nodes)) = best else {
                continue;
            };
            let (left, right) = (
                bounded_face(&t, g, v, v1, usize::MAX),
                bounded_face(&t, g, v1, v, usize::MAX),
            );
            if left.is_some() && right.is_some() {
                stats.shared_removals += 1;
            }
            record(Cycle::new(nodes), &mut stats);
            t.remove(v);
            removed = true;
        }
        if !removed {
            stats.forced_removals += 1;
            let (v, w) = outer_edge(&t, g).expect("peeled graph is not empty");
            if let Some(face) = bounded_face(&t, g, v, w, cutoff) {
                record(face, &mut stats);
            }
            t.remove_edge(v, w);
        }
    }
    (out, stats)
}

/// Angle of the first segment of edge `v-w` leaving `v`.
fn direction(g: &RoadGraph, v: NodeId, w: NodeId) -> f64 {
    let geom = g.edge(v, w).expect("edge exists").geometry_from(v);
    let (dx, dy) = geom.points()[1].sub(&geom.points()[0]);
    dy.atan2(dx)
}

/// Neighbor following `from` clockwise around `at`.
fn next_clockwise(t: &Topo, g: &RoadGraph, at: NodeId, from: NodeId) -> NodeId {
    let base = direction(g, at, from);
    let tau = std::f64::consts::TAU;
    t.adj[&at]
        .iter()
        .copied()
        .filter(|&w| w != from)
        .min_by(|&a, &b| {
            let da = (base - direction(g, at, a)).rem_euclid(tau);
            let db = (base - direction(g, at, b)).rem_euclid(tau);
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap_or(from)
}

/// The leftmost vertex and its first neighbor counter-clockwise from west;
/// that edge lies on the outer face.
fn outer_edge(t: &Topo, g: &RoadGraph) -> Option<(NodeId, NodeId)> {
    let v = *t
        .adj
        .iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(v, _)| v)
        .min_by(|&&a, &&b| {
            let (pa, pb) = (g.position(a).unwrap(), g.position(b).unwrap());
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.cmp(&b))
        })?;
    let pi = std::f64::consts::PI;
    let w = *t.adj[&v]
        .iter()
        .min_by(|&&a, &&b| {
            let da = (direction(g, v, a) - pi).rem_euclid(2.0 * pi);
            let db = (direction(g, v, b) - pi).rem_euclid(2.0 * pi);
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap();
    Some((v, w))
}

/// Vertices on the boundary of the outer face of the leftmost vertex's
/// component.
fn outer_face_nodes(t: &Topo, g: &RoadGraph) -> BTreeSet<NodeId> {
    let Some((v, w)) = outer_edge(t, g) else {
        return BTreeSet::new();
    };
    let mut out = BTreeSet::from([w]);
    let (mut a, mut b) = (w, v);
    let limit = 2 * t.adj.values().map(|s| s.len()).sum::<usize>() + 2;
    for _ in 0..limit {
        out.insert(b);
        let next = next_clockwise(t, g, b, a);
        a = b;
        b = next;
        if (a, b) == (w, v) {
            break;
        }
    }
    out
}

/// Walks the face on the left of `a → b`. Returns it when its boundary is a
/// simple counter-clockwise cycle of at most `cutoff` edges.
fn bounded_face(t: &Topo, g: &RoadGraph, a: NodeId, b: NodeId, cutoff: usize) -> Option<Cycle> {
    let mut walk = vec![a];
    let (mut u, mut v) = (a, b);
    while v != a || walk.len() == 1 {
        if walk.len() >= cutoff || walk.contains(&v) || !t.adj.contains_key(&v) {
            return None;
        }
        walk.push(v);
        let next = next_clockwise(t, g, v, u);
        u = v;
        v = next;
    }
    // the walk must close through the starting half-edge
    if next_clockwise(t, g, a, u) != b || walk.len() < 3 {
        return None;
    }
    (ring_signed_area(&cycle_ring(&walk, g)) > 0.0).then(|| Cycle::new(walk))
}

/// Bounded faces of the embedding whose boundary is a simple cycle of at
/// most `cutoff` edges. Edge directions at a node come from the first
/// segment of the edge geometry.
pub fn find_face_cycles(g: &RoadGraph, cutoff: usize) -> Vec<Cycle> {
    let mut t = Topo::of(g);
    t.peel();
    let mut out = BTreeSet::new();
    for (&u, nbrs) in &t.adj {
        for &w in nbrs {
            if let Some(c) = bounded_face(&t, g, u, w, cutoff) {
                out.insert(c);
            }
        }
    }
    out.into_iter().collect()
}

pub fn find_cycles(g: &RoadGraph, cutoff: usize, mode: CycleMode) -> Vec<Cycle> {
    find_cycles_with(g, cutoff, mode, PeelingOptions::default())
}

/// `opts` only affects [`CycleMode::Peeling`].
pub fn find_cycles_with(g: &RoadGraph, cutoff: usize, mode: CycleMode, opts: PeelingOptions) -> Vec<Cycle> {
    match mode {
        CycleMode::Peeling => find_minimal_cycles_with(g, cutoff, opts).0,
        CycleMode::FaceTraversal => find_face_cycles(g, cutoff),
    }
}

/// Concatenated edge geometries around the node sequence, closed.
fn cycle_ring(nodes: &[NodeId], g: &RoadGraph) -> Vec<Point2> {
    let n = nodes.len();
    let mut pts = Vec::new();
    for i in 0..n {
        let (a, b) = (nodes[i], nodes[(i + 1) % n]);
        let geom = g.edge(a, b).expect("cycle edge exists").geometry_from(a);
        let p = geom.points();
        pts.extend_from_slice(&p[..p.len() - 1]);
    }
    pts.push(pts[0]);
    pts
}

fn segments_cross(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let orient = |a: Point2, b: Point2, c: Point2| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let on = |a: Point2, b: Point2, c: Point2| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// True when two non-adjacent segments of a closed ring touch.
pub fn ring_self_intersects(ring: &[Point2]) -> bool {
    let n = ring.len() - 1;
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return true;
            }
        }
    }
    false
}

/// Boundary polygon of a cycle, oriented counter-clockwise. `valid` is false
/// when the concatenated geometry crosses itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclePolygon {
    pub polygon: Polygon,
    pub valid: bool,
}

/// `None` only when the ring collapses to fewer than three distinct points.
pub fn cycle_to_polygon(c: &Cycle, g: &RoadGraph) -> Option<CyclePolygon> {
    let ring = cycle_ring(&c.node_ids, g);
    let valid = !ring_self_intersects(&ring);
    let polygon = Polygon::new(ring, vec![]).ok()?;
    Some(CyclePolygon { polygon, valid })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub block_id: usize,
    pub cycle: Cycle,
    pub boundary: Polygon,
    pub valid: bool,
    pub buildings: Vec<String>,
}

/// Blocks for the given cycles, numbered in order; cycles without a usable
/// polygon are skipped.
pub fn blocks_from_cycles(cycles: &[Cycle], g: &RoadGraph) -> Vec<Block> {
    cycles
        .iter()
        .filter_map(|c| cycle_to_polygon(c, g).map(|p| (c, p)))
        .enumerate()
        .map(|(i, (c, p))| Block {
            block_id: i,
            cycle: c.clone(),
            boundary: p.polygon,
            valid: p.valid,
            buildings: Vec::new(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub blocks: Vec<Block>,
    /// Buildings whose centroid lies in no block.
    pub unbounded: Vec<String>,
}

/// Puts each building into the block containing its footprint centroid,
/// the smallest such block on overlap (then the lowest block id).
pub fn assign_buildings_to_blocks(buildings: &[Building], blocks: &[Block]) -> Assignment {
    let mut blocks: Vec<Block> = blocks.to_vec();
    for b in &mut blocks {
        b.buildings.clear();
    }
    let boxes: Vec<(Point2, Point2)> = blocks.iter().map(|b| b.boundary.bbox()).collect();
    let areas: Vec<f64> = blocks.iter().map(|b| b.boundary.area()).collect();
    let mut unbounded = Vec::new();
    for bld in buildings {
        let c = bld.centroid();
        let best = (0..blocks.len())
            .filter(|&i| {
                let (lo, hi) = boxes[i];
                c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y && point_in_polygon(c, &blocks[i].boundary)
            })
            .min_by(|&i, &j| areas[i].total_cmp(&areas[j]).then(i.cmp(&j)));
        match best {
            Some(i) => blocks[i].buildings.push(bld.id.clone()),
            None => unbounded.push(bld.id.clone()),
        }
    }
    Assignment { blocks, unbounded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LineString;
    use crate::roadgraph::RoadClass;

    pub(crate) fn graph(points: &[(f64, f64)], edges: &[(NodeId, NodeId)]) -> RoadGraph {
        let mut g = RoadGraph::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            g.add_node(i as NodeId, Point2::new(x, y));
        }
        for &(a, b) in edges {
            g.add_straight_edge(a, b, RoadClass::RoadS).unwrap();
        }
        g
    }

    fn sets(cs: &[Cycle]) -> BTreeSet<BTreeSet<NodeId>> {
        cs.iter().map(|c| c.node_set()).collect()
    }

    #[test]
    fn canonical_cycle() {
        assert_eq!(Cycle::new(vec![5, 2, 9, 7]).node_ids, vec![2, 5, 7, 9]);
        assert_eq!(Cycle::new(vec![7, 9, 2, 5]).node_ids, vec![2, 5, 7, 9]);
        assert_eq!(Cycle::new(vec![2, 9, 7, 5]).node_ids, vec![2, 5, 7, 9]);
    }

    #[test]
    fn triangle_and_tree() {
        let tri = graph(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], &[(0, 1), (1, 2), (2, 0)]);
        let cs = find_geometric_minimal_cycles(&tri, DEFAULT_CUTOFF);
        assert_eq!(cs, vec![Cycle::new(vec![0, 1, 2])]);

        let tree = graph(
            &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (1.0, 1.0), (1.0, 2.0)],
            &[(0, 1), (1, 2), (1, 3), (3, 4)],
        );
        assert!(find_geometric_minimal_cycles(&tree, DEFAULT_CUTOFF).is_empty());
        assert!(find_face_cycles(&tree, DEFAULT_CUTOFF).is_empty());
    }

    fn two_squares() -> RoadGraph {
        // 0-1-2 on top of 3-4-5, shared edge 1-4
        graph(
            &[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            &[(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)],
        )
    }

    #[test]
    fn two_squares_give_two_faces() {
        let g = two_squares();
        let expected: BTreeSet<BTreeSet<NodeId>> = [[0, 1, 3, 4].into(), [1, 2, 4, 5].into()].into();
        assert_eq!(sets(&find_geometric_minimal_cycles(&g, DEFAULT_CUTOFF)), expected);
        assert_eq!(sets(&find_face_cycles(&g, DEFAULT_CUTOFF)), expected);
    }

    #[test]
    fn cutoff_limits_cycle_length() {
        // hexagon
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 3.0;
                (t.cos(), t.sin())
            })
            .collect();
        let edges: Vec<(NodeId, NodeId)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let g = graph(&pts, &edges);
        // a 6-cycle needs a 5-edge path besides the closing edge
        assert_eq!(find_geometric_minimal_cycles(&g, 5).len(), 1);
        let (cs, stats) = find_minimal_cycles_with_stats(&g, 4);
        assert!(cs.is_empty());
        assert!(stats.forced_removals > 0);
        assert_eq!(find_face_cycles(&g, 6).len(), 1);
        assert!(find_face_cycles(&g, 5).is_empty());
    }

    #[test]
    fn terminates_without_degree_two_vertices() {
        // K4 drawn planar: every vertex has degree 3
        let g = graph(
            &[(0.0, 0.0), (4.0, 0.0), (2.0, 3.0), (2.0, 1.0)],
            &[(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)],
        );
        let (_, stats) = find_minimal_cycles_with_stats(&g, DEFAULT_CUTOFF);
        assert!(stats.forced_removals >= 1);
        assert_eq!(find_face_cycles(&g, DEFAULT_CUTOFF).len(), 3);
    }

    #[test]
    fn polygon_examples() {
        let tri = graph(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], &[(0, 1), (1, 2), (2, 0)]);
        let p = cycle_to_polygon(&Cycle::new(vec![0, 2, 1]), &tri).unwrap();
        assert!(p.valid);
        assert_eq!(p.polygon.area(), 0.5);
        assert!(ring_signed_area(p.polygon.exterior()) > 0.0);

        let sq = graph(
            &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            &[(0, 1), (1, 2), (2, 3), (3, 0)],
        );
        assert_eq!(
            cycle_to_polygon(&Cycle::new(vec![0, 1, 2, 3]), &sq)
                .unwrap()
                .polygon
                .area(),
            1.0
        );
    }

    #[test]
    fn curved_edge_polygon_matches_shoelace() {
        let mut g = graph(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], &[(0, 1), (0, 2)]);
        let arc: Vec<Point2> = (0..=8)
            .map(|k| {
                let t = k as f64 / 8.0 * std::f64::consts::FRAC_PI_2;
                Point2::new(10.0 * t.cos(), 10.0 * t.sin())
            })
            .collect();
        let mut pts = arc.clone();
        pts[0] = Point2::new(10.0, 0.0);
        pts[8] = Point2::new(0.0, 10.0);
        g.add_edge(1, 2, RoadClass::RoadS, LineString::new(pts.clone()).unwrap())
            .unwrap();
        let p = cycle_to_polygon(&Cycle::new(vec![0, 1, 2]), &g).unwrap();
        // shoelace over origin followed by the arc points
        let mut ring = vec![Point2::new(0.0, 0.0)];
        ring.extend(pts);
        let n = ring.len();
        let twice: f64 = (0..n)
            .map(|i| ring[i].x * ring[(i + 1) % n].y - ring[(i + 1) % n].x * ring[i].y)
            .sum();
        assert!((p.polygon.area() - twice.abs() / 2.0).abs() < 1e-9);
        assert!(p.valid);
    }

    #[test]
    fn bowtie_is_flagged() {
        let mut g = graph(&[(0.0, 0.0), (10.0, 10.0), (0.0, 10.0)], &[(0, 1), (1, 2)]);
        let zig = LineString::new(vec![
            Point2::new(0.0, 10.0),
            Point2::new(10.0, 0.0),
            Point2::new(0.0, 0.0),
        ])
        .unwrap();
        g.add_edge(2, 0, RoadClass::RoadS, zig).unwrap();
        let p = cycle_to_polygon(&Cycle::new(vec![0, 1, 2]), &g).unwrap();
        assert!(!p.valid);
    }

    fn grid(n: usize, spacing: f64) -> RoadGraph {
        let mut pts = Vec::new();
        let mut edges = Vec::new();
        for r in 0..n {
            for c in 0..n {
                pts.push((c as f64 * spacing, r as f64 * spacing));
                let id = (r * n + c) as NodeId;
                if c + 1 < n {
                    edges.push((id, id + 1));
                }
                if r + 1 < n {
                    edges.push((id, id + n as NodeId));
                }
            }
        }
        graph(&pts, &edges)
    }

    #[test]
    fn grid_blocks_tile_the_interior() {
        let g = grid(5, 100.0);
        for mode in [CycleMode::Peeling, CycleMode::FaceTraversal] {
            let cs = find_cycles(&g, DEFAULT_CUTOFF, mode);
            assert_eq!(cs.len(), 16, "{mode:?}");
            let blocks = blocks_from_cycles(&cs, &g);
            let total: f64 = blocks.iter().map(|b| b.boundary.area()).sum();
            assert!((total - 400.0 * 400.0).abs() <= 1e-6 * total);
        }
    }

    #[test]
    fn assignment_examples() {
        let g = grid(2, 100.0);
        let blocks = blocks_from_cycles(&find_geometric_minimal_cycles(&g, DEFAULT_CUTOFF), &g);
        let inside = Building::new(
            "in",
            Polygon::rect(Point2::new(40.0, 40.0), Point2::new(60.0, 60.0)).unwrap(),
        );
        let outside = Building::new(
            "out",
            Polygon::rect(Point2::new(140.0, 40.0), Point2::new(160.0, 60.0)).unwrap(),
        );
        let a = assign_buildings_to_blocks(&[inside, outside], &blocks);
        assert_eq!(a.blocks[0].buildings, vec!["in".to_string()]);
        assert_eq!(a.unbounded, vec!["out".to_string()]);
    }

    #[test]
    fn assignment_matches_exhaustive_containment() {
        use rand::{Rng, SeedableRng};
        let g = grid(4, 100.0);
        let blocks = blocks_from_cycles(&find_geometric_minimal_cycles(&g, DEFAULT_CUTOFF), &g);
        assert_eq!(blocks.len(), 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let buildings: Vec<Building> = (0..100)
            .map(|i| {
                let x = rng.gen_range(-50.0..350.0);
                let y = rng.gen_range(-50.0..350.0);
                Building::new(
                    format!("b{i}"),
                    Polygon::rect(Point2::new(x, y), Point2::new(x + 6.0, y + 4.0)).unwrap(),
                )
            })
            .collect();
        let a = assign_buildings_to_blocks(&buildings, &blocks);
        for b in &buildings {
            let c = b.centroid();
            // oracle: every block, axis-aligned containment
            let owners: Vec<usize> = blocks
                .iter()
                .filter(|k| {
                    let (lo, hi) = k.boundary.bbox();
                    c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y
                })
                .map(|k| k.block_id)
                .collect();
            let got: Vec<usize> = a
                .blocks
                .iter()
                .filter(|k| k.buildings.contains(&b.id))
                .map(|k| k.block_id)
                .collect();
            match owners.first() {
                Some(&o) => assert_eq!(got, vec![o]),
                None => {
                    assert!(got.is_empty());
                    assert!(a.unbounded.contains(&b.id));
                }
            }
        }
    }
}
