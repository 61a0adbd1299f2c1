//! Generators and brute-force oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use urbanlayout::geo::{Point2, Polygon};
use urbanlayout::roadgraph::{NodeId, RoadClass, RoadGraph};

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn properly_cross(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn is_connected(g: &RoadGraph) -> bool {
    let Some(start) = g.node_ids().next() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for w in g.neighbors(u) {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == g.node_count()
}

/// Connected straight-line planar graph on `n` random points: greedy
/// non-crossing edges by increasing length, then each edge dropped with
/// probability `drop` when the graph stays connected.
pub fn random_planar_graph<R: Rng>(rng: &mut R, n: usize, drop: f64) -> RoadGraph {
    let mut pts: Vec<Point2> = Vec::new();
    while pts.len() < n {
        let p = Point2::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0));
        if pts.iter().all(|q| q.distance(&p) > 60.0) {
            pts.push(p);
        }
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|a, b| pts[a.0].distance(&pts[a.1]).total_cmp(&pts[b.0].distance(&pts[b.1])));
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (i, j) in pairs {
        let crosses = edges
            .iter()
            .any(|&(a, b)| properly_cross(pts[i], pts[j], pts[a], pts[b]));
        // keep vertices off the interior of other edges
        let grazes =
            (0..n).any(|k| k != i && k != j && urbanlayout::geo::point_segment_distance(pts[k], pts[i], pts[j]) < 15.0);
        if !crosses && !grazes {
            edges.push((i, j));
        }
    }
    let mut g = RoadGraph::new();
    for (i, p) in pts.iter().enumerate() {
        g.add_node(i as NodeId, *p);
    }
    for &(a, b) in &edges {
        g.add_straight_edge(a as NodeId, b as NodeId, RoadClass::RoadS).unwrap();
    }
    edges.shuffle(rng);
    for (a, b) in edges {
        if rng.gen_bool(drop) {
            let e = g.remove_edge(a as NodeId, b as NodeId).unwrap();
            if !is_connected(&g) {
                g.add_edge(e.u, e.v, e.class, e.geometry).unwrap();
            }
        }
    }
    g
}

/// Every simple cycle, as node sequences, each reported once.
pub fn all_simple_cycles(g: &RoadGraph) -> Vec<Vec<NodeId>> {
    fn dfs(
        g: &RoadGraph,
        start: NodeId,
        path: &mut Vec<NodeId>,
        on: &mut BTreeSet<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let u = *path.last().unwrap();
        for w in g.neighbors(u).collect::<Vec<_>>() {
            if w == start && path.len() >= 3 && path[1] < *path.last().unwrap() {
                out.push(path.clone());
            } else if w > start && !on.contains(&w) {
                path.push(w);
                on.insert(w);
                dfs(g, start, path, on, out);
                on.remove(&w);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for s in g.node_ids().collect::<Vec<_>>() {
        dfs(g, s, &mut vec![s], &mut BTreeSet::from([s]), &mut out);
    }
    out
}

fn strictly_inside(p: Point2, ring: &[Point2]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if urbanlayout::geo::point_segment_distance(p, a, b) < 1e-9 {
            return false;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

/// The graph without its dangling trees.
pub fn two_core(g: &RoadGraph) -> RoadGraph {
    let mut g = g.clone();
    loop {
        let low: Vec<NodeId> = g.node_ids().filter(|&n| g.degree(n) <= 1).collect();
        if low.is_empty() {
            return g;
        }
        for n in low {
            g.remove_node(n);
        }
    }
}

/// Cycles of a straight-line planar graph that contain no vertex and no
/// edge of the 2-core in their interior; these are exactly the simple
/// bounded faces once dangling trees are ignored.
pub fn minimal_cycle_oracle(g: &RoadGraph) -> BTreeSet<BTreeSet<NodeId>> {
    let g = &two_core(g);
    let pos = |n: NodeId| g.position(n).unwrap();
    let mut out = BTreeSet::new();
    for c in all_simple_cycles(g) {
        let ring: Vec<Point2> = c.iter().map(|&n| pos(n)).collect();
        let members: BTreeSet<NodeId> = c.iter().copied().collect();
        let vertex_inside = g
            .node_ids()
            .filter(|n| !members.contains(n))
            .any(|n| strictly_inside(pos(n), &ring));
        let k = c.len();
        let on_cycle = |a: NodeId, b: NodeId| {
            (0..k).any(|i| {
                let (x, y) = (c[i], c[(i + 1) % k]);
                (x, y) == (a, b) || (y, x) == (a, b)
            })
        };
        let chord_inside = g.edges().filter(|e| !on_cycle(e.u, e.v)).any(|e| {
            let (p, q) = (pos(e.u), pos(e.v));
            strictly_inside(Point2::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0), &ring)
        });
        if !vertex_inside && !chord_inside {
            out.insert(members);
        }
    }
    out
}

/// Polygon of a straight-line cycle given as node ids.
pub fn cycle_polygon(g: &RoadGraph, nodes: &[NodeId]) -> Polygon {
    Polygon::new(nodes.iter().map(|&n| g.position(n).unwrap()).collect(), vec![]).unwrap()
}
