//! Layout metrics: street-bearing entropy, traffic convenience, Chamfer and
//! Wasserstein distances, mask overlap scores, layout validity, and the
//! Fréchet distance between two Gaussians.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buildings::Building;
use crate::error::{Error, Result};
use crate::geo::{point_in_polygon, AffineTransform, Point2, Polygon};
use crate::raster::{thin, Mask};
use crate::roadgraph::{NodeId, RoadGraph};

pub const DEFAULT_BEARING_BINS: usize = 36;
pub const DEFAULT_MIN_PAIR_DIST_M: f64 = 300.0;
pub const DEFAULT_SAMPLE_SPACING_M: f64 = 10.0;

/// Compass bearing of `b` seen from `a`, degrees in [0, 360).
pub fn bearing_deg(a: Point2, b: Point2) -> f64 {
    let (dx, dy) = b.sub(&a);
    dx.atan2(dy).to_degrees().rem_euclid(360.0)
}

/// Length-weighted histogram of edge chord bearings, each edge counted at
/// θ and θ + 180°. Bin `i` covers [i·w − w/2, i·w + w/2).
pub fn bearing_histogram(g: &RoadGraph, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::Config("bearing histogram needs at least one bin".into()));
    }
    let w = 360.0 / bins as f64;
    let mut hist = vec![0.0; bins];
    for e in g.edges() {
        let (a, b) = (e.geometry.first(), e.geometry.last());
        if a == b {
            continue;
        }
        let len = e.length();
        let theta = bearing_deg(a, b);
        for t in [theta, theta + 180.0] {
            let i = ((t + w / 2.0) / w).floor() as usize % bins;
            hist[i] += len;
        }
    }
    Ok(hist)
}

/// Shannon entropy (nats) of the bearing histogram.
pub fn orientation_entropy(g: &RoadGraph, bins: usize) -> Result<f64> {
    let hist = bearing_histogram(g, bins)?;
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedInput(
            "orientation entropy of a graph without edges".into(),
        ));
    }
    Ok(-hist
        .iter()
        .filter(|&&h| h > 0.0)
        .map(|&h| {
            let p = h / total;
            p * p.ln()
        })
        .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnreachablePairs {
    /// Disconnected pairs count with ratio 0.
    #[default]
    Zero,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficParams {
    pub min_dist_m: f64,
    pub unreachable: UnreachablePairs,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            min_dist_m: DEFAULT_MIN_PAIR_DIST_M,
            unreachable: UnreachablePairs::Zero,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dense index over the nodes of a graph with edge lengths as weights.
struct WeightedAdjacency {
    ids: Vec<NodeId>,
    pos: Vec<Point2>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedAdjacency {
    fn of(g: &RoadGraph) -> Self {
        let ids: Vec<NodeId> = g.node_ids().collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let pos = g.nodes().map(|(_, p)| p).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for e in g.edges() {
            let (a, b, w) = (index[&e.u], index[&e.v], e.length());
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        WeightedAdjacency { ids, pos, adj }
    }

    fn dijkstra(&self, src: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.ids.len()];
        dist[src] = 0.0;
        let mut heap = BinaryHeap::from([State { cost: 0.0, node: src }]);
        while let Some(State { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, w) in &self.adj[node] {
                let c = cost + w;
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(State { cost: c, node: next });
                }
            }
        }
        dist
    }
}

/// Mean of straight-line over shortest-path distance across unordered node
/// pairs farther apart than `min_dist_m`.
pub fn traffic_convenience(g: &RoadGraph, params: &TrafficParams) -> Result<f64> {
    let w = WeightedAdjacency::of(g);
    let n = w.ids.len();
    let (sum, count) = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist = w.dijkstra(i);
            let mut sum = 0.0;
            let mut count = 0usize;
            for (j, &ds) in dist.iter().enumerate().skip(i + 1) {
                let de = w.pos[i].distance(&w.pos[j]);
                if de <= params.min_dist_m {
                    continue;
                }
                if ds.is_finite() {
                    sum += de / ds;
                    count += 1;
                } else if params.unreachable == UnreachablePairs::Zero {
                    count += 1;
                }
            }
            (sum, count)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        return Err(Error::UndefinedInput(format!(
            "no node pair is farther apart than {} m",
            params.min_dist_m
        )));
    }
    Ok(sum / count as f64)
}

/// Points along every edge at fixed arc-length spacing, starting at the
/// edge's first point and always including its last.
pub fn sample_graph_points(g: &RoadGraph, spacing: f64) -> Vec<Point2> {
    let mut out = Vec::new();
    for e in g.edges() {
        let pts = e.geometry.points();
        out.push(pts[0]);
        let mut next = spacing;
        let mut walked = 0.0;
        for w in pts.windows(2) {
            let seg = w[0].distance(&w[1]);
            while next < walked + seg {
                let t = (next - walked) / seg;
                out.push(Point2::new(
                    w[0].x + t * (w[1].x - w[0].x),
                    w[0].y + t * (w[1].y - w[0].y),
                ));
                next += spacing;
            }
            walked += seg;
        }
        let last = *pts.last().unwrap();
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

/// Uniform-grid nearest-neighbor index.
struct PointGrid<'a> {
    points: &'a [Point2],
    origin: Point2,
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    max_key: (i64, i64),
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Point2]) -> Self {
        let (lo, hi) = crate::geo::bbox(points);
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let cell = extent / (points.len() as f64).sqrt().max(1.0);
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut grid = PointGrid {
            points,
            origin: lo,
            cell,
            cells: HashMap::new(),
            max_key: (0, 0),
        };
        for (i, p) in points.iter().enumerate() {
            cells.entry(grid.key(*p)).or_default().push(i);
        }
        grid.max_key = grid.key(hi);
        grid.cells = cells;
        grid
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.y - self.origin.y) / self.cell).floor() as i64,
        )
    }

    /// Searches rings of cells around the projection of `q` onto the grid.
    /// Points in unvisited rings are at least `ring · cell` from that
    /// projection, hence from `q`.
    fn nearest_distance(&self, q: Point2) -> f64 {
        let (kx, ky) = self.max_key;
        let (qx, qy) = self.key(q);
        let (cx, cy) = (qx.clamp(0, kx), qy.clamp(0, ky));
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                        for &i in ids {
                            best = best.min(q.distance(&self.points[i]));
                        }
                    }
                }
            }
            if best <= ring as f64 * self.cell || ring > kx.max(ky) {
                return best;
            }
            ring += 1;
        }
    }
}

fn mean_nearest(from: &[Point2], to: &[Point2]) -> f64 {
    let grid = PointGrid::new(to);
    from.par_iter().map(|p| grid.nearest_distance(*p)).sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance: the average of the two mean nearest-neighbor
/// distances.
pub fn chamfer_distance(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedInput("chamfer distance of an empty point set".into()));
    }
    Ok(0.5 * (mean_nearest(a, b) + mean_nearest(b, a)))
}

/// Chamfer distance between two graphs sampled every `spacing` meters.
pub fn graph_chamfer(a: &RoadGraph, b: &RoadGraph, spacing: f64) -> Result<f64> {
    chamfer_distance(&sample_graph_points(a, spacing), &sample_graph_points(b, spacing))
}

/// Intersection over union; 1 when both masks are empty.
pub fn mean_iou(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.and_count(b)?;
    let union = a.or_count(b)?;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Centerline Dice score from thinned masks.
pub fn cl_dice(pred: &Mask, truth: &Mask) -> Result<f64> {
    pred.same_shape(truth)?;
    let (sp, st) = (thin(pred), thin(truth));
    let (np, nt) = (sp.count(), st.count());
    if np == 0 || nt == 0 {
        return Ok(0.0);
    }
    let tprec = sp.and_count(truth)? as f64 / np as f64;
    let tsens = st.and_count(pred)? as f64 / nt as f64;
    if tprec + tsens == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tprec * tsens / (tprec + tsens))
}

/// Value of the sorted sample at fractional rank `r` by linear interpolation.
fn interpolate_sorted(sorted: &[f64], r: f64) -> f64 {
    let i = r.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let t = r - i as f64;
    sorted[i] + t * (sorted[i + 1] - sorted[i])
}

/// 1-D Wasserstein-1 distance between empirical samples: both quantile
/// functions are resampled on `max(|a|, |b|)` evenly spaced ranks and the
/// mean absolute difference is returned.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedInput("wasserstein distance of an empty sample".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let n = sa.len().max(sb.len());
    if n == 1 {
        return Ok((sa[0] - sb[0]).abs());
    }
    let q = |s: &[f64], k: usize| interpolate_sorted(s, k as f64 * (s.len() - 1) as f64 / (n - 1) as f64);
    Ok((0..n).map(|k| (q(&sa, k) - q(&sb, k)).abs()).sum::<f64>() / n as f64)
}

/// Percentage of buildings with a vertex outside `boundary` or a pixel
/// center inside the footprint that lands on a road pixel.
pub fn validity(
    buildings: &[Building],
    boundary: &Polygon,
    road_mask: &Mask,
    transform: &AffineTransform,
) -> Result<f64> {
    if buildings.is_empty() {
        return Ok(0.0);
    }
    let mut invalid = 0usize;
    for b in buildings {
        let outside = b.footprint.vertices().iter().any(|v| !point_in_polygon(*v, boundary));
        if outside || covers_road(&b.footprint, road_mask, transform)? {
            invalid += 1;
        }
    }
    Ok(100.0 * invalid as f64 / buildings.len() as f64)
}

fn covers_road(footprint: &Polygon, road: &Mask, transform: &AffineTransform) -> Result<bool> {
    let (lo, hi) = footprint.bbox();
    let mut cols = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rows = (f64::INFINITY, f64::NEG_INFINITY);
    for p in [lo, hi, Point2::new(lo.x, hi.y), Point2::new(hi.x, lo.y)] {
        let (c, r) = transform.world_to_pixel(p)?;
        cols = (cols.0.min(c), cols.1.max(c));
        rows = (rows.0.min(r), rows.1.max(r));
    }
    let clamp = |v: f64, n: usize| v.clamp(0.0, n as f64) as usize;
    let (c0, c1) = (
        clamp(cols.0.floor(), road.width()),
        clamp(cols.1.ceil() + 1.0, road.width()),
    );
    let (r0, r1) = (
        clamp(rows.0.floor(), road.height()),
        clamp(rows.1.ceil() + 1.0, road.height()),
    );
    for row in r0..r1 {
        for col in c0..c1 {
            if road.get(col, row) && point_in_polygon(transform.pixel_center(col, row), footprint) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Squared Fréchet distance between N(mu1, sigma1) and N(mu2, sigma2).
pub fn frechet_distance(mu1: &[f64], sigma1: &[Vec<f64>], mu2: &[f64], sigma2: &[Vec<f64>]) -> Result<f64> {
    let d = mu1.len();
    let square = |s: &[Vec<f64>]| s.len() == d && s.iter().all(|r| r.len() == d);
    if mu2.len() != d || !square(sigma1) || !square(sigma2) {
        return Err(Error::DimensionMismatch {
            left_w: d,
            left_h: sigma1.len(),
            right_w: mu2.len(),
            right_h: sigma2.len(),
        });
    }
    let m = |s: &[Vec<f64>]| DMatrix::from_fn(d, d, |i, j| s[i][j]);
    let (s1, s2) = (m(sigma1), m(sigma2));
    let diff = DVector::from_column_slice(mu1) - DVector::from_column_slice(mu2);
    let sqrt_psd = |a: &DMatrix<f64>| {
        let sym = (a + a.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    };
    // tr sqrt(S1 S2) = tr sqrt(sqrt(S1) S2 sqrt(S1))
    let r1 = sqrt_psd(&s1);
    let cross = sqrt_psd(&(&r1 * &s2 * &r1)).trace();
    Ok(diff.dot(&diff) + s1.trace() + s2.trace() - 2.0 * cross)
}

/// Building count and built-area fraction of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSample {
    pub count: usize,
    pub density: f64,
}

/// Per-block building counts and densities.
pub fn block_samples(blocks: &[crate::blocks::Block], buildings: &[Building]) -> Vec<BlockSample> {
    let by_id: HashMap<&str, &Building> = buildings.iter().map(|b| (b.id.as_str(), b)).collect();
    blocks
        .iter()
        .map(|blk| {
            let area: f64 = blk
                .buildings
                .iter()
                .filter_map(|id| by_id.get(id.as_str()))
                .map(|b| b.footprint.area())
                .sum();
            BlockSample {
                count: blk.buildings.len(),
                density: area / blk.boundary.area(),
            }
        })
        .collect()
}

/// Every metric is optional; absent ones serialize as null.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub orientation_entropy: Option<f64>,
    pub traffic_convenience: Option<f64>,
    pub chamfer: Option<f64>,
    pub miou: Option<f64>,
    pub cl_dice: Option<f64>,
    pub wd_height: Option<f64>,
    pub wd_count: Option<f64>,
    pub wd_density: Option<f64>,
    pub validity_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub bearing_bins: usize,
    pub traffic: TrafficParams,
    pub sample_spacing_m: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            bearing_bins: DEFAULT_BEARING_BINS,
            traffic: TrafficParams::default(),
            sample_spacing_m: DEFAULT_SAMPLE_SPACING_M,
        }
    }
}

/// Artifacts of one layout; any may be absent.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    pub graph: Option<RoadGraph>,
    pub buildings: Option<Vec<Building>>,
    pub blocks: Option<Vec<crate::blocks::Block>>,
    pub tile: Option<crate::raster::RegionRaster>,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn tile_extent(t: &crate::raster::RegionRaster) -> Result<Polygon> {
    let a = t.transform.pixel_to_world(0.0, 0.0);
    let b = t.transform.pixel_to_world(t.width as f64, t.height as f64);
    Polygon::rect(
        Point2::new(a.x.min(b.x), a.y.min(b.y)),
        Point2::new(a.x.max(b.x), a.y.max(b.y)),
    )
}

/// Every metric computable from the artifacts present. Pairwise metrics
/// need the matching artifact on both sides.
pub fn compare_layouts(a: &Layout, reference: Option<&Layout>, params: &MetricParams) -> Result<MetricsReport> {
    let mut r = MetricsReport::default();
    if let Some(g) = &a.graph {
        r.orientation_entropy = defined(orientation_entropy(g, params.bearing_bins))?;
        r.traffic_convenience = defined(traffic_convenience(g, &params.traffic))?;
    }
    if let (Some(t), Some(bs)) = (&a.tile, &a.buildings) {
        r.validity_pct = Some(validity(bs, &tile_extent(t)?, &t.road_mask(), &t.transform)?);
    }
    let Some(b) = reference else {
        return Ok(r);
    };
    if let (Some(x), Some(y)) = (&a.graph, &b.graph) {
        r.chamfer = defined(graph_chamfer(x, y, params.sample_spacing_m))?;
    }
    if let (Some(x), Some(y)) = (&a.tile, &b.tile) {
        r.miou = Some(mean_iou(&x.road_mask(), &y.road_mask())?);
        r.cl_dice = Some(cl_dice(&x.road_mask(), &y.road_mask())?);
    }
    if let (Some(x), Some(y)) = (&a.buildings, &b.buildings) {
        let heights = |bs: &[Building]| bs.iter().filter_map(|b| b.height).collect::<Vec<f64>>();
        r.wd_height = defined(wasserstein_1d(&heights(x), &heights(y)))?;
        if let (Some(bx), Some(by)) = (&a.blocks, &b.blocks) {
            let (sx, sy) = (block_samples(bx, x), block_samples(by, y));
            let counts = |s: &[BlockSample]| s.iter().map(|v| v.count as f64).collect::<Vec<f64>>();
            let density = |s: &[BlockSample]| s.iter().map(|v| v.density).collect::<Vec<f64>>();
            r.wd_count = defined(wasserstein_1d(&counts(&sx), &counts(&sy)))?;
            r.wd_density = defined(wasserstein_1d(&density(&sx), &density(&sy)))?;
        }
    }
    Ok(r)
}
