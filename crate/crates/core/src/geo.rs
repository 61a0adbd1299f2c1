//! Geometry primitives, Web-Mercator projection and affine georeferencing.
//!
//! Planar coordinates are either WGS84 degrees (straight out of ingest) or
//! EPSG:3857 meters (everything downstream of projection). Lengths and areas
//! are planar in whichever system the inputs are in; the Mercator scale
//! factor is not corrected.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spherical Web-Mercator radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Latitude limit accepted by [`project_wgs84_to_mercator`].
pub const MERCATOR_MAX_LAT: f64 = 85.06;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(&self, other: &Point2) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2 { x, y }
    }
}

/// An open polyline with at least two points and no repeated consecutive
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct LineString {
    points: Vec<Point2>,
}

impl LineString {
    /// Builds a polyline, dropping repeated consecutive points. Fails if
    /// fewer than two distinct points remain or a coordinate is not finite.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate {p:?}")));
        }
        let mut dedup: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            if dedup.last() != Some(&p) {
                dedup.push(p);
            }
        }
        if dedup.len() < 2 {
            return Err(Error::Domain("linestring needs at least two distinct points".into()));
        }
        Ok(LineString { points: dedup })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn reversed(&self) -> LineString {
        let mut points = self.points.clone();
        points.reverse();
        LineString { points }
    }

    pub fn length(&self) -> f64 {
        polyline_length(self)
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Result<LineString> {
        LineString::new(self.points.iter().map(|p| f(*p)).collect())
    }
}

/// A polygon with a closed exterior ring (counter-clockwise) and closed
/// holes (clockwise). Rings always repeat their first vertex at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Point2>,
    holes: Vec<Vec<Point2>>,
}

impl Polygon {
    /// Normalizes ring closure and orientation. Fails if a ring has fewer
    /// than three distinct vertices or a coordinate is not finite.
    pub fn new(exterior: Vec<Point2>, holes: Vec<Vec<Point2>>) -> Result<Self> {
        let exterior = normalize_ring(exterior, true)?;
        let holes = holes
            .into_iter()
            .map(|h| normalize_ring(h, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(Polygon { exterior, holes })
    }

    /// Axis-aligned rectangle from two corners.
    pub fn rect(min: Point2, max: Point2) -> Result<Self> {
        Polygon::new(
            vec![min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[Point2] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point2>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point2]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    /// Exterior vertices without the closing duplicate.
    pub fn vertices(&self) -> &[Point2] {
        &self.exterior[..self.exterior.len() - 1]
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    /// Area centroid; falls back to the vertex mean for zero-area polygons.
    pub fn centroid(&self) -> Point2 {
        let mut a = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        // shift by the first vertex to keep the products small
        let o = self.exterior[0];
        for ring in self.rings() {
            for w in ring.windows(2) {
                let (x0, y0) = (w[0].x - o.x, w[0].y - o.y);
                let (x1, y1) = (w[1].x - o.x, w[1].y - o.y);
                let cross = x0 * y1 - x1 * y0;
                a += cross;
                cx += (x0 + x1) * cross;
                cy += (y0 + y1) * cross;
            }
        }
        if a.abs() <= f64::EPSILON * bbox_scale(&self.exterior).powi(2) {
            let vs = self.vertices();
            let n = vs.len() as f64;
            return Point2::new(
                vs.iter().map(|p| p.x).sum::<f64>() / n,
                vs.iter().map(|p| p.y).sum::<f64>() / n,
            );
        }
        Point2::new(o.x + cx / (3.0 * a), o.y + cy / (3.0 * a))
    }

    /// (min, max) corners of the exterior ring.
    pub fn bbox(&self) -> (Point2, Point2) {
        bbox(&self.exterior)
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Result<Polygon> {
        Polygon::new(
            self.exterior.iter().map(|p| f(*p)).collect(),
            self.holes.iter().map(|h| h.iter().map(|p| f(*p)).collect()).collect(),
        )
    }
}

fn normalize_ring(mut ring: Vec<Point2>, ccw: bool) -> Result<Vec<Point2>> {
    if let Some(p) = ring.iter().find(|p| !p.is_finite()) {
        return Err(Error::Domain(format!("non-finite coordinate {p:?}")));
    }
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    let mut distinct = ring.clone();
    distinct.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Domain(
            "polygon ring needs at least three distinct vertices".into(),
        ));
    }
    ring.push(ring[0]);
    let area = ring_signed_area(&ring);
    if (area < 0.0 && ccw) || (area > 0.0 && !ccw) {
        ring.reverse();
    }
    Ok(ring)
}

/// Shoelace signed area of a closed ring (positive when counter-clockwise).
pub fn ring_signed_area(ring: &[Point2]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut s = 0.0;
    for w in ring.windows(2) {
        s += (w[0].x - o.x) * (w[1].y - o.y) - (w[1].x - o.x) * (w[0].y - o.y);
    }
    s / 2.0
}

pub fn bbox(points: &[Point2]) -> (Point2, Point2) {
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    (min, max)
}

fn bbox_scale(points: &[Point2]) -> f64 {
    let (min, max) = bbox(points);
    (max.x - min.x).max(max.y - min.y).max(1e-300)
}

/// EPSG code of a supported coordinate reference system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CrsCode(u32);

impl CrsCode {
    pub const WGS84: CrsCode = CrsCode(4326);
    pub const WEB_MERCATOR: CrsCode = CrsCode(3857);

    pub fn new(epsg: u32) -> Result<Self> {
        match epsg {
            4326 | 3857 => Ok(CrsCode(epsg)),
            other => Err(Error::Config(format!("unsupported EPSG code {other}"))),
        }
    }

    pub fn epsg(&self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for CrsCode {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        CrsCode::new(v)
    }
}

impl From<CrsCode> for u32 {
    fn from(c: CrsCode) -> u32 {
        c.0
    }
}

/// Pixel (col, row) to world (x, y):
/// `x = a*col + b*row + c`, `y = d*col + e*row + f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
        e: 1.0,
        f: 0.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        AffineTransform { a, b, c, d, e, f }
    }

    /// North-up grid with square pixels whose top-left corner is `origin`.
    pub fn north_up(resolution: f64, origin: Point2) -> Self {
        AffineTransform::new(resolution, 0.0, origin.x, 0.0, -resolution, origin.y)
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        AffineTransform::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.e - self.b * self.d
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        det != 0.0 && det.is_finite()
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> Point2 {
        Point2::new(
            self.a * col + self.b * row + self.c,
            self.d * col + self.e * row + self.f,
        )
    }

    /// World coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> Point2 {
        self.pixel_to_world(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn world_to_pixel(&self, p: Point2) -> Result<(f64, f64)> {
        if !self.is_invertible() {
            return Err(Error::Config(format!(
                "affine transform {:?} is not invertible",
                self.to_array()
            )));
        }
        let det = self.determinant();
        let dx = p.x - self.c;
        let dy = p.y - self.f;
        let col = (self.e * dx - self.b * dy) / det;
        let row = (self.a * dy - self.d * dx) / det;
        Ok((col, row))
    }

    /// The transform of a sub-grid whose pixel (0, 0) is this grid's
    /// `(col_off, row_off)`.
    pub fn offset(&self, col_off: f64, row_off: f64) -> AffineTransform {
        let origin = self.pixel_to_world(col_off, row_off);
        AffineTransform::new(self.a, self.b, origin.x, self.d, self.e, origin.y)
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        AffineTransform::IDENTITY
    }
}

pub fn project_wgs84_to_mercator(lon: f64, lat: f64) -> Result<Point2> {
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Domain(format!("longitude {lon} outside [-180, 180]")));
    }
    if !lat.is_finite() || lat.abs() >= MERCATOR_MAX_LAT {
        return Err(Error::Domain(format!(
            "latitude {lat} outside the Web-Mercator band (|lat| < {MERCATOR_MAX_LAT})"
        )));
    }
    let x = EARTH_RADIUS_M * lon.to_radians();
    // ln(tan(pi/4 + lat/2)) written as atanh(sin(lat)), exact at the equator
    let y = EARTH_RADIUS_M * lat.to_radians().sin().atanh();
    Ok(Point2::new(x, y))
}

/// Inverse of [`project_wgs84_to_mercator`]; returns (lon, lat) in degrees.
pub fn unproject_mercator_to_wgs84(p: Point2) -> Point2 {
    let lon = (p.x / EARTH_RADIUS_M).to_degrees();
    let lat = (2.0 * (p.y / EARTH_RADIUS_M).exp().atan() - PI / 2.0).to_degrees();
    Point2::new(lon, lat)
}

/// Shoelace area of the exterior minus its holes, never negative.
pub fn polygon_area(p: &Polygon) -> f64 {
    let outer = ring_signed_area(&p.exterior).abs();
    let holes: f64 = p.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
    (outer - holes).max(0.0)
}

pub fn polyline_length(l: &LineString) -> f64 {
    l.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (vx, vy) = b.sub(&a);
    let (wx, wy) = p.sub(&a);
    let len2 = vx * vx + vy * vy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * vx, a.y + t * vy))
}

fn on_ring_boundary(pt: Point2, ring: &[Point2], tol: f64) -> bool {
    ring.windows(2).any(|w| point_segment_distance(pt, w[0], w[1]) <= tol)
}

/// Even-odd crossing test against one closed ring, boundary excluded.
fn ring_contains(pt: Point2, ring: &[Point2]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > pt.y) != (b.y > pt.y) {
            let x = a.x + (pt.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if pt.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Ray-casting containment. Points on the exterior or on a hole boundary
/// count as inside.
pub fn point_in_polygon(pt: Point2, poly: &Polygon) -> bool {
    let tol = 1e-9 * pt.x.abs().max(pt.y.abs()).max(1.0);
    if poly.rings().any(|r| on_ring_boundary(pt, r, tol)) {
        return true;
    }
    ring_contains(pt, &poly.exterior) && !poly.holes.iter().any(|h| ring_contains(pt, h))
}
