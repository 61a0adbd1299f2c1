//! Building footprints and height enrichment from a height raster with
//! neighbor and default fallbacks.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{point_in_polygon, AffineTransform, CrsCode, Point2, Polygon};
use crate::ingest::{classify_with, Feature, FeatureClass, Geometry, TagTables};

pub const DEFAULT_RADIUS_M: f64 = 300.0;
pub const DEFAULT_HEIGHT_M: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeightSource {
    Raster,
    Neighbor,
    Default,
}

impl HeightSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeightSource::Raster => "Raster",
            HeightSource::Neighbor => "Neighbor",
            HeightSource::Default => "Default",
        }
    }
}

impl std::str::FromStr for HeightSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Raster" => Ok(HeightSource::Raster),
            "Neighbor" => Ok(HeightSource::Neighbor),
            "Default" => Ok(HeightSource::Default),
            other => Err(Error::format("height_source", format!("unknown source `{other}`"))),
        }
    }
}

/// Footprint in EPSG:3857. `height` and `height_source` are both set or
/// both unset.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub id: String,
    pub footprint: Polygon,
    pub height: Option<f64>,
    pub height_source: Option<HeightSource>,
}

impl Building {
    pub fn new(id: impl Into<String>, footprint: Polygon) -> Self {
        Building {
            id: id.into(),
            footprint,
            height: None,
            height_source: None,
        }
    }

    pub fn with_height(mut self, height: f64, source: HeightSource) -> Self {
        self.height = Some(height);
        self.height_source = Some(source);
        self
    }

    pub fn centroid(&self) -> Point2 {
        self.footprint.centroid()
    }
}

/// Collects building polygons from projected features. Parts of one
/// multi-geometry share a source id and get `#k` suffixes from the second
/// part on.
pub fn buildings_from_features(features: &[Feature], tables: &TagTables) -> Vec<Building> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for f in features {
        let Geometry::Polygon(poly) = &f.geometry else {
            continue;
        };
        if classify_with(&f.tags, tables) != Some(FeatureClass::Building) || poly.area() <= 0.0 {
            continue;
        }
        let k = seen.entry(f.source_id.as_str()).or_default();
        let id = if *k == 0 {
            f.source_id.clone()
        } else {
            format!("{}#{}", f.source_id, k)
        };
        *k += 1;
        out.push(Building::new(id, poly.clone()));
    }
    out
}

/// Single-band height raster in meters. Values ≤ 0 or NaN are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub transform: AffineTransform,
    pub crs: CrsCode,
}

impl HeightRaster {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f32>,
        transform: AffineTransform,
        crs: CrsCode,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::format(
                "payload",
                format!("{} values for a {width}x{height} raster", values.len()),
            ));
        }
        if !transform.is_invertible() {
            return Err(Error::Config("height raster transform is not invertible".into()));
        }
        Ok(HeightRaster {
            width,
            height,
            values,
            transform,
            crs,
        })
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn is_valid(v: f32) -> bool {
        v > 0.0 && v.is_finite()
    }

    /// Pixel index range whose centers may fall inside the world bbox.
    fn pixel_window(&self, min: Point2, max: Point2) -> Option<(usize, usize, usize, usize)> {
        let corners = [
            Point2::new(min.x, min.y),
            Point2::new(max.x, min.y),
            Point2::new(min.x, max.y),
            Point2::new(max.x, max.y),
        ];
        let (mut c0, mut c1, mut r0, mut r1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in corners {
            let (c, r) = self.transform.world_to_pixel(p).ok()?;
            c0 = c0.min(c);
            c1 = c1.max(c);
            r0 = r0.min(r);
            r1 = r1.max(r);
        }
        let lo = |v: f64| (v - 0.5).floor().max(0.0) as usize;
        let hi = |v: f64, n: usize| ((v - 0.5).ceil() + 1.0).clamp(0.0, n as f64) as usize;
        let (cs, ce) = (lo(c0), hi(c1, self.width));
        let (rs, re) = (lo(r0), hi(r1, self.height));
        (cs < ce && rs < re).then_some((cs, ce, rs, re))
    }
}

/// Mean of the valid raster values at pixels whose centers lie inside the
/// footprint; `None` when there are none.
pub fn sample_height(footprint: &Polygon, raster: &HeightRaster) -> Option<f64> {
    let (min, max) = footprint.bbox();
    let (cs, ce, rs, re) = raster.pixel_window(min, max)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for row in rs..re {
        for col in cs..ce {
            let v = raster.get(col, row);
            if HeightRaster::is_valid(v) && point_in_polygon(raster.transform.pixel_center(col, row), footprint) {
                sum += v as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

impl Aggregation {
    fn apply(&self, values: &mut [f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FillParams {
    pub radius_m: f64,
    pub default_height_m: f64,
    pub aggregation: Aggregation,
}

impl Default for FillParams {
    fn default() -> Self {
        FillParams {
            radius_m: DEFAULT_RADIUS_M,
            default_height_m: DEFAULT_HEIGHT_M,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Gives every building without a height one derived from the raster-sourced
/// heights of buildings within `radius_m` (centroid to centroid), or the
/// default height when there are none. Estimated heights never feed other
/// estimates.
pub fn fill_missing_heights(buildings: &[Building], params: &FillParams) -> Vec<Building> {
    let cell = params.radius_m.max(1.0);
    let cell_of = |p: Point2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: BTreeMap<(i64, i64), Vec<(Point2, f64)>> = BTreeMap::new();
    for b in buildings {
        if let (Some(h), Some(HeightSource::Raster)) = (b.height, b.height_source) {
            let c = b.centroid();
            grid.entry(cell_of(c)).or_default().push((c, h));
        }
    }
    buildings
        .par_iter()
        .map(|b| {
            if b.height.is_some() {
                return b.clone();
            }
            let c = b.centroid();
            let (gx, gy) = cell_of(c);
            let mut pool = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(v) = grid.get(&(gx + dx, gy + dy)) {
                        pool.extend(
                            v.iter()
                                .filter(|(p, _)| p.distance(&c) <= params.radius_m)
                                .map(|(_, h)| *h),
                        );
                    }
                }
            }
            if pool.is_empty() {
                b.clone().with_height(params.default_height_m, HeightSource::Default)
            } else {
                let h = params.aggregation.apply(&mut pool);
                b.clone().with_height(h, HeightSource::Neighbor)
            }
        })
        .collect()
}

/// Samples the raster for every building, then fills the rest.
pub fn enrich_heights(buildings: &[Building], raster: Option<&HeightRaster>, params: &FillParams) -> Vec<Building> {
    let sampled: Vec<Building> = buildings
        .par_iter()
        .map(|b| {
            let mut b = b.clone();
            b.height = None;
            b.height_source = None;
            if let Some(h) = raster.and_then(|r| sample_height(&b.footprint, r)) {
                b = b.with_height(h, HeightSource::Raster);
            }
            b
        })
        .collect();
    fill_missing_heights(&sampled, params)
}
