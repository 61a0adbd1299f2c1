//! Synthetic 2 km × 2 km city near 48° N, 11° E: a street grid, 40
//! buildings, a park, a canal, a point of interest and one unsupported
//! geometry, plus a 10 m height raster covering most buildings.
//!
//! Layout is in ground meters from the south-west corner and scaled by
//! 1 / cos(48°) into Web-Mercator meters.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::buildings::HeightRaster;
use crate::error::Result;
use crate::export::{write_rbt, RbtImage};
use crate::geo::{
    point_in_polygon, project_wgs84_to_mercator, unproject_mercator_to_wgs84, AffineTransform, CrsCode, Point2, Polygon,
};

pub const ORIGIN_LON: f64 = 11.0;
pub const ORIGIN_LAT: f64 = 48.0;
pub const EXTENT_M: f64 = 2000.0;
/// Ground spacing of the street grid.
pub const STREET_SPACING_M: f64 = 200.0;
pub const HEIGHT_RESOLUTION_M: f64 = 10.0;

pub struct SyntheticCity {
    pub features_geojson: Vec<u8>,
    pub heights_rbt: Vec<u8>,
    pub config_json: Vec<u8>,
}

struct Frame {
    origin: Point2,
    scale: f64,
}

impl Frame {
    fn new() -> Self {
        Frame {
            origin: project_wgs84_to_mercator(ORIGIN_LON, ORIGIN_LAT).expect("origin is in range"),
            scale: 1.0 / ORIGIN_LAT.to_radians().cos(),
        }
    }

    fn mercator(&self, x: f64, y: f64) -> Point2 {
        Point2::new(self.origin.x + x * self.scale, self.origin.y + y * self.scale)
    }

    fn lonlat(&self, x: f64, y: f64) -> Value {
        let p = unproject_mercator_to_wgs84(self.mercator(x, y));
        json!([p.x, p.y])
    }

    fn ring(&self, pts: &[(f64, f64)]) -> Value {
        let mut ring: Vec<Value> = pts.iter().map(|&(x, y)| self.lonlat(x, y)).collect();
        ring.push(ring[0].clone());
        Value::Array(ring)
    }
}

struct FixtureBuilding {
    id: String,
    min: (f64, f64),
    size: (f64, f64),
    height: f64,
    in_raster: bool,
}

fn buildings() -> Vec<FixtureBuilding> {
    let mut out = Vec::new();
    // one building per block in the 6x6 south-west blocks, kept clear of
    // the canal along y = 1000
    for i in 0..6 {
        for j in 0..6 {
            let (x0, y0) = (100.0 + STREET_SPACING_M * i as f64, 100.0 + STREET_SPACING_M * j as f64);
            out.push(FixtureBuilding {
                id: format!("b{:02}", out.len()),
                min: (x0 + 30.0, y0 + 30.0),
                size: (50.0, 40.0),
                height: 6.0 + 3.0 * ((i * 5 + j * 3) % 10) as f64,
                in_raster: (i + j) % 7 != 3,
            });
        }
    }
    for k in 0..3 {
        let c = 100.0 + STREET_SPACING_M * k as f64;
        out.push(FixtureBuilding {
            id: format!("b{:02}", out.len()),
            min: (c + 110.0, c + 110.0),
            size: (50.0, 50.0),
            height: 15.0 + 5.0 * k as f64,
            in_raster: true,
        });
    }
    // far from every raster-covered building: falls back to the default
    out.push(FixtureBuilding {
        id: format!("b{:02}", out.len()),
        min: (1770.0, 1770.0),
        size: (60.0, 60.0),
        height: 0.0,
        in_raster: false,
    });
    out
}

fn corners(b: &FixtureBuilding) -> [(f64, f64); 4] {
    let ((x, y), (w, h)) = (b.min, b.size);
    [(x, y), (x + w, y), (x + w, y + h), (x, y + h)]
}

fn feature(id: &str, tags: Value, geometry: Value) -> Value {
    json!({"type": "Feature", "id": id, "properties": tags, "geometry": geometry})
}

pub fn synthetic_city() -> Result<SyntheticCity> {
    let f = Frame::new();
    let mut features = Vec::new();
    let lines = (EXTENT_M / STREET_SPACING_M) as usize;
    for k in 0..lines {
        let c = STREET_SPACING_M / 2.0 + STREET_SPACING_M * k as f64;
        let highway = if k == 5 { "primary" } else { "residential" };
        features.push(feature(
            &format!("street_ns_{k}"),
            json!({"highway": highway, "name": format!("North-south {k}")}),
            json!({"type": "LineString", "coordinates": [f.lonlat(c, 0.0), f.lonlat(c, EXTENT_M)]}),
        ));
        features.push(feature(
            &format!("street_ew_{k}"),
            json!({"highway": highway}),
            json!({"type": "LineString", "coordinates": [f.lonlat(0.0, c), f.lonlat(EXTENT_M, c)]}),
        ));
    }
    features.push(feature(
        "canal",
        json!({"waterway": "canal"}),
        json!({"type": "LineString", "coordinates": [f.lonlat(1300.0, 1000.0), f.lonlat(1900.0, 1000.0)]}),
    ));
    features.push(feature(
        "park",
        json!({"landuse": "grass", "name": "Park"}),
        json!({"type": "Polygon", "coordinates": [f.ring(&[(1330.0, 1330.0), (1470.0, 1330.0), (1470.0, 1470.0), (1330.0, 1470.0)])]}),
    ));
    features.push(feature(
        "school",
        json!({"amenity": "school"}),
        json!({"type": "Point", "coordinates": f.lonlat(1500.0, 300.0)}),
    ));
    features.push(feature(
        "collection",
        json!({"building": "yes"}),
        json!({"type": "GeometryCollection", "geometries": []}),
    ));
    let bs = buildings();
    for (k, b) in bs.iter().enumerate() {
        let kind = if k % 4 == 0 { "apartments" } else { "yes" };
        features.push(feature(
            &b.id,
            json!({"building": kind}),
            json!({"type": "Polygon", "coordinates": [f.ring(&corners(b))]}),
        ));
    }
    let mut features_geojson =
        serde_json::to_vec(&json!({"type": "FeatureCollection", "features": features})).expect("fixture serializes");
    features_geojson.push(b'\n');

    // height raster over the whole extent, invalid (0) outside covered footprints
    let lo = f.mercator(0.0, 0.0);
    let hi = f.mercator(EXTENT_M, EXTENT_M);
    let res = HEIGHT_RESOLUTION_M;
    let x0 = (lo.x / res).floor() * res;
    let y1 = (hi.y / res).ceil() * res;
    let width = ((hi.x - x0) / res).ceil() as usize;
    let height = ((y1 - lo.y) / res).ceil() as usize;
    let transform = AffineTransform::north_up(res, Point2::new(x0, y1));
    let covered: Vec<(Polygon, f64)> = bs
        .iter()
        .filter(|b| b.in_raster)
        .map(|b| {
            let ring = corners(b).iter().map(|&(x, y)| f.mercator(x, y)).collect();
            (
                Polygon::new(ring, vec![]).expect("fixture footprint is valid"),
                b.height,
            )
        })
        .collect();
    let mut values = vec![0.0f32; width * height];
    for row in 0..height {
        for col in 0..width {
            let c = transform.pixel_center(col, row);
            if let Some((_, h)) = covered.iter().find(|(p, _)| point_in_polygon(c, p)) {
                values[row * width + col] = *h as f32;
            }
        }
    }
    let raster = HeightRaster::new(width, height, values, transform, CrsCode::WEB_MERCATOR)?;
    let heights_rbt = write_rbt(&RbtImage::from_height_raster(&raster))?;

    let mut config_json = serde_json::to_vec_pretty(&json!({
        "features": "features.geojson",
        "height_raster": "heights.rbt",
        "out_dir": "out",
    }))
    .expect("config serializes");
    config_json.push(b'\n');
    Ok(SyntheticCity {
        features_geojson,
        heights_rbt,
        config_json,
    })
}

/// Writes `features.geojson`, `heights.rbt` and `config.json` into `dir`.
pub fn write_synthetic_city(dir: &Path) -> Result<()> {
    let city = synthetic_city()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("features.geojson"), &city.features_geojson)?;
    fs::write(dir.join("heights.rbt"), &city.heights_rbt)?;
    fs::write(dir.join("config.json"), &city.config_json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_buildings_one_isolated() {
        let bs = buildings();
        assert_eq!(bs.len(), 40);
        let last = bs.last().unwrap();
        let centroid = |b: &FixtureBuilding| (b.min.0 + b.size.0 / 2.0, b.min.1 + b.size.1 / 2.0);
        let (cx, cy) = centroid(last);
        let scale = 1.0 / ORIGIN_LAT.to_radians().cos();
        for b in bs.iter().filter(|b| b.in_raster) {
            let (x, y) = centroid(b);
            assert!(((x - cx).hypot(y - cy)) * scale > 300.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synthetic_city().unwrap();
        let b = synthetic_city().unwrap();
        assert_eq!(a.features_geojson, b.features_geojson);
        assert_eq!(a.heights_rbt, b.heights_rbt);
    }
}
