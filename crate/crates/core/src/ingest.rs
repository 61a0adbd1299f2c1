//! Feature-collection parsing and tag classification.
//!
//! Input documents are GeoJSON-shaped `FeatureCollection`s whose
//! `properties` object carries the OSM tag map.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::{project_wgs84_to_mercator, LineString, Point2, Polygon};

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(Point2),
    LineString(LineString),
    Polygon(Polygon),
}

impl Geometry {
    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Result<Geometry> {
        Ok(match self {
            Geometry::Point(p) => Geometry::Point(f(*p)),
            Geometry::LineString(l) => Geometry::LineString(l.map(f)?),
            Geometry::Polygon(p) => Geometry::Polygon(p.map(f)?),
        })
    }

    fn try_map(&self, f: impl Fn(Point2) -> Result<Point2>) -> Result<Geometry> {
        Ok(match self {
            Geometry::Point(p) => Geometry::Point(f(*p)?),
            Geometry::LineString(l) => Geometry::LineString(LineString::new(
                l.points().iter().map(|p| f(*p)).collect::<Result<_>>()?,
            )?),
            Geometry::Polygon(p) => Geometry::Polygon(Polygon::new(
                p.exterior().iter().map(|q| f(*q)).collect::<Result<_>>()?,
                p.holes()
                    .iter()
                    .map(|h| h.iter().map(|q| f(*q)).collect::<Result<_>>())
                    .collect::<Result<_>>()?,
            )?),
        })
    }
}

pub type Tags = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub geometry: Geometry,
    pub tags: Tags,
    pub source_id: String,
}

impl Feature {
    /// Projects WGS84 lon/lat coordinates to EPSG:3857 meters.
    pub fn to_mercator(&self) -> Result<Feature> {
        Ok(Feature {
            geometry: self.geometry.try_map(|p| project_wgs84_to_mercator(p.x, p.y))?,
            tags: self.tags.clone(),
            source_id: self.source_id.clone(),
        })
    }
}

/// Semantic channel a feature is rendered into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureClass {
    RoadP,
    RoadS,
    Water,
    Green,
    Building,
}

impl FeatureClass {
    /// First-match priority order.
    pub const ALL: [FeatureClass; 5] = [
        FeatureClass::RoadP,
        FeatureClass::RoadS,
        FeatureClass::Water,
        FeatureClass::Green,
        FeatureClass::Building,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureClass::RoadP => "RoadP",
            FeatureClass::RoadS => "RoadS",
            FeatureClass::Water => "Water",
            FeatureClass::Green => "Green",
            FeatureClass::Building => "Building",
        }
    }

    pub fn is_road(&self) -> bool {
        matches!(self, FeatureClass::RoadP | FeatureClass::RoadS)
    }
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature class `{s}`")))
    }
}

/// Key/value tables used by [`classify_with`]. A key mapped to an empty
/// value list matches any value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagTables {
    pub road_p: BTreeMap<String, Vec<String>>,
    pub road_s: BTreeMap<String, Vec<String>>,
    pub water: BTreeMap<String, Vec<String>>,
    pub green: BTreeMap<String, Vec<String>>,
    pub building: BTreeMap<String, Vec<String>>,
}

fn table(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    entries
        .iter()
        .map(|(k, vs)| (k.to_string(), vs.iter().map(|v| v.to_string()).collect()))
        .collect()
}

impl Default for TagTables {
    fn default() -> Self {
        TagTables {
            road_p: table(&[("highway", &["motorway", "trunk", "primary"])]),
            road_s: table(&[("highway", &["secondary", "tertiary", "residential", "unclassified"])]),
            water: table(&[
                ("water", &["reservoir", "river"]),
                ("natural", &["water", "wetland", "glacier"]),
                ("leisure", &["nature reserve"]),
                (
                    "waterway",
                    &[
                        "riverbank",
                        "dock",
                        "canal",
                        "drain",
                        "ditch",
                        "stream",
                        "brook",
                        "wadi",
                        "drystream",
                    ],
                ),
            ]),
            green: table(&[
                (
                    "landuse",
                    &["forest", "farmland", "allotments", "meadow", "scrub", "grass"],
                ),
                ("natural", &["wood"]),
                ("leisure", &["garden"]),
            ]),
            building: table(&[("building", &[])]),
        }
    }
}

impl TagTables {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| json_parse_error(bytes, &e))
    }

    fn table_for(&self, class: FeatureClass) -> &BTreeMap<String, Vec<String>> {
        match class {
            FeatureClass::RoadP => &self.road_p,
            FeatureClass::RoadS => &self.road_s,
            FeatureClass::Water => &self.water,
            FeatureClass::Green => &self.green,
            FeatureClass::Building => &self.building,
        }
    }
}

fn matches_table(tags: &Tags, table: &BTreeMap<String, Vec<String>>) -> bool {
    table.iter().any(|(key, values)| match tags.get(key) {
        Some(v) => values.is_empty() || values.iter().any(|allowed| allowed == v),
        None => false,
    })
}

/// Classifies a tag map with the built-in tables.
pub fn classify_feature(tags: &Tags) -> Option<FeatureClass> {
    thread_local! {
        static DEFAULT: TagTables = TagTables::default();
    }
    DEFAULT.with(|t| classify_with(tags, t))
}

pub fn classify_with(tags: &Tags, tables: &TagTables) -> Option<FeatureClass> {
    FeatureClass::ALL
        .into_iter()
        .find(|&c| matches_table(tags, tables.table_for(c)))
}

/// Features dropped during parsing, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl SkipReport {
    fn skip(&mut self, reason: &str) {
        self.skipped += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCollection {
    pub features: Vec<Feature>,
    pub skips: SkipReport,
}

fn json_parse_error(bytes: &[u8], e: &serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    }
}

/// Converts serde_json's 1-based (line, column) into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for _ in 1..line {
        match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return bytes.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

fn structure_error(message: impl Into<String>) -> Error {
    Error::Parse {
        offset: 0,
        message: message.into(),
    }
}

/// Parses a feature collection. Multi-part geometries are flattened into
/// one feature per part sharing the source id; unsupported or invalid
/// geometries are skipped and counted.
pub fn parse_feature_collection(bytes: &[u8]) -> Result<ParsedCollection> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| json_parse_error(bytes, &e))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| structure_error("document is not a JSON object"))?;
    if obj.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(structure_error("`type` is not \"FeatureCollection\""));
    }
    let features = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| structure_error("`features` is not an array"))?;

    let mut out = ParsedCollection::default();
    for (index, feat) in features.iter().enumerate() {
        let Some(feat) = feat.as_object() else {
            out.skips.skip("not_an_object");
            continue;
        };
        let source_id = match feat.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("f{index}"),
        };
        let tags = feat
            .get("properties")
            .and_then(Value::as_object)
            .map(tags_from_properties)
            .unwrap_or_default();
        let geometry = match feat.get("geometry") {
            None | Some(Value::Null) => {
                out.skips.skip("null_geometry");
                continue;
            }
            Some(g) => g,
        };
        match parse_geometry(geometry) {
            Ok(parts) => out.features.extend(parts.into_iter().map(|geometry| Feature {
                geometry,
                tags: tags.clone(),
                source_id: source_id.clone(),
            })),
            Err(reason) => out.skips.skip(&reason),
        }
    }
    Ok(out)
}

fn tags_from_properties(props: &serde_json::Map<String, Value>) -> Tags {
    props
        .iter()
        .filter(|(k, _)| !k.is_empty())
        .filter_map(|(k, v)| {
            let s = match v {
                Value::Null => return None,
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            Some((k.clone(), s))
        })
        .collect()
}

fn parse_position(v: &Value) -> std::result::Result<Point2, String> {
    let arr = v.as_array().ok_or("invalid_geometry")?;
    if arr.len() < 2 {
        return Err("invalid_geometry".into());
    }
    let x = arr[0].as_f64().ok_or("invalid_geometry")?;
    let y = arr[1].as_f64().ok_or("invalid_geometry")?;
    Ok(Point2::new(x, y))
}

fn parse_positions(v: &Value) -> std::result::Result<Vec<Point2>, String> {
    v.as_array()
        .ok_or("invalid_geometry")?
        .iter()
        .map(parse_position)
        .collect()
}

fn parse_linestring(v: &Value) -> std::result::Result<LineString, String> {
    LineString::new(parse_positions(v)?).map_err(|_| "invalid_geometry".into())
}

fn parse_polygon(v: &Value) -> std::result::Result<Polygon, String> {
    let rings = v.as_array().ok_or("invalid_geometry")?;
    let (first, rest) = rings.split_first().ok_or("invalid_geometry")?;
    let exterior = parse_positions(first)?;
    let holes = rest
        .iter()
        .map(parse_positions)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Polygon::new(exterior, holes).map_err(|_| "invalid_geometry".into())
}

fn parse_geometry(g: &Value) -> std::result::Result<Vec<Geometry>, String> {
    let kind = g.get("type").and_then(Value::as_str).ok_or("invalid_geometry")?;
    let coords = || g.get("coordinates").ok_or_else(|| "invalid_geometry".to_string());
    let parts =
        |c: &Value| -> std::result::Result<Vec<Value>, String> { Ok(c.as_array().ok_or("invalid_geometry")?.clone()) };
    match kind {
        "Point" => Ok(vec![Geometry::Point(parse_position(coords()?)?)]),
        "MultiPoint" => parts(coords()?)?
            .iter()
            .map(|p| parse_position(p).map(Geometry::Point))
            .collect(),
        "LineString" => Ok(vec![Geometry::LineString(parse_linestring(coords()?)?)]),
        "MultiLineString" => parts(coords()?)?
            .iter()
            .map(|l| parse_linestring(l).map(Geometry::LineString))
            .collect(),
        "Polygon" => Ok(vec![Geometry::Polygon(parse_polygon(coords()?)?)]),
        "MultiPolygon" => parts(coords()?)?
            .iter()
            .map(|p| parse_polygon(p).map(Geometry::Polygon))
            .collect(),
        other => Err(format!("unsupported_geometry:{other}")),
    }
}
