//! Byte-deterministic artifact formats: `.rbt` raster containers, graph
//! JSON, building and block GeoJSON, and a minimal OpenDRIVE document.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::blocks::Block;
use crate::buildings::{Building, HeightRaster};
use crate::error::{Error, Result};
use crate::geo::{AffineTransform, CrsCode, LineString, Point2, Polygon};
use crate::raster::{Channel, RegionRaster, CHANNELS};
use crate::roadgraph::{NodeId, RoadClass, RoadGraph};

pub const RBT_MAGIC: &[u8; 4] = b"RBUS";
pub const RBT_VERSION: u16 = 1;

/// Multi-channel f32 raster as stored in an `.rbt` container.
#[derive(Debug, Clone, PartialEq)]
pub struct RbtImage {
    pub width: usize,
    pub height: usize,
    pub channel_names: Vec<String>,
    pub transform: AffineTransform,
    pub crs: CrsCode,
    /// One row-major plane per channel.
    pub planes: Vec<Vec<f32>>,
}

/// Header fields in their on-disk order.
#[derive(Serialize, Deserialize)]
struct RbtHeader {
    width: usize,
    height: usize,
    channels: usize,
    channel_names: Vec<String>,
    transform: [f64; 6],
    epsg: u32,
}

impl RbtImage {
    pub fn from_region(r: &RegionRaster) -> Self {
        RbtImage {
            width: r.width,
            height: r.height,
            channel_names: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
            transform: r.transform,
            crs: r.crs,
            planes: r.planes.clone(),
        }
    }

    /// Requires the six standard channels in their standard order.
    pub fn into_region(self) -> Result<RegionRaster> {
        let expected: Vec<&str> = Channel::ALL.iter().map(|c| c.name()).collect();
        if self.channel_names != expected {
            return Err(Error::format(
                "channel_names",
                format!("expected {expected:?}, found {:?}", self.channel_names),
            ));
        }
        Ok(RegionRaster {
            width: self.width,
            height: self.height,
            planes: self.planes,
            transform: self.transform,
            crs: self.crs,
        })
    }

    pub fn from_height_raster(h: &HeightRaster) -> Self {
        RbtImage {
            width: h.width,
            height: h.height,
            channel_names: vec!["height".into()],
            transform: h.transform,
            crs: h.crs,
            planes: vec![h.values.clone()],
        }
    }

    /// Uses the channel named `height`, or the only channel.
    pub fn into_height_raster(self) -> Result<HeightRaster> {
        let idx = match self.channel_names.iter().position(|n| n == "height") {
            Some(i) => i,
            None if self.planes.len() == 1 => 0,
            None => return Err(Error::format("channel_names", "no `height` channel")),
        };
        let RbtImage {
            width,
            height,
            transform,
            crs,
            mut planes,
            ..
        } = self;
        HeightRaster::new(width, height, planes.swap_remove(idx), transform, crs)
    }
}

pub fn write_rbt(img: &RbtImage) -> Result<Vec<u8>> {
    let n = img.width * img.height;
    if img.planes.len() != img.channel_names.len() || img.planes.iter().any(|p| p.len() != n) {
        return Err(Error::format(
            "payload",
            "plane count or size does not match the header",
        ));
    }
    let header = serde_json::to_vec(&RbtHeader {
        width: img.width,
        height: img.height,
        channels: img.planes.len(),
        channel_names: img.channel_names.clone(),
        transform: img.transform.to_array(),
        epsg: img.crs.epsg(),
    })
    .map_err(|e| Error::format("header", e.to_string()))?;
    let mut out = Vec::with_capacity(10 + header.len() + 4 * n * img.planes.len());
    out.extend_from_slice(RBT_MAGIC);
    out.extend_from_slice(&RBT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for plane in &img.planes {
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_rbt(bytes: &[u8]) -> Result<RbtImage> {
    if bytes.len() < 4 || &bytes[..4] != RBT_MAGIC {
        return Err(Error::format("magic", "not an RBUS container"));
    }
    if bytes.len() < 10 {
        return Err(Error::format("header_len", "truncated before the header length"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RBT_VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = &bytes[10..];
    if body.len() < header_len {
        return Err(Error::format("header_len", "header extends past the end of the file"));
    }
    let h: RbtHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| Error::format("header", e.to_string()))?;
    if h.channel_names.len() != h.channels {
        return Err(Error::format("channel_names", "length differs from `channels`"));
    }
    let crs = CrsCode::new(h.epsg).map_err(|e| Error::format("epsg", e.to_string()))?;
    let transform = AffineTransform::from_array(h.transform);
    if !transform.is_invertible() {
        return Err(Error::format("transform", "transform is not invertible"));
    }
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| Error::format("width", "raster size overflows"))?;
    let payload = &body[header_len..];
    let expected = n
        .checked_mul(4 * h.channels)
        .ok_or_else(|| Error::format("channels", "payload size overflows"))?;
    if payload.len() != expected {
        return Err(Error::format(
            "payload",
            format!("expected {expected} bytes, found {}", payload.len()),
        ));
    }
    let planes = payload
        .chunks_exact(4 * n.max(1))
        .take(h.channels)
        .map(|c| {
            c.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect::<Vec<Vec<f32>>>();
    let planes = if n == 0 { vec![Vec::new(); h.channels] } else { planes };
    Ok(RbtImage {
        width: h.width,
        height: h.height,
        channel_names: h.channel_names,
        transform,
        crs,
        planes,
    })
}

pub fn write_region_rbt(r: &RegionRaster) -> Result<Vec<u8>> {
    debug_assert_eq!(r.planes.len(), CHANNELS);
    write_rbt(&RbtImage::from_region(r))
}

pub fn read_region_rbt(bytes: &[u8]) -> Result<RegionRaster> {
    read_rbt(bytes)?.into_region()
}

/// 17 significant digits: exact for every f64.
fn fmt_f64(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

/// Compact JSON with sorted keys and fixed float formatting.
pub fn write_graph_json(g: &RoadGraph) -> Vec<u8> {
    let mut s = String::from("{\"edges\":[");
    for (i, e) in g.edges().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{{\"class\":\"{}\",\"geometry\":[", e.class.as_str()).unwrap();
        for (j, p) in e.geometry.points().iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push('[');
            fmt_f64(&mut s, p.x);
            s.push(',');
            fmt_f64(&mut s, p.y);
            s.push(']');
        }
        write!(s, "],\"u\":{},\"v\":{}}}", e.u, e.v).unwrap();
    }
    s.push_str("],\"nodes\":[");
    for (i, (id, p)) in g.nodes().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{{\"id\":{id},\"x\":").unwrap();
        fmt_f64(&mut s, p.x);
        s.push_str(",\"y\":");
        fmt_f64(&mut s, p.y);
        s.push('}');
    }
    s.push_str("]}");
    s.into_bytes()
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, path: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::format(format!("{path}.{name}"), "missing"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::format(path, "expected a finite number"))
}

fn as_id(v: &Value, path: &str) -> Result<NodeId> {
    v.as_u64()
        .and_then(|x| NodeId::try_from(x).ok())
        .ok_or_else(|| Error::format(path, "expected a node id"))
}

pub fn read_graph_json(bytes: &[u8]) -> Result<RoadGraph> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let root = doc.as_object().ok_or_else(|| Error::format("", "expected an object"))?;
    let array = |name: &str| {
        field(root, name, "")?
            .as_array()
            .ok_or_else(|| Error::format(name, "expected an array"))
    };
    let mut g = RoadGraph::new();
    for (i, n) in array("nodes")?.iter().enumerate() {
        let path = format!("nodes[{i}]");
        let o = n
            .as_object()
            .ok_or_else(|| Error::format(&path, "expected an object"))?;
        let id = as_id(field(o, "id", &path)?, &format!("{path}.id"))?;
        if g.contains_node(id) {
            return Err(Error::format(format!("{path}.id"), format!("duplicate node {id}")));
        }
        let x = as_f64(field(o, "x", &path)?, &format!("{path}.x"))?;
        let y = as_f64(field(o, "y", &path)?, &format!("{path}.y"))?;
        g.add_node(id, Point2::new(x, y));
    }
    for (i, e) in array("edges")?.iter().enumerate() {
        let path = format!("edges[{i}]");
        let o = e
            .as_object()
            .ok_or_else(|| Error::format(&path, "expected an object"))?;
        let u = as_id(field(o, "u", &path)?, &format!("{path}.u"))?;
        let v = as_id(field(o, "v", &path)?, &format!("{path}.v"))?;
        for (end, id) in [("u", u), ("v", v)] {
            if !g.contains_node(id) {
                return Err(Error::format(
                    format!("{path}.{end}"),
                    format!("dangling endpoint {id}"),
                ));
            }
        }
        let class: RoadClass = field(o, "class", &path)?
            .as_str()
            .ok_or_else(|| Error::format(format!("{path}.class"), "expected a string"))?
            .parse()
            .map_err(|_| Error::format(format!("{path}.class"), "unknown road class"))?;
        let gpath = format!("{path}.geometry");
        let pts = field(o, "geometry", &path)?
            .as_array()
            .ok_or_else(|| Error::format(&gpath, "expected an array"))?
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let ppath = format!("{gpath}[{j}]");
                match p.as_array().map(Vec::as_slice) {
                    Some([x, y]) => Ok(Point2::new(as_f64(x, &ppath)?, as_f64(y, &ppath)?)),
                    _ => Err(Error::format(&ppath, "expected [x, y]")),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let line = LineString::new(pts).map_err(|e| Error::format(&gpath, e.to_string()))?;
        g.add_edge(u, v, class, line).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(&path, message),
            other => other,
        })?;
    }
    Ok(g)
}

fn ring_coords(ring: &[Point2]) -> Value {
    Value::Array(ring.iter().map(|p| json!([p.x, p.y])).collect())
}

fn polygon_geometry(p: &Polygon) -> Value {
    json!({
        "type": "Polygon",
        "coordinates": p.rings().map(ring_coords).collect::<Vec<_>>(),
    })
}

/// Integral values print without a fractional part.
fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        json!(v as i64)
    } else {
        json!(v)
    }
}

fn collection(features: Vec<Value>) -> Vec<u8> {
    let mut out = serde_json::to_vec(&json!({
        "type": "FeatureCollection",
        "features": features,
    }))
    .expect("GeoJSON values serialize");
    out.push(b'\n');
    out
}

/// Buildings sorted by id, with `id`, `height` and `height_source`
/// properties (null when unknown).
pub fn write_geojson_buildings(buildings: &[Building]) -> Vec<u8> {
    let mut sorted: Vec<&Building> = buildings.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    collection(
        sorted
            .into_iter()
            .map(|b| {
                json!({
                    "type": "Feature",
                    "id": b.id,
                    "properties": {
                        "id": b.id,
                        "height": b.height.map(number),
                        "height_source": b.height_source.map(|s| s.as_str()),
                    },
                    "geometry": polygon_geometry(&b.footprint),
                })
            })
            .collect(),
    )
}

/// Blocks sorted by id, with `block_id` and `building_ids` properties.
pub fn write_geojson_blocks(blocks: &[Block]) -> Vec<u8> {
    let mut sorted: Vec<&Block> = blocks.iter().collect();
    sorted.sort_by_key(|b| b.block_id);
    collection(
        sorted
            .into_iter()
            .map(|b| {
                json!({
                    "type": "Feature",
                    "id": b.block_id,
                    "properties": {
                        "block_id": b.block_id,
                        "building_ids": b.buildings,
                    },
                    "geometry": polygon_geometry(&b.boundary),
                })
            })
            .collect(),
    )
}

/// Features in input order, tags as properties.
pub fn write_geojson_features(features: &[crate::ingest::Feature]) -> Vec<u8> {
    use crate::ingest::Geometry;
    collection(
        features
            .iter()
            .map(|f| {
                let geometry = match &f.geometry {
                    Geometry::Point(p) => json!({"type": "Point", "coordinates": [p.x, p.y]}),
                    Geometry::LineString(l) => json!({"type": "LineString", "coordinates": ring_coords(l.points())}),
                    Geometry::Polygon(p) => polygon_geometry(p),
                };
                json!({
                    "type": "Feature",
                    "id": f.source_id,
                    "properties": f.tags,
                    "geometry": geometry,
                })
            })
            .collect(),
    )
}

/// Reads buildings written by [`write_geojson_buildings`].
pub fn read_geojson_buildings(bytes: &[u8]) -> Result<Vec<Building>> {
    let parsed = crate::ingest::parse_feature_collection(bytes)?;
    parsed
        .features
        .into_iter()
        .map(|f| {
            let crate::ingest::Geometry::Polygon(p) = f.geometry else {
                return Err(Error::format(
                    "geometry",
                    format!("building {} is not a polygon", f.source_id),
                ));
            };
            let mut b = Building::new(f.tags.get("id").cloned().unwrap_or(f.source_id), p);
            if let Some(h) = f.tags.get("height") {
                let h: f64 = h
                    .parse()
                    .map_err(|_| Error::format("height", format!("bad height {h:?}")))?;
                let src = match f.tags.get("height_source") {
                    Some(s) => s.parse()?,
                    None => crate::buildings::HeightSource::Raster,
                };
                b = b.with_height(h, src);
            }
            Ok(b)
        })
        .collect()
}

/// Reads block outlines and building ids written by [`write_geojson_blocks`].
/// The returned blocks carry no cycle.
pub fn read_geojson_blocks(bytes: &[u8]) -> Result<Vec<Block>> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: 0,
        message: e.to_string(),
    })?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format("features", "expected an array"))?;
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let path = format!("features[{i}]");
        let props = f
            .get("properties")
            .ok_or_else(|| Error::format(format!("{path}.properties"), "missing"))?;
        let block_id = props
            .get("block_id")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::format(format!("{path}.properties.block_id"), "expected an integer"))?;
        let buildings = props
            .get("building_ids")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::format(format!("{path}.properties.building_ids"), "expected an array"))?
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::format(format!("{path}.properties.building_ids"), "expected strings"))?;
        let rings = f
            .pointer("/geometry/coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::format(format!("{path}.geometry"), "expected polygon coordinates"))?;
        let ring = |v: &Value| -> Result<Vec<Point2>> {
            v.as_array()
                .ok_or_else(|| Error::format(format!("{path}.geometry"), "bad ring"))?
                .iter()
                .map(|p| match p.as_array().map(Vec::as_slice) {
                    Some([x, y]) => Ok(Point2::new(as_f64(x, &path)?, as_f64(y, &path)?)),
                    _ => Err(Error::format(format!("{path}.geometry"), "bad position")),
                })
                .collect()
        };
        let (ext, holes) = rings
            .split_first()
            .ok_or_else(|| Error::format(format!("{path}.geometry"), "no rings"))?;
        let boundary = Polygon::new(ring(ext)?, holes.iter().map(ring).collect::<Result<_>>()?)?;
        out.push(Block {
            block_id: block_id as usize,
            cycle: crate::blocks::Cycle { node_ids: Vec::new() },
            boundary,
            valid: true,
            buildings,
        });
    }
    Ok(out)
}

/// OpenDRIVE 1.4 skeleton: one road per edge in (u, v) order, one line
/// record per non-degenerate polyline segment, no lanes or junctions.
pub fn export_opendrive(g: &RoadGraph) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<OpenDRIVE>\n");
    s.push_str("  <header revMajor=\"1\" revMinor=\"4\" name=\"urbanlayout\" version=\"1.00\"/>\n");
    for (id, e) in g.edges().enumerate() {
        let pts = e.geometry.points();
        let segs: Vec<(Point2, Point2, f64)> = pts
            .windows(2)
            .map(|w| (w[0], w[1], w[0].distance(&w[1])))
            .filter(|&(_, _, l)| l > 0.0)
            .collect();
        let length: f64 = segs.iter().map(|&(_, _, l)| l).sum();
        writeln!(
            s,
            "  <road name=\"{}_{}\" length=\"{length}\" id=\"{id}\" junction=\"-1\">",
            e.u, e.v
        )
        .unwrap();
        s.push_str("    <planView>\n");
        let mut offset = 0.0;
        for (a, b, l) in segs {
            let hdg = (b.y - a.y).atan2(b.x - a.x);
            writeln!(
                s,
                "      <geometry s=\"{offset}\" x=\"{}\" y=\"{}\" hdg=\"{hdg}\" length=\"{l}\">",
                a.x, a.y
            )
            .unwrap();
            s.push_str("        <line/>\n      </geometry>\n");
            offset += l;
        }
        s.push_str("    </planView>\n  </road>\n");
    }
    s.push_str("</OpenDRIVE>\n");
    s
}
