//! Staged dataset pipeline: ingest, heights, rasterize, graph, blocks,
//! label and export. Stages exchange only files under the output
//! directory, and each writes a manifest next to its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::blocks::{
    assign_buildings_to_blocks, blocks_from_cycles, find_cycles_with, CycleMode, PeelingOptions, DEFAULT_CUTOFF,
};
use crate::buildings::{buildings_from_features, enrich_heights, FillParams};
use crate::error::{Error, Result};
use crate::export::{
    export_opendrive, read_geojson_buildings, read_graph_json, read_rbt, read_region_rbt, write_geojson_blocks,
    write_geojson_buildings, write_geojson_features, write_graph_json, write_region_rbt,
};
use crate::geo::{bbox, Point2};
use crate::ingest::{classify_with, parse_feature_collection, Feature, FeatureClass, Geometry, TagTables};
use crate::labels::{classify_tile, Thresholds, TileLabelRecord, TileStats};
use crate::metrics::{orientation_entropy, MetricParams};
use crate::raster::{
    compute_density, crop_tiles, filter_tiles, rasterize_lines, rasterize_polygons, thin, Channel, RegionRaster,
    TaskFilter, DENSITY_WINDOW_PX, RESOLUTION_M, STRIDE_PX, TILE_PX,
};
use crate::roadgraph::{
    classify_edges_by_mask, merge_close_nodes, simplify, skeleton_to_graph, RoadClass, RoadGraph, DEFAULT_C_TR,
    DEFAULT_MERGE_EPS_M,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// GeoJSON feature collection in WGS84 lon/lat.
    pub features: Option<PathBuf>,
    /// Single-channel `.rbt` height raster in EPSG:3857.
    pub height_raster: Option<PathBuf>,
    /// Replacement tag tables (JSON).
    pub tag_tables: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub resolution_m: f64,
    pub tile_px: usize,
    pub stride_px: usize,
    pub road_width_p_m: f64,
    pub road_width_s_m: f64,
    /// Stroke width for water and green line features.
    pub line_width_m: f64,
    pub density_window_px: usize,
    pub merge_eps_m: f64,
    pub c_tr: f64,
    pub cycle_cutoff: usize,
    pub cycle_mode: CycleMode,
    pub peeling: PeelingOptions,
    pub heights: FillParams,
    pub metrics: MetricParams,
    pub labels: Thresholds,
    pub task: TaskFilter,
    /// 0 uses the available parallelism.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            features: None,
            height_raster: None,
            tag_tables: None,
            out_dir: PathBuf::from("out"),
            resolution_m: RESOLUTION_M,
            tile_px: TILE_PX,
            stride_px: STRIDE_PX,
            road_width_p_m: 15.0,
            road_width_s_m: 10.0,
            line_width_m: 10.0,
            density_window_px: DENSITY_WINDOW_PX,
            merge_eps_m: DEFAULT_MERGE_EPS_M,
            c_tr: DEFAULT_C_TR,
            cycle_cutoff: DEFAULT_CUTOFF,
            cycle_mode: CycleMode::default(),
            peeling: PeelingOptions::default(),
            heights: FillParams::default(),
            metrics: MetricParams::default(),
            labels: Thresholds::default(),
            task: TaskFilter::default(),
            workers: 0,
        }
    }
}

fn parse_override(raw: &str) -> Result<(Vec<String>, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {raw:?} is not key=value")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

impl PipelineConfig {
    /// Parses a config document, applies `key.path=value` overrides (values
    /// are JSON, falling back to plain strings) and validates the result.
    /// Relative input paths and `out_dir` resolve against `base`.
    pub fn from_json(bytes: Option<&[u8]>, overrides: &[String], base: Option<&Path>) -> Result<Self> {
        let parsed: PipelineConfig = match bytes {
            Some(b) => serde_json::from_slice(b).map_err(|e| Error::Config(e.to_string()))?,
            None => PipelineConfig::default(),
        };
        let mut doc = serde_json::to_value(&parsed).map_err(|e| Error::Config(e.to_string()))?;
        for raw in overrides {
            let (path, value) = parse_override(raw)?;
            let mut slot = &mut doc;
            for key in &path {
                slot = slot
                    .get_mut(key)
                    .ok_or_else(|| Error::Config(format!("unknown config key {:?}", path.join("."))))?;
            }
            *slot = value;
        }
        let mut cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            for p in [&mut cfg.features, &mut cfg.height_raster, &mut cfg.tag_tables]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if cfg.out_dir.is_relative() {
                cfg.out_dir = base.join(&cfg.out_dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let bytes = fs::read(p).map_err(|e| Error::MissingInput(format!("{}: {e}", p.display())))?;
                PipelineConfig::from_json(Some(&bytes), overrides, p.parent())
            }
            None => PipelineConfig::from_json(None, overrides, None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.resolution_m > 0.0 && self.resolution_m.is_finite()) {
            return bad(format!("resolution_m {} must be > 0", self.resolution_m));
        }
        if self.tile_px == 0 || self.stride_px == 0 || self.stride_px > self.tile_px {
            return bad(format!(
                "stride_px {} must be in 1..=tile_px ({})",
                self.stride_px, self.tile_px
            ));
        }
        if self.cycle_cutoff < 3 {
            return bad(format!("cycle_cutoff {} must be >= 3", self.cycle_cutoff));
        }
        if !(self.c_tr > 0.0 && self.c_tr < 1.0) {
            return bad(format!("c_tr {} must lie in (0, 1)", self.c_tr));
        }
        if !(self.merge_eps_m >= 0.0) {
            return bad(format!("merge_eps_m {} must be >= 0", self.merge_eps_m));
        }
        for (name, w) in [
            ("road_width_p_m", self.road_width_p_m),
            ("road_width_s_m", self.road_width_s_m),
            ("line_width_m", self.line_width_m),
        ] {
            if !(w > 0.0) {
                return bad(format!("{name} {w} must be > 0"));
            }
        }
        if self.density_window_px % 2 == 0 {
            return bad(format!("density_window_px {} must be odd", self.density_window_px));
        }
        if !(self.heights.radius_m >= 0.0 && self.heights.default_height_m >= 0.0) {
            return bad("height fill radius and default height must be >= 0".into());
        }
        self.labels.validate()
    }

    /// Hash of every setting that can change an artifact; `out_dir` and
    /// `workers` are excluded.
    pub fn content_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("out_dir");
        obj.remove("workers");
        sha256_hex(&serde_json::to_vec(&v).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Heights,
    Rasterize,
    Graph,
    Blocks,
    Label,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Heights,
        Stage::Rasterize,
        Stage::Graph,
        Stage::Blocks,
        Stage::Label,
        Stage::Export,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Heights => "heights",
            Stage::Rasterize => "rasterize",
            Stage::Graph => "graph",
            Stage::Blocks => "blocks",
            Stage::Label => "label",
            Stage::Export => "export",
        }
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const FEATURES_FILE: &str = "ingest/features.geojson";
pub const BUILDINGS_FILE: &str = "heights/buildings.geojson";
pub const REGION_FILE: &str = "rasterize/region.rbt";
pub const TILES_DIR: &str = "rasterize/tiles";
pub const GRAPH_FILE: &str = "graph/region.graph.json";
pub const BLOCKS_FILE: &str = "blocks/blocks.geojson";
pub const LABELS_DIR: &str = "label";
pub const XODR_FILE: &str = "export/region.xodr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

/// Per-stage record. Paths under the output directory are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub status: StageStatus,
    pub error: Option<String>,
    pub config_hash: String,
    /// sha256 over the concatenated input hashes, in key order.
    pub inputs_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, Value>,
}

/// Writes one JSON object per line to standard error.
pub fn log_event(level: &str, stage: Option<Stage>, message: &str, fields: Value) {
    let mut obj = json!({"level": level, "msg": message});
    if let Some(s) = stage {
        obj["stage"] = json!(s.name());
    }
    if let Value::Object(extra) = fields {
        for (k, v) in extra {
            obj[k] = v;
        }
    }
    eprintln!("{obj}");
}

struct StageRun<'a> {
    cfg: &'a PipelineConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    counts: BTreeMap<String, Value>,
}

impl StageRun<'_> {
    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    /// Reads an external input; absence is a missing-input error.
    fn read_external(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Reads an artifact of an earlier stage.
    fn read_artifact(&mut self, rel: &str) -> Result<Vec<u8>> {
        let bytes = fs::read(self.out(rel)).map_err(|e| {
            Error::MissingInput(format!(
                "{} (run the producing stage first): {e}",
                self.out(rel).display()
            ))
        })?;
        self.inputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn count(&mut self, key: &str, v: impl Serialize) {
        self.counts
            .insert(key.to_string(), serde_json::to_value(v).expect("count serializes"));
    }

    fn tag_tables(&mut self) -> Result<TagTables> {
        match self.cfg.tag_tables.clone() {
            Some(p) => TagTables::from_json(&self.read_external(&p)?),
            None => Ok(TagTables::default()),
        }
    }
}

/// Runs one stage, clearing its directory first and writing its manifest
/// whether or not it succeeds.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<Manifest> {
    let dir = cfg.out_dir.join(stage.name());
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let mut run = StageRun {
        cfg,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        counts: BTreeMap::new(),
    };
    log_event("info", Some(stage), "stage started", json!({}));
    let result = in_pool(cfg, || match stage {
        Stage::Ingest => ingest(&mut run),
        Stage::Heights => heights(&mut run),
        Stage::Rasterize => rasterize(&mut run),
        Stage::Graph => graph(&mut run),
        Stage::Blocks => blocks(&mut run),
        Stage::Label => label(&mut run),
        Stage::Export => export(&mut run),
    });
    let inputs_hash = sha256_hex(
        run.inputs
            .values()
            .flat_map(|h| h.bytes())
            .collect::<Vec<u8>>()
            .as_slice(),
    );
    let manifest = Manifest {
        stage,
        status: if result.is_ok() {
            StageStatus::Ok
        } else {
            StageStatus::Failed
        },
        error: result.as_ref().err().map(|e| e.to_string()),
        config_hash: cfg.content_hash(),
        inputs_hash,
        inputs: run.inputs,
        outputs: run.outputs,
        counts: run.counts,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST), bytes)?;
    match result {
        Ok(()) => {
            log_event(
                "info",
                Some(stage),
                "stage finished",
                json!({"counts": manifest.counts}),
            );
            Ok(manifest)
        }
        Err(e) => {
            log_event("error", Some(stage), &e.to_string(), json!({}));
            Err(e)
        }
    }
}

/// Runs every stage in order, stopping at the first failure.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<Manifest>> {
    Stage::ALL.iter().map(|&s| run_stage(s, cfg)).collect()
}

fn in_pool<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if cfg.workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?
        .install(f)
}

fn classified(features: Vec<Feature>, tables: &TagTables) -> Vec<(Feature, FeatureClass)> {
    features
        .into_iter()
        .filter_map(|f| classify_with(&f.tags, tables).map(|c| (f, c)))
        .collect()
}

fn ingest(run: &mut StageRun) -> Result<()> {
    let path = run
        .cfg
        .features
        .clone()
        .ok_or_else(|| Error::MissingInput("no `features` input configured".into()))?;
    let bytes = run.read_external(&path)?;
    let tables = run.tag_tables()?;
    let parsed = parse_feature_collection(&bytes)?;
    let mut skips = parsed.skips.clone();
    let mut kept = Vec::new();
    let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
    for f in parsed.features {
        let Some(class) = classify_with(&f.tags, &tables) else {
            skips.skipped += 1;
            *skips.reasons.entry("unclassified".into()).or_default() += 1;
            continue;
        };
        match f.to_mercator() {
            Ok(p) => {
                *per_class.entry(class.as_str()).or_default() += 1;
                kept.push(p);
            }
            Err(_) => {
                skips.skipped += 1;
                *skips.reasons.entry("out_of_range".into()).or_default() += 1;
            }
        }
    }
    run.write(FEATURES_FILE, &write_geojson_features(&kept))?;
    run.count("features", kept.len());
    run.count("per_class", per_class);
    run.count("skipped", skips);
    Ok(())
}

fn load_features(run: &mut StageRun) -> Result<Vec<(Feature, FeatureClass)>> {
    let bytes = run.read_artifact(FEATURES_FILE)?;
    let tables = run.tag_tables()?;
    Ok(classified(parse_feature_collection(&bytes)?.features, &tables))
}

fn heights(run: &mut StageRun) -> Result<()> {
    let features = load_features(run)?;
    let raw: Vec<Feature> = features.into_iter().map(|(f, _)| f).collect();
    let tables = run.tag_tables()?;
    let buildings = buildings_from_features(&raw, &tables);
    let raster = match run.cfg.height_raster.clone() {
        Some(p) => Some(read_rbt(&run.read_external(&p)?)?.into_height_raster()?),
        None => None,
    };
    let enriched = enrich_heights(&buildings, raster.as_ref(), &run.cfg.heights);
    let mut by_source: BTreeMap<&str, usize> = BTreeMap::new();
    for b in &enriched {
        *by_source
            .entry(b.height_source.map_or("none", |s| s.as_str()))
            .or_default() += 1;
    }
    run.write(BUILDINGS_FILE, &write_geojson_buildings(&enriched))?;
    run.count("buildings", enriched.len());
    run.count("height_sources", by_source);
    Ok(())
}

fn rasterize(run: &mut StageRun) -> Result<()> {
    let features = load_features(run)?;
    let buildings = read_geojson_buildings(&run.read_artifact(BUILDINGS_FILE)?)?;
    let cfg = run.cfg;
    let mut pts: Vec<Point2> = Vec::new();
    for (f, _) in &features {
        match &f.geometry {
            Geometry::Point(_) => {}
            Geometry::LineString(l) => pts.extend_from_slice(l.points()),
            Geometry::Polygon(p) => pts.extend_from_slice(p.exterior()),
        }
    }
    if pts.is_empty() {
        return Err(Error::UndefinedInput("no line or polygon features to rasterize".into()));
    }
    let (lo, hi) = bbox(&pts);
    let mut canvas = RegionRaster::covering(lo, hi, cfg.resolution_m)?;
    for (class, width) in [
        (FeatureClass::RoadP, cfg.road_width_p_m),
        (FeatureClass::RoadS, cfg.road_width_s_m),
        (FeatureClass::Water, cfg.line_width_m),
        (FeatureClass::Green, cfg.line_width_m),
    ] {
        let lines: Vec<_> = features
            .iter()
            .filter(|(_, c)| *c == class)
            .filter_map(|(f, c)| match &f.geometry {
                Geometry::LineString(l) => Some((l, *c)),
                _ => None,
            })
            .collect();
        rasterize_lines(&mut canvas, &lines, width)?;
    }
    let areas: Vec<_> = features
        .iter()
        .filter(|(_, c)| *c != FeatureClass::Building)
        .filter_map(|(f, c)| match &f.geometry {
            Geometry::Polygon(p) => Some((p, *c, 1.0f32)),
            _ => None,
        })
        .collect();
    rasterize_polygons(&mut canvas, &areas)?;
    let footprints: Vec<_> = buildings
        .iter()
        .map(|b| {
            (
                &b.footprint,
                FeatureClass::Building,
                b.height.unwrap_or(cfg.heights.default_height_m) as f32,
            )
        })
        .collect();
    rasterize_polygons(&mut canvas, &footprints)?;
    compute_density(&mut canvas, cfg.density_window_px)?;
    run.write(REGION_FILE, &write_region_rbt(&canvas)?)?;

    let tiles = crop_tiles(&canvas, cfg.tile_px, cfg.stride_px)?;
    let total = tiles.len();
    let kept = filter_tiles(tiles, cfg.task);
    let encoded: Vec<(String, Vec<u8>)> = kept
        .par_iter()
        .map(|t| {
            Ok((
                format!("{TILES_DIR}/{}.rbt", t.tile_id.stem()),
                write_region_rbt(&t.raster)?,
            ))
        })
        .collect::<Result<_>>()?;
    for (rel, bytes) in &encoded {
        run.write(rel, bytes)?;
    }
    run.count("region_px", [canvas.width, canvas.height]);
    run.count("tiles_total", total);
    run.count("tiles_kept", kept.len());
    Ok(())
}

/// Road graph of a raster: thinned road mask, skeleton graph, primary
/// classes from the primary channel, node merging and simplification.
pub fn road_graph_from_raster(r: &RegionRaster, merge_eps_m: f64, c_tr: f64) -> RoadGraph {
    let skeleton = thin(&r.road_mask());
    let g = skeleton_to_graph(&skeleton, &r.transform, RoadClass::RoadS);
    let mut g = simplify(&merge_close_nodes(&g, merge_eps_m), c_tr);
    classify_edges_by_mask(&mut g, &r.channel_mask(Channel::RoadP), &r.transform);
    g
}

fn graph(run: &mut StageRun) -> Result<()> {
    let region = read_region_rbt(&run.read_artifact(REGION_FILE)?)?;
    let g = road_graph_from_raster(&region, run.cfg.merge_eps_m, run.cfg.c_tr);
    run.write(GRAPH_FILE, &write_graph_json(&g))?;
    run.count("nodes", g.node_count());
    run.count("edges", g.edge_count());
    run.count("total_length_m", g.total_length());
    Ok(())
}

fn blocks(run: &mut StageRun) -> Result<()> {
    let g = read_graph_json(&run.read_artifact(GRAPH_FILE)?)?;
    let buildings = read_geojson_buildings(&run.read_artifact(BUILDINGS_FILE)?)?;
    let cycles = find_cycles_with(&g, run.cfg.cycle_cutoff, run.cfg.cycle_mode, run.cfg.peeling);
    let assignment = assign_buildings_to_blocks(&buildings, &blocks_from_cycles(&cycles, &g));
    run.write(BLOCKS_FILE, &write_geojson_blocks(&assignment.blocks))?;
    run.count("blocks", assignment.blocks.len());
    run.count("invalid_blocks", assignment.blocks.iter().filter(|b| !b.valid).count());
    run.count("unbounded_buildings", assignment.unbounded.len());
    Ok(())
}

/// Statistics of one tile raster for labeling.
pub fn tile_stats(r: &RegionRaster, cfg: &PipelineConfig) -> Result<TileStats> {
    let g = road_graph_from_raster(r, cfg.merge_eps_m, cfg.c_tr);
    let entropy = match orientation_entropy(&g, cfg.metrics.bearing_bins) {
        Ok(h) => Some(h),
        Err(Error::UndefinedInput(_)) => None,
        Err(e) => return Err(e),
    };
    let heights: Vec<f64> = r
        .plane(Channel::BuildingHeight)
        .iter()
        .filter(|h| **h > 0.0)
        .map(|&h| f64::from(h))
        .collect();
    let n = (r.width * r.height) as f64;
    Ok(TileStats {
        road_len_km: g.total_length() / 1000.0,
        entropy_nats: entropy,
        built_fraction: heights.len() as f64 / n,
        mean_height_m: (!heights.is_empty()).then(|| heights.iter().sum::<f64>() / heights.len() as f64),
    })
}

fn label(run: &mut StageRun) -> Result<()> {
    let dir = run.out(TILES_DIR);
    let mut stems: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".rbt").map(str::to_string))
        .collect();
    stems.sort();
    let tiles: Vec<(String, Vec<u8>)> = stems
        .iter()
        .map(|s| Ok((s.clone(), run.read_artifact(&format!("{TILES_DIR}/{s}.rbt"))?)))
        .collect::<Result<_>>()?;
    let cfg = run.cfg;
    let records: Vec<(TileLabelRecord, TileStats)> = tiles
        .par_iter()
        .map(|(stem, bytes)| {
            let stats = tile_stats(&read_region_rbt(bytes)?, cfg)?;
            Ok((
                TileLabelRecord::new(stem.clone(), classify_tile(&stats, &cfg.labels)),
                stats,
            ))
        })
        .collect::<Result<_>>()?;
    let mut texts: BTreeMap<String, usize> = BTreeMap::new();
    for (rec, stats) in &records {
        let mut v = serde_json::to_value(rec).expect("label record serializes");
        v["stats"] = serde_json::to_value(stats).expect("stats serialize");
        let mut bytes = serde_json::to_vec_pretty(&v).expect("label record serializes");
        bytes.push(b'\n');
        run.write(&format!("{LABELS_DIR}/{}.labels.json", rec.tile_id), &bytes)?;
        *texts.entry(rec.text.clone()).or_default() += 1;
    }
    run.count("tiles", records.len());
    run.count("texts", texts);
    Ok(())
}

fn export(run: &mut StageRun) -> Result<()> {
    let g = read_graph_json(&run.read_artifact(GRAPH_FILE)?)?;
    run.write(XODR_FILE, export_opendrive(&g).as_bytes())?;
    run.count("roads", g.edge_count());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_validation() {
        let cfg = PipelineConfig::from_json(
            Some(br#"{"tile_px": 128}"#),
            &[
                "stride_px=100".into(),
                "labels.entropy_nats=1.5".into(),
                "cycle_mode=face_traversal".into(),
            ],
            None,
        )
        .unwrap();
        assert_eq!((cfg.tile_px, cfg.stride_px), (128, 100));
        assert_eq!(cfg.labels.entropy_nats, 1.5);
        assert_eq!(cfg.cycle_mode, CycleMode::FaceTraversal);
        assert!(matches!(
            PipelineConfig::from_json(None, &["nope=1".into()], None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_json(Some(br#"{"bogus": 1}"#), &[], None),
            Err(Error::Config(_))
        ));
        assert!(PipelineConfig::from_json(None, &["stride_px=300".into()], None).is_err());
        assert!(PipelineConfig::from_json(None, &["cycle_cutoff=2".into()], None).is_err());
        assert!(PipelineConfig::from_json(None, &["resolution_m=0".into()], None).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let cfg = PipelineConfig::from_json(
            Some(br#"{"features": "f.geojson"}"#),
            &[],
            Some(Path::new("/data/city")),
        )
        .unwrap();
        assert_eq!(cfg.features.unwrap(), PathBuf::from("/data/city/f.geojson"));
        assert_eq!(cfg.out_dir, PathBuf::from("/data/city/out"));
    }

    #[test]
    fn content_hash_ignores_location_and_workers() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            out_dir: "elsewhere".into(),
            workers: 3,
            ..a.clone()
        };
        assert_eq!(a.content_hash(), b.content_hash());
        let c = PipelineConfig { c_tr: 0.9, ..a.clone() };
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn missing_features_input() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            features: Some(dir.path().join("absent.geojson")),
            out_dir: dir.path().join("out"),
            ..PipelineConfig::default()
        };
        assert!(matches!(run_stage(Stage::Ingest, &cfg), Err(Error::MissingInput(_))));
        let m: Manifest =
            serde_json::from_slice(&fs::read(dir.path().join("out/ingest/manifest.json")).unwrap()).unwrap();
        assert_eq!(m.status, StageStatus::Failed);
        assert!(m.error.unwrap().contains("absent.geojson"));
        assert!(matches!(run_stage(Stage::Graph, &cfg), Err(Error::MissingInput(_))));
    }
}
