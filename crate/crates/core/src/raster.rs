//! Six-channel rasters: burning features, the density channel, tiling,
//! thinning and task filtering.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AffineTransform, CrsCode, LineString, Point2, Polygon};
use crate::ingest::FeatureClass;

pub const TILE_PX: usize = 256;
pub const STRIDE_PX: usize = 204;
pub const RESOLUTION_M: f64 = 5.0;
pub const DENSITY_WINDOW_PX: usize = 65;
pub const CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    RoadP = 0,
    RoadS = 1,
    Water = 2,
    Green = 3,
    Density = 4,
    BuildingHeight = 5,
}

impl Channel {
    pub const ALL: [Channel; CHANNELS] = [
        Channel::RoadP,
        Channel::RoadS,
        Channel::Water,
        Channel::Green,
        Channel::Density,
        Channel::BuildingHeight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Channel::RoadP => "road_p",
            Channel::RoadS => "road_s",
            Channel::Water => "water",
            Channel::Green => "green",
            Channel::Density => "density",
            Channel::BuildingHeight => "building_height",
        }
    }

    pub fn for_class(class: FeatureClass) -> Channel {
        match class {
            FeatureClass::RoadP => Channel::RoadP,
            FeatureClass::RoadS => Channel::RoadS,
            FeatureClass::Water => Channel::Water,
            FeatureClass::Green => Channel::Green,
            FeatureClass::Building => Channel::BuildingHeight,
        }
    }
}

/// A binary plane, row-major, one byte per pixel (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Builds a mask from rows of 0/1 values (`'#'`/`'1'` also accepted by
    /// [`Mask::from_ascii`]).
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut m = Mask::new(width, height);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), width, "ragged mask rows");
            for (c, &v) in row.iter().enumerate() {
                m.set(c, r, v != 0);
            }
        }
        m
    }

    pub fn from_ascii(text: &str) -> Self {
        let rows: Vec<Vec<u8>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.bytes().map(|b| u8::from(b == b'#' || b == b'1')).collect())
            .collect();
        Mask::from_rows(&rows)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for r in 0..height {
            for c in 0..width {
                if f(c, r) {
                    m.data[r * width + c] = 1;
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    /// Out-of-bounds reads are background.
    #[inline]
    pub fn get_signed(&self, col: isize, row: isize) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.data[row as usize * self.width + col as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.data[row * self.width + col] = u8::from(v);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn same_shape(&self, other: &Mask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        Ok(())
    }

    pub fn and_count(&self, other: &Mask) -> Result<usize> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a != 0 && **b != 0)
            .count())
    }

    pub fn or_count(&self, other: &Mask) -> Result<usize> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a != 0 || **b != 0)
            .count())
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Number of set pixels among the 8 neighbors.
    pub fn neighbor_count(&self, col: usize, row: usize) -> usize {
        let (c, r) = (col as isize, row as isize);
        NEIGHBORS_8
            .iter()
            .filter(|(dc, dr)| self.get_signed(c + dc, r + dr))
            .count()
    }
}

/// 8-neighborhood offsets as (dcol, drow), clockwise from north.
pub const NEIGHBORS_8: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// A georeferenced six-channel raster of arbitrary size.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<f32>>,
    pub transform: AffineTransform,
    pub crs: CrsCode,
}

impl RegionRaster {
    pub fn new(width: usize, height: usize, transform: AffineTransform, crs: CrsCode) -> Self {
        RegionRaster {
            width,
            height,
            planes: vec![vec![0.0; width * height]; CHANNELS],
            transform,
            crs,
        }
    }

    /// North-up EPSG:3857 canvas covering `min`..`max`, with the origin
    /// snapped down/up to a multiple of `resolution`.
    pub fn covering(min: Point2, max: Point2, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::Config(format!("resolution {resolution} must be > 0")));
        }
        let x0 = (min.x / resolution).floor() * resolution;
        let y1 = (max.y / resolution).ceil() * resolution;
        let width = (((max.x - x0) / resolution).ceil() as usize).max(1);
        let height = (((y1 - min.y) / resolution).ceil() as usize).max(1);
        Ok(RegionRaster::new(
            width,
            height,
            AffineTransform::north_up(resolution, Point2::new(x0, y1)),
            CrsCode::WEB_MERCATOR,
        ))
    }

    pub fn plane(&self, ch: Channel) -> &[f32] {
        &self.planes[ch as usize]
    }

    pub fn plane_mut(&mut self, ch: Channel) -> &mut [f32] {
        &mut self.planes[ch as usize]
    }

    #[inline]
    pub fn get(&self, ch: Channel, col: usize, row: usize) -> f32 {
        self.planes[ch as usize][row * self.width + col]
    }

    #[inline]
    fn burn(&mut self, ch: Channel, col: usize, row: usize, value: f32) {
        let v = &mut self.planes[ch as usize][row * self.width + col];
        if value > *v {
            *v = value;
        }
    }

    pub fn mask_where(&self, f: impl Fn(&RegionRaster, usize) -> bool) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        for i in 0..self.width * self.height {
            if f(self, i) {
                m.data[i] = 1;
            }
        }
        m
    }

    /// Pixels set on either road plane.
    pub fn road_mask(&self) -> Mask {
        self.mask_where(|r, i| r.planes[Channel::RoadP as usize][i] > 0.0 || r.planes[Channel::RoadS as usize][i] > 0.0)
    }

    pub fn channel_mask(&self, ch: Channel) -> Mask {
        self.mask_where(|r, i| r.planes[ch as usize][i] > 0.0)
    }

    pub fn building_mask(&self) -> Mask {
        self.channel_mask(Channel::BuildingHeight)
    }

    /// Pixel edge length in world units.
    pub fn pixel_size(&self) -> f64 {
        self.transform.determinant().abs().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileId {
    pub col: usize,
    pub row: usize,
}

impl TileId {
    pub fn stem(&self) -> String {
        format!("tile_{:03}_{:03}", self.col, self.row)
    }
}

/// A square crop of a region raster.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRaster {
    pub tile_id: TileId,
    /// Pixel offset of the tile inside its region.
    pub offset: (usize, usize),
    /// Set when the region was smaller than a tile and zero padding was added.
    pub padded: bool,
    pub raster: RegionRaster,
}

impl TileRaster {
    pub fn has_roads(&self) -> bool {
        let r = &self.raster;
        r.plane(Channel::RoadP)
            .iter()
            .zip(r.plane(Channel::RoadS))
            .any(|(p, s)| *p > 0.0 || *s > 0.0)
    }

    pub fn has_buildings(&self) -> bool {
        self.raster.plane(Channel::BuildingHeight).iter().any(|h| *h > 0.0)
    }
}

fn class_channel_for_lines(class: FeatureClass) -> Option<Channel> {
    match class {
        FeatureClass::Building => None,
        other => Some(Channel::for_class(other)),
    }
}

/// Strokes polylines with round caps, burning 1.0 into each class's
/// channel. A pixel is set when its center lies within `width_m / 2` of
/// the polyline, or when the centerline passes through it.
pub fn rasterize_lines(canvas: &mut RegionRaster, lines: &[(&LineString, FeatureClass)], width_m: f64) -> Result<()> {
    if !(width_m > 0.0) {
        return Err(Error::Config(format!("stroke width {width_m} must be > 0")));
    }
    let radius = width_m / 2.0 / canvas.pixel_size();
    for (line, class) in lines {
        let Some(ch) = class_channel_for_lines(*class) else {
            continue;
        };
        let px: Vec<(f64, f64)> = line
            .points()
            .iter()
            .map(|p| canvas.transform.world_to_pixel(*p))
            .collect::<Result<_>>()?;
        for w in px.windows(2) {
            stroke_segment(canvas, ch, w[0], w[1], radius);
            trace_segment(canvas, ch, w[0], w[1]);
        }
    }
    Ok(())
}

/// Capsule fill, one scanline per pixel row.
fn stroke_segment(canvas: &mut RegionRaster, ch: Channel, p0: (f64, f64), p1: (f64, f64), r: f64) {
    let row_lo = ((p0.1.min(p1.1) - r - 0.5).floor().max(0.0)) as usize;
    let row_hi = (p0.1.max(p1.1) + r - 0.5).ceil();
    if row_hi < 0.0 {
        return;
    }
    let row_hi = (row_hi as usize).min(canvas.height.saturating_sub(1));
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let len = dx.hypot(dy);
    for row in row_lo..=row_hi {
        if row >= canvas.height {
            break;
        }
        let yc = row as f64 + 0.5;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut union = |a: f64, b: f64| {
            if a <= b {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        };
        for p in [p0, p1] {
            let h = r * r - (yc - p.1) * (yc - p.1);
            if h >= 0.0 {
                let s = h.sqrt();
                union(p.0 - s, p.0 + s);
            }
        }
        if len > 0.0 {
            // body: 0 <= t <= 1 along the axis, |normal offset| <= r
            let (ux, uy) = (dx / len, dy / len);
            let mut a = f64::NEG_INFINITY;
            let mut b = f64::INFINITY;
            let mut ok = true;
            // constraint: lo_k <= k_x * x + k_0 <= hi_k
            for (kx, k0, klo, khi) in [
                (ux, uy * (yc - p0.1) - ux * p0.0, 0.0, len),
                (-uy, ux * (yc - p0.1) + uy * p0.0, -r, r),
            ] {
                if kx.abs() < 1e-15 {
                    if k0 < klo || k0 > khi {
                        ok = false;
                    }
                } else {
                    let (x1, x2) = ((klo - k0) / kx, (khi - k0) / kx);
                    a = a.max(x1.min(x2));
                    b = b.min(x1.max(x2));
                }
            }
            if ok {
                union(a, b);
            }
        }
        if lo > hi {
            continue;
        }
        let c0 = (lo - 0.5).ceil().max(0.0);
        let c1 = (hi - 0.5).floor();
        if c1 < 0.0 || c0 > c1 {
            continue;
        }
        let c1 = (c1 as usize).min(canvas.width.saturating_sub(1));
        for col in c0 as usize..=c1 {
            canvas.burn(ch, col, row, 1.0);
        }
    }
}

/// Marks the pixels visited by the centerline itself.
fn trace_segment(canvas: &mut RegionRaster, ch: Channel, p0: (f64, f64), p1: (f64, f64)) {
    let len = (p1.0 - p0.0).hypot(p1.1 - p0.1);
    let steps = (len * 4.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = p0.0 + t * (p1.0 - p0.0);
        let y = p0.1 + t * (p1.1 - p0.1);
        if x >= 0.0 && y >= 0.0 {
            let (c, r) = (x.floor() as usize, y.floor() as usize);
            if c < canvas.width && r < canvas.height {
                canvas.burn(ch, c, r, 1.0);
            }
        }
    }
}

/// Even-odd scanline fill of pixel centers. Overlaps keep the maximum
/// value. A polygon covering no pixel center burns the pixel containing
/// its centroid.
pub fn rasterize_polygons(canvas: &mut RegionRaster, polygons: &[(&Polygon, FeatureClass, f32)]) -> Result<()> {
    for (poly, class, value) in polygons {
        let ch = Channel::for_class(*class);
        let rings: Vec<Vec<(f64, f64)>> = poly
            .rings()
            .map(|ring| {
                ring.iter()
                    .map(|p| canvas.transform.world_to_pixel(*p))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let (ymin, ymax) = rings
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
        let mut burned = false;
        let row_lo = (ymin - 0.5).ceil().max(0.0) as usize;
        let row_hi = (ymax - 0.5).floor();
        if row_hi >= 0.0 {
            let row_hi = (row_hi as usize).min(canvas.height.saturating_sub(1));
            let mut xs: Vec<f64> = Vec::new();
            for row in row_lo..=row_hi.max(row_lo) {
                if row > row_hi || row >= canvas.height {
                    break;
                }
                let yc = row as f64 + 0.5;
                xs.clear();
                for ring in &rings {
                    for w in ring.windows(2) {
                        let (a, b) = (w[0], w[1]);
                        if (a.1 > yc) != (b.1 > yc) {
                            xs.push(a.0 + (yc - a.1) / (b.1 - a.1) * (b.0 - a.0));
                        }
                    }
                }
                xs.sort_by(f64::total_cmp);
                for pair in xs.chunks_exact(2) {
                    let c0 = (pair[0] - 0.5).ceil().max(0.0);
                    // half-open on the right so shared edges are not double counted
                    let c1 = (pair[1] - 0.5).ceil() - 1.0;
                    if c1 < c0 {
                        continue;
                    }
                    let c1 = (c1 as usize).min(canvas.width.saturating_sub(1));
                    for col in c0 as usize..=c1 {
                        if col < canvas.width {
                            canvas.burn(ch, col, row, *value);
                            burned = true;
                        }
                    }
                }
            }
        }
        if !burned {
            let (c, r) = canvas.transform.world_to_pixel(poly.centroid())?;
            if c >= 0.0 && r >= 0.0 && (c as usize) < canvas.width && (r as usize) < canvas.height {
                canvas.burn(ch, c as usize, r as usize, *value);
            }
        }
    }
    Ok(())
}

/// Fills the density plane with the fraction of built pixels
/// (`BuildingHeight > 0`) in a centered `window_px` box, clipped to the
/// raster.
pub fn compute_density(canvas: &mut RegionRaster, window_px: usize) -> Result<()> {
    if window_px == 0 || window_px % 2 == 0 {
        return Err(Error::Config(format!(
            "density window {window_px} must be a positive odd number"
        )));
    }
    let (w, h) = (canvas.width, canvas.height);
    // summed-area table with a zero border row/column
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    let heights = canvas.plane(Channel::BuildingHeight);
    for r in 0..h {
        let mut row_sum = 0u32;
        for c in 0..w {
            row_sum += u32::from(heights[r * w + c] > 0.0);
            sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + row_sum;
        }
    }
    let half = window_px / 2;
    let density = canvas.plane_mut(Channel::Density);
    for r in 0..h {
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(h));
        for c in 0..w {
            let (c0, c1) = (c.saturating_sub(half), (c + half + 1).min(w));
            let built =
                sat[r1 * (w + 1) + c1] + sat[r0 * (w + 1) + c0] - sat[r0 * (w + 1) + c1] - sat[r1 * (w + 1) + c0];
            let area = ((r1 - r0) * (c1 - c0)) as f32;
            density[r * w + c] = built as f32 / area;
        }
    }
    Ok(())
}

/// Tile offsets along one axis: stride steps from 0, with the last tile
/// flush against the far edge.
pub fn tile_offsets(extent: usize, tile: usize, stride: usize) -> Vec<usize> {
    if extent <= tile {
        return vec![0];
    }
    let mut offsets = vec![0];
    loop {
        let next = offsets.last().unwrap() + stride;
        if next + tile >= extent {
            let flush = extent - tile;
            if flush > *offsets.last().unwrap() {
                offsets.push(flush);
            }
            return offsets;
        }
        offsets.push(next);
    }
}

/// Crops a region into overlapping square tiles. An axis shorter than a
/// tile yields a single zero-padded row/column of tiles, flagged `padded`.
pub fn crop_tiles(region: &RegionRaster, tile_px: usize, stride_px: usize) -> Result<Vec<TileRaster>> {
    if tile_px == 0 || stride_px == 0 || stride_px > tile_px {
        return Err(Error::Config(format!(
            "invalid tiling: tile {tile_px} px, stride {stride_px} px"
        )));
    }
    let cols = tile_offsets(region.width, tile_px, stride_px);
    let rows = tile_offsets(region.height, tile_px, stride_px);
    let padded = region.width < tile_px || region.height < tile_px;
    let mut tiles = Vec::with_capacity(cols.len() * rows.len());
    for (ri, &row_off) in rows.iter().enumerate() {
        for (ci, &col_off) in cols.iter().enumerate() {
            let mut raster = RegionRaster::new(
                tile_px,
                tile_px,
                region.transform.offset(col_off as f64, row_off as f64),
                region.crs,
            );
            let copy_w = tile_px.min(region.width - col_off);
            let copy_h = tile_px.min(region.height - row_off);
            for (dst, src) in raster.planes.iter_mut().zip(&region.planes) {
                for r in 0..copy_h {
                    let s = (row_off + r) * region.width + col_off;
                    dst[r * tile_px..r * tile_px + copy_w].copy_from_slice(&src[s..s + copy_w]);
                }
            }
            tiles.push(TileRaster {
                tile_id: TileId { col: ci, row: ri },
                offset: (col_off, row_off),
                padded,
                raster,
            });
        }
    }
    Ok(tiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFilter {
    RoadGen,
    BuildingGen,
    #[default]
    All,
}

impl TaskFilter {
    pub fn keeps(&self, tile: &TileRaster) -> bool {
        match self {
            TaskFilter::All => true,
            TaskFilter::RoadGen => tile.has_roads(),
            TaskFilter::BuildingGen => tile.has_roads() && tile.has_buildings(),
        }
    }
}

pub fn filter_tiles(tiles: Vec<TileRaster>, task: TaskFilter) -> Vec<TileRaster> {
    tiles.into_iter().filter(|t| task.keeps(t)).collect()
}

/// 256-entry table: whether removing a foreground pixel with the given
/// 8-neighborhood (bit i = NEIGHBORS_8[i]) preserves topology under
/// 8-connected foreground / 4-connected background.
fn simple_point_table() -> &'static [bool; 256] {
    static TABLE: OnceLock<[bool; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [false; 256];
        for (pattern, slot) in table.iter_mut().enumerate() {
            *slot = is_simple_pattern(pattern as u8);
        }
        table
    })
}

fn is_simple_pattern(pattern: u8) -> bool {
    // 3x3 grid indices of the ring positions
    let pos: Vec<(isize, isize)> = NEIGHBORS_8.to_vec();
    let fg: Vec<bool> = (0..8).map(|i| pattern & (1 << i) != 0).collect();
    let components = |want: bool, four: bool, must_touch_n4: bool| -> usize {
        let mut seen = [false; 8];
        let mut count = 0;
        for start in 0..8 {
            if fg[start] != want || seen[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut touches = false;
            while let Some(i) = stack.pop() {
                let (x, y) = pos[i];
                if x == 0 || y == 0 {
                    touches = true;
                }
                for j in 0..8 {
                    if seen[j] || fg[j] != want {
                        continue;
                    }
                    let (dx, dy) = ((pos[j].0 - x).abs(), (pos[j].1 - y).abs());
                    let adjacent = if four { dx + dy == 1 } else { dx <= 1 && dy <= 1 };
                    if adjacent {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if !must_touch_n4 || touches {
                count += 1;
            }
        }
        count
    };
    components(true, false, false) == 1 && components(false, true, true) == 1
}

fn neighborhood(mask: &Mask, col: usize, row: usize) -> u8 {
    let (c, r) = (col as isize, row as isize);
    let mut p = 0u8;
    for (i, (dc, dr)) in NEIGHBORS_8.iter().enumerate() {
        if mask.get_signed(c + dc, r + dr) {
            p |= 1 << i;
        }
    }
    p
}

/// Zhang-Suen thinning to a one-pixel-wide, 8-connected skeleton.
///
/// Candidates are marked per sub-iteration as in Zhang-Suen, then removed
/// one at a time only while they are still simple points, which keeps
/// component and hole counts intact (plain Zhang-Suen erases 2x2 blocks).
/// A final pass drops redundant staircase pixels.
pub fn thin(mask: &Mask) -> Mask {
    let table = simple_point_table();
    let mut m = mask.clone();
    let mut fg: Vec<(usize, usize)> = m.iter_set().collect();
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            candidates.clear();
            for &(c, r) in &fg {
                let p = neighborhood(&m, c, r);
                let bit = |i: usize| p & (1 << i) != 0;
                let b = p.count_ones();
                if !(2..=6).contains(&b) {
                    continue;
                }
                let transitions = (0..8).filter(|&i| !bit(i) && bit((i + 1) % 8)).count();
                if transitions != 1 {
                    continue;
                }
                // ring order: 0=N(P2) 1=NE 2=E(P4) 3=SE 4=S(P6) 5=SW 6=W(P8) 7=NW
                let (n, e, s, w) = (bit(0), bit(2), bit(4), bit(6));
                let ok = if step == 0 {
                    !(n && e && s) && !(e && s && w)
                } else {
                    !(n && e && w) && !(n && s && w)
                };
                if ok {
                    candidates.push((c, r));
                }
            }
            for &(c, r) in &candidates {
                let p = neighborhood(&m, c, r);
                if p.count_ones() >= 2 && table[p as usize] {
                    m.set(c, r, false);
                    changed = true;
                }
            }
            fg.retain(|&(c, r)| m.get(c, r));
        }
        if !changed {
            break;
        }
    }
    loop {
        let mut changed = false;
        for &(c, r) in &fg {
            let p = neighborhood(&m, c, r);
            if p.count_ones() >= 2 && table[p as usize] && has_staircase(p) {
                m.set(c, r, false);
                changed = true;
            }
        }
        fg.retain(|&(c, r)| m.get(c, r));
        if !changed {
            break;
        }
    }
    m
}

/// True when two 4-neighbors at a right angle are both set, i.e. the
/// pixel is the redundant corner of a staircase.
fn has_staircase(p: u8) -> bool {
    let bit = |i: usize| p & (1 << i) != 0;
    (bit(0) && bit(2)) || (bit(2) && bit(4)) || (bit(4) && bit(6)) || (bit(6) && bit(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(w: usize, h: usize) -> RegionRaster {
        RegionRaster::new(
            w,
            h,
            AffineTransform::north_up(5.0, Point2::new(0.0, 0.0)),
            CrsCode::WEB_MERCATOR,
        )
    }

    #[test]
    fn empty_line_list_leaves_canvas() {
        let mut c = canvas(10, 10);
        let before = c.clone();
        rasterize_lines(&mut c, &[], 10.0).unwrap();
        assert_eq!(c, before);
        assert!(rasterize_lines(&mut c, &[], 0.0).is_err());
    }

    /// Reference: every pixel whose center is within the radius of the
    /// segment, by exhaustive scan.
    fn brute_force_capsule(w: usize, h: usize, t: &AffineTransform, a: Point2, b: Point2, r_m: f64) -> Mask {
        Mask::from_fn(w, h, |c, r| {
            crate::geo::point_segment_distance(t.pixel_center(c, r), a, b) <= r_m
        })
    }

    #[test]
    fn horizontal_segment_band() {
        let mut c = canvas(40, 20);
        // y = -50 m lies on the boundary between rows 9 and 10
        let a = Point2::new(50.0, -50.0);
        let b = Point2::new(150.0, -50.0);
        let l = LineString::new(vec![a, b]).unwrap();
        rasterize_lines(&mut c, &[(&l, FeatureClass::RoadS)], 10.0).unwrap();
        let got = c.channel_mask(Channel::RoadS);
        let oracle = brute_force_capsule(40, 20, &c.transform, a, b, 5.0);
        assert_eq!(got, oracle);
        // 20 px trace in rows 9 and 10, plus one cap pixel per side
        for col in 10..30 {
            assert!(got.get(col, 9) && got.get(col, 10));
        }
        let rows: std::collections::BTreeSet<usize> = got.iter_set().map(|(_, r)| r).collect();
        assert_eq!(rows.into_iter().collect::<Vec<_>>(), vec![9, 10]);
        assert_eq!(got.count(), 2 * 22);

        // centered on a row: 3 rows thick
        let mut c3 = canvas(40, 20);
        let a = Point2::new(50.0, -52.5);
        let b = Point2::new(150.0, -52.5);
        let l = LineString::new(vec![a, b]).unwrap();
        rasterize_lines(&mut c3, &[(&l, FeatureClass::RoadS)], 10.0).unwrap();
        let got = c3.channel_mask(Channel::RoadS);
        assert_eq!(got, brute_force_capsule(40, 20, &c3.transform, a, b, 5.0));
        let rows: std::collections::BTreeSet<usize> = got.iter_set().map(|(_, r)| r).collect();
        assert_eq!(rows.len(), 3);
    }

    #[test]
    fn stroke_matches_brute_force_on_random_segments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut c = canvas(30, 30);
            let a = Point2::new(rng.gen_range(-20.0..170.0), rng.gen_range(-170.0..20.0));
            let b = Point2::new(rng.gen_range(-20.0..170.0), rng.gen_range(-170.0..20.0));
            let width = rng.gen_range(6.0..30.0);
            let Ok(l) = LineString::new(vec![a, b]) else { continue };
            rasterize_lines(&mut c, &[(&l, FeatureClass::RoadP)], width).unwrap();
            let got = c.channel_mask(Channel::RoadP);
            let oracle = brute_force_capsule(30, 30, &c.transform, a, b, width / 2.0);
            // the stroke may only add centerline-trace pixels
            for (col, row) in oracle.iter_set() {
                assert!(got.get(col, row), "missing pixel {col},{row}");
            }
            for (col, row) in got.iter_set() {
                if !oracle.get(col, row) {
                    let p = c.transform.pixel_center(col, row);
                    let d = crate::geo::point_segment_distance(p, a, b);
                    assert!(d <= 5.0 * std::f64::consts::FRAC_1_SQRT_2 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn burning_twice_is_idempotent() {
        let mut c = canvas(30, 30);
        let l = LineString::new(vec![Point2::new(3.0, -4.0), Point2::new(120.0, -90.0)]).unwrap();
        let sq = Polygon::rect(Point2::new(20.0, -60.0), Point2::new(60.0, -20.0)).unwrap();
        rasterize_polygons(&mut c, &[(&sq, FeatureClass::Building, 12.0)]).unwrap();
        rasterize_lines(&mut c, &[(&l, FeatureClass::RoadP)], 15.0).unwrap();
        let once = c.clone();
        rasterize_polygons(&mut c, &[(&sq, FeatureClass::Building, 12.0)]).unwrap();
        rasterize_lines(&mut c, &[(&l, FeatureClass::RoadP)], 15.0).unwrap();
        assert_eq!(c, once);
    }

    #[test]
    fn building_block_fill() {
        let mut c = canvas(30, 30);
        let b = Polygon::rect(Point2::new(25.0, -75.0), Point2::new(75.0, -25.0)).unwrap();
        rasterize_polygons(&mut c, &[(&b, FeatureClass::Building, 24.0)]).unwrap();
        let m = c.building_mask();
        assert_eq!(m.count(), 100);
        for (col, row) in m.iter_set() {
            assert!((5..15).contains(&col) && (5..15).contains(&row));
            assert_eq!(c.get(Channel::BuildingHeight, col, row), 24.0);
        }
    }

    #[test]
    fn polygon_fill_matches_center_in_polygon_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(3..9);
            let cx = rng.gen_range(20.0..130.0);
            let cy = rng.gen_range(-130.0..-20.0);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let ring: Vec<Point2> = angles
                .iter()
                .map(|a| {
                    let rad = rng.gen_range(10.0..60.0);
                    Point2::new(cx + rad * a.cos(), cy + rad * a.sin())
                })
                .collect();
            let Ok(poly) = Polygon::new(ring, vec![]) else { continue };
            let mut c = canvas(30, 30);
            rasterize_polygons(&mut c, &[(&poly, FeatureClass::Water, 1.0)]).unwrap();
            let got = c.channel_mask(Channel::Water);
            let oracle = Mask::from_fn(30, 30, |col, row| {
                crate::geo::point_in_polygon(c.transform.pixel_center(col, row), &poly)
            });
            if oracle.is_empty() {
                assert_eq!(got.count(), 1);
                continue;
            }
            // centers exactly on an edge are the only allowed disagreement
            for col in 0..30 {
                for row in 0..30 {
                    if got.get(col, row) != oracle.get(col, row) {
                        let p = c.transform.pixel_center(col, row);
                        let on_edge = poly
                            .exterior()
                            .windows(2)
                            .any(|w| crate::geo::point_segment_distance(p, w[0], w[1]) < 1e-9);
                        assert!(on_edge, "pixel {col},{row}");
                    }
                }
            }
        }
    }

    #[test]
    fn sub_pixel_polygon_burns_centroid_pixel() {
        let mut c = canvas(10, 10);
        // 1 m^2 square in pixel (3, 4), away from its center
        let p = Polygon::rect(Point2::new(15.2, -21.5), Point2::new(16.2, -20.5)).unwrap();
        rasterize_polygons(&mut c, &[(&p, FeatureClass::Building, 7.0)]).unwrap();
        let m = c.building_mask();
        assert_eq!(m.iter_set().collect::<Vec<_>>(), vec![(3, 4)]);
    }

    #[test]
    fn overlapping_buildings_keep_max() {
        let mut c = canvas(10, 10);
        let a = Polygon::rect(Point2::new(0.0, -30.0), Point2::new(30.0, 0.0)).unwrap();
        let b = Polygon::rect(Point2::new(15.0, -45.0), Point2::new(45.0, -15.0)).unwrap();
        rasterize_polygons(
            &mut c,
            &[(&a, FeatureClass::Building, 10.0), (&b, FeatureClass::Building, 30.0)],
        )
        .unwrap();
        assert_eq!(c.get(Channel::BuildingHeight, 4, 4), 30.0);
        assert_eq!(c.get(Channel::BuildingHeight, 0, 0), 10.0);
        assert_eq!(c.get(Channel::BuildingHeight, 8, 8), 30.0);
    }

    #[test]
    fn density_examples() {
        let mut c = canvas(100, 100);
        compute_density(&mut c, 65).unwrap();
        assert!(c.plane(Channel::Density).iter().all(|&d| d == 0.0));

        let mut full = canvas(40, 30);
        full.plane_mut(Channel::BuildingHeight).fill(5.0);
        compute_density(&mut full, 65).unwrap();
        assert!(full.plane(Channel::Density).iter().all(|&d| d == 1.0));

        let mut one = canvas(101, 101);
        one.planes[Channel::BuildingHeight as usize][50 * 101 + 50] = 3.0;
        compute_density(&mut one, 65).unwrap();
        assert_eq!(one.get(Channel::Density, 50, 50), 1.0 / 4225.0);
        assert!(compute_density(&mut one, 64).is_err());
    }

    #[test]
    fn density_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut c = canvas(37, 23);
        for v in c.plane_mut(Channel::BuildingHeight) {
            *v = if rng.gen_bool(0.3) { 10.0 } else { 0.0 };
        }
        compute_density(&mut c, 9).unwrap();
        for r in 0..23usize {
            for col in 0..37usize {
                let mut built = 0;
                let mut n = 0;
                for rr in r.saturating_sub(4)..(r + 5).min(23) {
                    for cc in col.saturating_sub(4)..(col + 5).min(37) {
                        n += 1;
                        built += usize::from(c.get(Channel::BuildingHeight, cc, rr) > 0.0);
                    }
                }
                let d = c.get(Channel::Density, col, r);
                assert!((0.0..=1.0).contains(&d));
                assert_eq!(d, built as f32 / n as f32);
            }
        }
    }

    #[test]
    fn tiling_examples() {
        assert_eq!(tile_offsets(256, 256, 204), vec![0]);
        assert_eq!(tile_offsets(460, 256, 204), vec![0, 204]);
        assert_eq!(tile_offsets(500, 256, 204), vec![0, 204, 244]);
        assert_eq!(tile_offsets(664, 256, 204), vec![0, 204, 408]);
        let region = canvas(500, 500);
        let tiles = crop_tiles(&region, TILE_PX, STRIDE_PX).unwrap();
        assert_eq!(tiles.len(), 9);
        assert_eq!(crop_tiles(&canvas(256, 256), 256, 204).unwrap().len(), 1);
        assert_eq!(crop_tiles(&canvas(460, 256), 256, 204).unwrap().len(), 2);
    }

    #[test]
    fn tiles_carry_region_data_and_transform() {
        let mut region = canvas(500, 300);
        for (i, v) in region.plane_mut(Channel::Water).iter_mut().enumerate() {
            *v = (i % 7) as f32;
        }
        let tiles = crop_tiles(&region, 256, 204).unwrap();
        let mut covered = vec![0u8; 500 * 300];
        for t in &tiles {
            assert_eq!(t.raster.transform.a.abs(), 5.0);
            assert_eq!(t.raster.transform.e.abs(), 5.0);
            let (co, ro) = t.offset;
            let origin = region.transform.pixel_to_world(co as f64, ro as f64);
            assert_eq!(t.raster.transform.pixel_to_world(0.0, 0.0), origin);
            for r in 0..256 {
                for c in 0..256 {
                    assert_eq!(
                        t.raster.get(Channel::Water, c, r),
                        region.get(Channel::Water, co + c, ro + r)
                    );
                    covered[(ro + r) * 500 + co + c] += 1;
                }
            }
        }
        assert!(covered.iter().all(|&n| n >= 1));
        // interior pixel of the first overlap band appears in two column tiles
        assert!(covered[10 * 500 + 230] >= 2);
    }

    #[test]
    fn small_region_is_padded() {
        let mut region = canvas(100, 80);
        region.plane_mut(Channel::RoadP).fill(1.0);
        let tiles = crop_tiles(&region, 256, 204).unwrap();
        assert_eq!(tiles.len(), 1);
        let t = &tiles[0];
        assert!(t.padded);
        assert_eq!(t.raster.get(Channel::RoadP, 99, 79), 1.0);
        assert_eq!(t.raster.get(Channel::RoadP, 100, 79), 0.0);
        assert_eq!(t.raster.get(Channel::RoadP, 0, 80), 0.0);
    }

    #[test]
    fn task_filter_examples() {
        let empty = crop_tiles(&canvas(256, 256), 256, 204).unwrap();
        assert!(filter_tiles(empty.clone(), TaskFilter::RoadGen).is_empty());
        assert_eq!(filter_tiles(empty.clone(), TaskFilter::All).len(), 1);

        let mut roads = canvas(256, 256);
        roads.plane_mut(Channel::RoadS)[100] = 1.0;
        let roads_only = crop_tiles(&roads, 256, 204).unwrap();
        assert!(filter_tiles(roads_only.clone(), TaskFilter::BuildingGen).is_empty());
        assert_eq!(filter_tiles(roads_only, TaskFilter::RoadGen).len(), 1);

        roads.plane_mut(Channel::BuildingHeight)[500] = 9.0;
        let both = crop_tiles(&roads, 256, 204).unwrap();
        for task in [TaskFilter::RoadGen, TaskFilter::BuildingGen, TaskFilter::All] {
            assert_eq!(filter_tiles(both.clone(), task).len(), 1);
        }
    }

    #[test]
    fn thin_empty_mask() {
        let m = Mask::new(12, 9);
        assert_eq!(thin(&m), m);
    }

    fn endpoints(m: &Mask) -> usize {
        m.iter_set().filter(|&(c, r)| m.neighbor_count(c, r) == 1).count()
    }

    #[test]
    fn thin_bar_to_path() {
        let bar = Mask::from_fn(50, 9, |c, r| (5..45).contains(&c) && (3..6).contains(&r));
        let sk = thin(&bar);
        assert_eq!(endpoints(&sk), 2);
        assert!(sk.iter_set().all(|(c, r)| bar.get(c, r)));
        // every non-end pixel has exactly two neighbors
        assert!(sk.iter_set().all(|(c, r)| {
            let n = sk.neighbor_count(c, r);
            n == 1 || n == 2
        }));
        assert!(sk.count() >= 30);
    }

    #[test]
    fn thin_block_stays_one_component() {
        let block = Mask::from_fn(15, 15, |c, r| (3..12).contains(&c) && (3..12).contains(&r));
        let sk = thin(&block);
        assert!(sk.count() <= 9 && sk.count() >= 1, "{}", sk.count());
        assert!(sk.iter_set().all(|(c, r)| block.get(c, r)));
        let square = Mask::from_fn(4, 4, |c, r| (1..3).contains(&c) && (1..3).contains(&r));
        assert!(!thin(&square).is_empty());
    }

    #[test]
    fn simple_point_table_basics() {
        let t = simple_point_table();
        assert!(!t[0]); // isolated
        assert!(!t[0xff]); // interior
        assert!(t[0b0000_0001]); // single neighbor: end point
        assert!(!t[0b0001_0001]); // N and S: bridge
        assert!(t[0b0000_0111]); // N, NE, E in a row
    }
}
