//! Categorical tile labels and their templated text descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadDensity {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Ordered,
    Disordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingDensity {
    Sparse,
    Medium,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingHeight {
    LowRise,
    MidRise,
    HighRise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileLabels {
    pub road_density: RoadDensity,
    pub orientation: Orientation,
    pub building_density: BuildingDensity,
    pub building_height: BuildingHeight,
}

impl TileLabels {
    /// Every combination, in declaration order.
    pub fn all() -> Vec<TileLabels> {
        let mut out = Vec::with_capacity(36);
        for road_density in [RoadDensity::Dense, RoadDensity::Sparse] {
            for orientation in [Orientation::Ordered, Orientation::Disordered] {
                for building_density in [BuildingDensity::Sparse, BuildingDensity::Medium, BuildingDensity::Dense] {
                    for building_height in [
                        BuildingHeight::LowRise,
                        BuildingHeight::MidRise,
                        BuildingHeight::HighRise,
                    ] {
                        out.push(TileLabels {
                            road_density,
                            orientation,
                            building_density,
                            building_height,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub road_len_km: f64,
    pub entropy_nats: f64,
    /// Built-area fraction cutoffs (sparse | medium | dense).
    pub bdensity: (f64, f64),
    /// Mean height cutoffs in meters (low | mid | high).
    pub bheight_m: (f64, f64),
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            road_len_km: 8.64,
            entropy_nats: 2.0,
            bdensity: (0.1, 0.3),
            bheight_m: (12.0, 30.0),
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.road_len_km,
            self.entropy_nats,
            self.bdensity.0,
            self.bdensity.1,
            self.bheight_m.0,
            self.bheight_m.1,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("label thresholds must be finite".into()));
        }
        if self.bdensity.0 >= self.bdensity.1 {
            return Err(Error::Config("building density thresholds must increase".into()));
        }
        if self.bheight_m.0 >= self.bheight_m.1 {
            return Err(Error::Config("building height thresholds must increase".into()));
        }
        Ok(())
    }
}

/// Per-tile statistics feeding the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileStats {
    pub road_len_km: f64,
    /// `None` for a tile without roads; classified as disordered.
    pub entropy_nats: Option<f64>,
    pub built_fraction: f64,
    /// `None` for a tile without buildings; classified as low-rise.
    pub mean_height_m: Option<f64>,
}

fn three_way<T>(v: f64, (lo, hi): (f64, f64), classes: [T; 3]) -> T {
    let [a, b, c] = classes;
    if v < lo {
        a
    } else if v < hi {
        b
    } else {
        c
    }
}

pub fn classify_tile(stats: &TileStats, th: &Thresholds) -> TileLabels {
    TileLabels {
        road_density: if stats.road_len_km > th.road_len_km {
            RoadDensity::Dense
        } else {
            RoadDensity::Sparse
        },
        orientation: match stats.entropy_nats {
            Some(h) if h < th.entropy_nats => Orientation::Ordered,
            _ => Orientation::Disordered,
        },
        building_density: three_way(
            stats.built_fraction,
            th.bdensity,
            [BuildingDensity::Sparse, BuildingDensity::Medium, BuildingDensity::Dense],
        ),
        building_height: three_way(
            stats.mean_height_m.unwrap_or(0.0),
            th.bheight_m,
            [
                BuildingHeight::LowRise,
                BuildingHeight::MidRise,
                BuildingHeight::HighRise,
            ],
        ),
    }
}

pub fn render_text(labels: &TileLabels) -> String {
    let roads = match labels.road_density {
        RoadDensity::Dense => "dense",
        RoadDensity::Sparse => "sparse",
    };
    let pattern = match labels.orientation {
        Orientation::Ordered => "a grid-like",
        Orientation::Disordered => "an irregular",
    };
    let density = match labels.building_density {
        BuildingDensity::Sparse => "sparse",
        BuildingDensity::Medium => "medium",
        BuildingDensity::Dense => "dense",
    };
    let height = match labels.building_height {
        BuildingHeight::LowRise => "low-rise",
        BuildingHeight::MidRise => "mid-rise",
        BuildingHeight::HighRise => "high-rise",
    };
    format!("OSM, a city tile with {roads} roads in {pattern} pattern, {density} {height} buildings.")
}

/// JSON sidecar written next to each tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileLabelRecord {
    pub tile_id: String,
    pub labels: TileLabels,
    pub text: String,
}

impl TileLabelRecord {
    pub fn new(tile_id: impl Into<String>, labels: TileLabels) -> Self {
        TileLabelRecord {
            tile_id: tile_id.into(),
            text: render_text(&labels),
            labels,
        }
    }
}
