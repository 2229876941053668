//! Lane geometry: lateral divider positions, widths, and neighbor existence.
//!
//! Lateral coordinates increase to the right; lane ids increase in the same
//! direction, so lane `k+1` is the right neighbor of lane `k`.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("lane {lane_id}: missing field `{field}`")]
    MissingField { lane_id: u32, field: &'static str },
    #[error("lane {lane_id}: lane width must be positive, got {width}")]
    InvalidWidth { lane_id: u32, width: f64 },
    #[error("lanes {a} and {b} overlap or are unordered")]
    Overlap { a: u32, b: u32 },
    #[error("no lanes defined")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geometry of a single lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub lane_id: u32,
    /// Lateral coordinate of the left lane divider.
    pub left_divider: f64,
    pub width: f64,
    pub left_exists: bool,
    pub right_exists: bool,
}

impl LaneSpec {
    /// Lateral coordinate of the lane centerline.
    pub fn center(&self) -> f64 {
        self.left_divider + self.width / 2.0
    }

    pub fn right_divider(&self) -> f64 {
        self.left_divider + self.width
    }
}

/// Validated lookup table of lanes, keyed by lane id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    lanes: BTreeMap<u32, LaneSpec>,
}

impl LaneGeometry {
    pub fn from_lanes(specs: impl IntoIterator<Item = LaneSpec>) -> Result<LaneGeometry, GeometryError> {
        let mut lanes = BTreeMap::new();
        for spec in specs {
            if spec.width <= 0.0 {
                return Err(GeometryError::InvalidWidth { lane_id: spec.lane_id, width: spec.width });
            }
            lanes.insert(spec.lane_id, spec);
        }
        if lanes.is_empty() {
            return Err(GeometryError::Empty);
        }
        let ordered: Vec<&LaneSpec> = lanes.values().collect();
        for pair in ordered.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            // Centers must strictly increase with lane id and lanes must not
            // overlap laterally (shared dividers are allowed).
            if b.center() <= a.center() || b.left_divider < a.right_divider() - 1e-9 {
                return Err(GeometryError::Overlap { a: a.lane_id, b: b.lane_id });
            }
        }
        Ok(LaneGeometry { lanes })
    }

    /// Contiguous lanes 1..=n of equal width starting at lateral 0.
    pub fn uniform(n_lanes: u32, width: f64) -> LaneGeometry {
        let lanes = (1..=n_lanes).map(|id| LaneSpec {
            lane_id: id,
            left_divider: (id - 1) as f64 * width,
            width,
            left_exists: id > 1,
            right_exists: id < n_lanes,
        });
        LaneGeometry::from_lanes(lanes).expect("uniform geometry is always valid")
    }

    pub fn lane(&self, lane_id: u32) -> Option<&LaneSpec> {
        self.lanes.get(&lane_id)
    }

    pub fn contains(&self, lane_id: u32) -> bool {
        self.lanes.contains_key(&lane_id)
    }

    pub fn lane_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.lanes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Serialize to the line-oriented key=value config format.
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# lane geometry v1\n");
        for lane in self.lanes.values() {
            out.push_str(&format!("lane.{}.divider = {}\n", lane.lane_id, lane.left_divider));
            out.push_str(&format!("lane.{}.width = {}\n", lane.lane_id, lane.width));
            out.push_str(&format!("lane.{}.left_exists = {}\n", lane.lane_id, lane.left_exists));
            out.push_str(&format!("lane.{}.right_exists = {}\n", lane.lane_id, lane.right_exists));
        }
        out
    }
}

/// Parse lane geometry from a line-oriented `lane.<id>.<field> = <value>`
/// config. `left_exists`/`right_exists` default to lane-id adjacency when
/// omitted.
pub fn load_lane_geometry<R: BufRead>(reader: R) -> Result<LaneGeometry, GeometryError> {
    #[derive(Default)]
    struct Partial {
        divider: Option<f64>,
        width: Option<f64>,
        left_exists: Option<bool>,
        right_exists: Option<bool>,
    }

    let mut partials: BTreeMap<u32, Partial> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| GeometryError::Parse {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let mut parts = key.split('.');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("lane"), Some(id), Some(field)) => {
                let lane_id: u32 = id.parse().map_err(|_| GeometryError::Parse {
                    line: line_no,
                    msg: format!("invalid lane id `{id}`"),
                })?;
                let entry = partials.entry(lane_id).or_default();
                let bad = |msg: String| GeometryError::Parse { line: line_no, msg };
                match field {
                    "divider" => {
                        entry.divider =
                            Some(value.parse().map_err(|_| bad(format!("invalid number `{value}`")))?)
                    }
                    "width" => {
                        entry.width =
                            Some(value.parse().map_err(|_| bad(format!("invalid number `{value}`")))?)
                    }
                    "left_exists" => {
                        entry.left_exists =
                            Some(value.parse().map_err(|_| bad(format!("invalid bool `{value}`")))?)
                    }
                    "right_exists" => {
                        entry.right_exists =
                            Some(value.parse().map_err(|_| bad(format!("invalid bool `{value}`")))?)
                    }
                    other => return Err(bad(format!("unknown lane field `{other}`"))),
                }
            }
            _ => {
                return Err(GeometryError::Parse {
                    line: line_no,
                    msg: format!("unknown key `{key}`"),
                })
            }
        }
    }

    let ids: Vec<u32> = partials.keys().copied().collect();
    let mut specs = Vec::with_capacity(partials.len());
    for (lane_id, p) in partials {
        let divider = p
            .divider
            .ok_or(GeometryError::MissingField { lane_id, field: "divider" })?;
        let width = p.width.ok_or(GeometryError::MissingField { lane_id, field: "width" })?;
        specs.push(LaneSpec {
            lane_id,
            left_divider: divider,
            width,
            left_exists: p.left_exists.unwrap_or_else(|| ids.contains(&(lane_id.wrapping_sub(1)))),
            right_exists: p.right_exists.unwrap_or_else(|| ids.contains(&(lane_id + 1))),
        });
    }
    LaneGeometry::from_lanes(specs)
}
