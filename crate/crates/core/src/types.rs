//! Shared domain types: maneuver classes, vehicle classes, kinematic tracks.

use serde::{Deserialize, Serialize};

/// Recording rate of every supported source, in Hz.
pub const SAMPLE_RATE_HZ: f64 = 10.0;
/// Frame period in seconds.
pub const FRAME_DT: f64 = 0.1;

/// The three maneuver classes, in fixed index order (LCL, LK, LCR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManeuverLabel {
    Lcl,
    Lk,
    Lcr,
}

impl ManeuverLabel {
    pub const ALL: [ManeuverLabel; 3] = [ManeuverLabel::Lcl, ManeuverLabel::Lk, ManeuverLabel::Lcr];

    /// Class index in the fixed (LCL, LK, LCR) ordering.
    pub fn index(self) -> usize {
        match self {
            ManeuverLabel::Lcl => 0,
            ManeuverLabel::Lk => 1,
            ManeuverLabel::Lcr => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<ManeuverLabel> {
        Self::ALL.get(i).copied()
    }

    /// Label implied by a lane-id change over the prediction window.
    /// Lane ids increase to the right, so a negative delta is a left change.
    pub fn from_lane_delta(delta: i64) -> ManeuverLabel {
        match delta.signum() {
            -1 => ManeuverLabel::Lcl,
            1 => ManeuverLabel::Lcr,
            _ => ManeuverLabel::Lk,
        }
    }

    pub fn is_lane_change(self) -> bool {
        self != ManeuverLabel::Lk
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManeuverLabel::Lcl => "LCL",
            ManeuverLabel::Lk => "LK",
            ManeuverLabel::Lcr => "LCR",
        }
    }

    pub fn parse(s: &str) -> Option<ManeuverLabel> {
        match s {
            "LCL" => Some(ManeuverLabel::Lcl),
            "LK" => Some(ManeuverLabel::Lk),
            "LCR" => Some(ManeuverLabel::Lcr),
            _ => None,
        }
    }
}

impl std::fmt::Display for ManeuverLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Vehicle class as recorded in the source data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    Motorcycle,
    Auto,
    Truck,
}

impl VehicleClass {
    /// Numeric code used by NGSIM-style recordings (1, 2, 3).
    pub fn from_code(code: i64) -> Option<VehicleClass> {
        match code {
            1 => Some(VehicleClass::Motorcycle),
            2 => Some(VehicleClass::Auto),
            3 => Some(VehicleClass::Truck),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            VehicleClass::Motorcycle => 1,
            VehicleClass::Auto => 2,
            VehicleClass::Truck => 3,
        }
    }

    /// One-hot encoding: M = [1,0,0], A = [0,1,0], T = [0,0,1].
    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[(self.code() - 1) as usize] = 1.0;
        v
    }
}

/// One time sample of a vehicle's kinematic state.
///
/// `x_l` is the longitudinal coordinate along the road, `y_l` the lateral
/// coordinate across lanes (increasing to the right). Velocities are the
/// corresponding components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicSample {
    pub frame: i64,
    pub t: f64,
    pub x_l: f64,
    pub y_l: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub lane_id: u32,
    pub vehicle_class: VehicleClass,
}

/// A gap-free, constant-rate segment of one vehicle's recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub vehicle_id: i64,
    pub samples: Vec<KinematicSample>,
}

impl VehicleTrack {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_frame(&self) -> i64 {
        self.samples.first().map_or(0, |s| s.frame)
    }

    pub fn last_frame(&self) -> i64 {
        self.samples.last().map_or(0, |s| s.frame)
    }

    /// Sample at an absolute frame number, if the track covers it.
    pub fn at_frame(&self, frame: i64) -> Option<&KinematicSample> {
        let idx = frame.checked_sub(self.first_frame())?;
        if idx < 0 {
            return None;
        }
        self.samples.get(idx as usize)
    }

    /// Frame spacing is exactly one frame everywhere.
    pub fn has_constant_spacing(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].frame - w[0].frame == 1)
    }
}

/// Identity of a data set (recording site or synthetic scenario family).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub sample_rate_hz: f64,
}

impl DatasetMeta {
    pub fn new(name: impl Into<String>) -> DatasetMeta {
        DatasetMeta { name: name.into(), sample_rate_hz: SAMPLE_RATE_HZ }
    }
}
