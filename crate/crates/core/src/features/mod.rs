//! Observation extraction and dataset assembly.
//!
//! An observation is 4 s of feature history for one target vehicle (TV),
//! downsampled by 2 into a 20x36 matrix: 4 TV channels plus 8 surrounding
//! vehicle (SV) slots of 4 relative channels each, together with a 7-dim
//! one-hot static vector, a maneuver label, and a time-to-lane-change.

mod dataset;
mod extract;
mod obsfile;
mod scaler;

pub use dataset::{balance_test_set, halve_lk, split_by_vehicle, trim_to_imbalance, BalancedTest};
pub use extract::{
    compute_dy, encode_static, extract_observations, relative_features, select_svs,
    synthetic_features, ExtractReport, Extraction, SlotState,
};
pub use obsfile::{read_observations, write_observations, ObservationSet};
pub use scaler::Scaler;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ManeuverLabel;

/// Retained timesteps per observation.
pub const SEQ_LEN: usize = 20;
/// Sequential feature channels per timestep.
pub const N_CHANNELS: usize = 36;
/// Flattened sequence length.
pub const FLAT_LEN: usize = SEQ_LEN * N_CHANNELS;
/// Static one-hot vector length (class 3 + left-lane-exists 2 + right 2).
pub const N_STATIC: usize = 7;
/// Version tag of the channel layout, recorded in persisted sets.
pub const LAYOUT_VERSION: u32 = 1;

/// TTLC assigned to lane-keeping observations.
pub const LK_TTLC: f64 = 6.0;

/// SV slots in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvSlot {
    SamePreceding,
    SameFollowing,
    LeftImmediate,
    LeftPreceding,
    LeftFollowing,
    RightImmediate,
    RightPreceding,
    RightFollowing,
}

impl SvSlot {
    pub const ALL: [SvSlot; 8] = [
        SvSlot::SamePreceding,
        SvSlot::SameFollowing,
        SvSlot::LeftImmediate,
        SvSlot::LeftPreceding,
        SvSlot::LeftFollowing,
        SvSlot::RightImmediate,
        SvSlot::RightPreceding,
        SvSlot::RightFollowing,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap()
    }

    /// First channel of this slot's (dy, dx, dvy, dvx) quadruple.
    pub fn channel_base(self) -> usize {
        4 + 4 * self.index()
    }

    /// Preceding slots sit ahead of the TV, following slots behind,
    /// immediate-neighbor slots alongside.
    pub fn longitudinal_sign(self) -> f64 {
        match self {
            SvSlot::SamePreceding | SvSlot::LeftPreceding | SvSlot::RightPreceding => 1.0,
            SvSlot::SameFollowing | SvSlot::LeftFollowing | SvSlot::RightFollowing => -1.0,
            SvSlot::LeftImmediate | SvSlot::RightImmediate => 0.0,
        }
    }

    /// Lane offset relative to the TV lane: -1 left, 0 same, +1 right.
    pub fn lane_offset(self) -> i64 {
        match self {
            SvSlot::SamePreceding | SvSlot::SameFollowing => 0,
            SvSlot::LeftImmediate | SvSlot::LeftPreceding | SvSlot::LeftFollowing => -1,
            SvSlot::RightImmediate | SvSlot::RightPreceding | SvSlot::RightFollowing => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SvSlot::SamePreceding => "same_preceding",
            SvSlot::SameFollowing => "same_following",
            SvSlot::LeftImmediate => "left_immediate",
            SvSlot::LeftPreceding => "left_preceding",
            SvSlot::LeftFollowing => "left_following",
            SvSlot::RightImmediate => "right_immediate",
            SvSlot::RightPreceding => "right_preceding",
            SvSlot::RightFollowing => "right_following",
        }
    }
}

/// Name of a sequential channel, for report headers.
pub fn channel_name(channel: usize) -> String {
    match channel {
        0 => "tv_y".into(),
        1 => "tv_dy".into(),
        2 => "tv_vy".into(),
        3 => "tv_vx".into(),
        c if c < N_CHANNELS => {
            let slot = SvSlot::ALL[(c - 4) / 4];
            let kind = ["dy", "dx", "dvy", "dvx"][(c - 4) % 4];
            format!("{}_{}", slot.name(), kind)
        }
        c => format!("channel_{c}"),
    }
}

/// Extraction configuration. Defaults follow the recording protocol:
/// 40 frames of history downsampled by 2, a 4 s prediction window,
/// denser window stepping near lane changes, and random halving of the
/// lane-keeping windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    pub history_frames: usize,
    pub downsample: usize,
    /// Prediction window length in seconds.
    pub prediction_window: f64,
    /// TTLC assigned to LK observations, seconds.
    pub lk_ttlc: f64,
    /// Window step while the current window is labeled as a lane change.
    pub lc_step_frames: usize,
    /// Window step elsewhere.
    pub lk_step_frames: usize,
    /// Longitudinal SV selection range, meters.
    pub sv_range: f64,
    /// Randomly drop half of the LK observations after extraction.
    pub lk_halving: bool,
    pub seed: u64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            history_frames: 40,
            downsample: 2,
            prediction_window: 4.0,
            lk_ttlc: LK_TTLC,
            lc_step_frames: 5,
            lk_step_frames: 25,
            sv_range: 100.0,
            lk_halving: true,
            seed: 0,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.history_frames == 0 || self.downsample == 0 || self.history_frames % self.downsample != 0 {
            return Err(FeatureError::BadParams(format!(
                "history_frames ({}) must be a positive multiple of downsample ({})",
                self.history_frames, self.downsample
            )));
        }
        if self.history_frames / self.downsample != SEQ_LEN {
            return Err(FeatureError::BadParams(format!(
                "history_frames / downsample must equal the fixed sequence length {SEQ_LEN}"
            )));
        }
        if self.lc_step_frames == 0 || self.lk_step_frames == 0 {
            return Err(FeatureError::BadParams("window steps must be positive".into()));
        }
        if self.prediction_window <= 0.0 {
            return Err(FeatureError::BadParams("prediction window must be positive".into()));
        }
        if self.sv_range <= 0.0 {
            return Err(FeatureError::BadParams("sv_range must be positive".into()));
        }
        Ok(())
    }

    pub fn retained_len(&self) -> usize {
        self.history_frames / self.downsample
    }

    pub fn prediction_frames(&self) -> i64 {
        (self.prediction_window / crate::types::FRAME_DT).round() as i64
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid extraction params: {0}")]
    BadParams(String),
    #[error("lane {lane_id} referenced by vehicle {vehicle_id} is not in the geometry")]
    UnknownLane { lane_id: u32, vehicle_id: i64 },
    #[error("need at least 2 vehicles to split, got {0}")]
    TooFewVehicles(usize),
    #[error("class {0} has no observations")]
    EmptyClass(&'static str),
    #[error("observation has non-finite features")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad observation file: {0}")]
    BadObservationFile(String),
}

/// One labeled training/inference unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// (SEQ_LEN, N_CHANNELS) feature history, oldest timestep first.
    pub seq: Array2<f64>,
    /// One-hot static vector: class(3) + left-exists(2) + right-exists(2).
    pub statics: [f64; N_STATIC],
    pub label: ManeuverLabel,
    /// Seconds until the divider crossing; `LK_TTLC` for LK instances.
    pub ttlc: f64,
    pub tv_id: i64,
    /// Time of the last frame in the window, seconds.
    pub t_end: f64,
}

impl Observation {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.seq.dim() != (SEQ_LEN, N_CHANNELS) || !self.seq.iter().all(|v| v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        let ones = self.statics.iter().filter(|&&v| v == 1.0).count();
        let zeros = self.statics.iter().filter(|&&v| v == 0.0).count();
        if ones != 3 || ones + zeros != N_STATIC {
            return Err(FeatureError::NonFinite);
        }
        Ok(())
    }
}
