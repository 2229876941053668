//! Trajectory ingestion: NGSIM-style delimited text in, validated
//! constant-rate per-vehicle tracks out.
//!
//! Source recordings provide positions and a scalar speed; the lateral and
//! longitudinal velocity components needed downstream are derived here by
//! finite differences. Tracks with frame gaps are split into separate
//! segments rather than interpolated.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::types::{KinematicSample, VehicleClass, VehicleTrack, FRAME_DT};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("input has no header row")]
    MissingHeader,
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("track for vehicle {vehicle_id} has {len} samples; at least 2 required")]
    TrackTooShort { vehicle_id: i64, len: usize },
    #[error("smoothing window must be odd and larger than the polynomial order (window {window}, order {order})")]
    BadSmoothing { window: usize, order: usize },
    #[error("line {line}: bad track record: {msg}")]
    BadTrackRecord { line: usize, msg: String },
    #[error("unsupported track format version `{0}`")]
    BadTrackVersion(String),
}

/// Names of the source columns holding each required field.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub vehicle_id: String,
    pub frame_id: String,
    pub lateral: String,
    pub longitudinal: String,
    pub speed: String,
    pub lane_id: String,
    pub vehicle_class: String,
}

impl Default for ColumnMap {
    /// NGSIM schema: `Local_X` is the lateral coordinate and `Local_Y` the
    /// longitudinal one.
    fn default() -> Self {
        ColumnMap {
            vehicle_id: "Vehicle_ID".into(),
            frame_id: "Frame_ID".into(),
            lateral: "Local_X".into(),
            longitudinal: "Local_Y".into(),
            speed: "v_Vel".into(),
            lane_id: "Lane_ID".into(),
            vehicle_class: "v_Class".into(),
        }
    }
}

/// One row that could not be parsed; the rest of the file is still used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

/// A split-off segment that failed validation after gap-splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedSegment {
    pub vehicle_id: i64,
    pub first_frame: i64,
    pub reason: String,
}

/// What happened during parsing, beyond the tracks themselves.
#[derive(Debug, Default, Clone)]
pub struct IngestReport {
    pub rows_ok: usize,
    pub row_errors: Vec<RowError>,
    pub rejected_segments: Vec<RejectedSegment>,
    /// Number of tracks that were split out of a vehicle with frame gaps.
    pub gap_splits: usize,
}

/// Parse a delimited trajectory recording into per-vehicle track segments.
///
/// The delimiter (comma or tab) is taken from the header row. Rows with
/// non-numeric fields are reported with their line number and skipped.
/// Vehicles with frame gaps are split at each gap; duplicate frames reject
/// the containing segment.
pub fn parse_trajectory_file<R: BufRead>(
    reader: R,
    columns: &ColumnMap,
) -> Result<(Vec<VehicleTrack>, IngestReport), IngestError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(IngestError::MissingHeader)??;
    let delim = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<&str> = header.split(delim).map(str::trim).collect();
    let col = |name: &str| -> Result<usize, IngestError> {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let c_id = col(&columns.vehicle_id)?;
    let c_frame = col(&columns.frame_id)?;
    let c_lat = col(&columns.lateral)?;
    let c_lon = col(&columns.longitudinal)?;
    let c_speed = col(&columns.speed)?;
    let c_lane = col(&columns.lane_id)?;
    let c_class = col(&columns.vehicle_class)?;

    let mut report = IngestReport::default();
    let mut by_vehicle: BTreeMap<i64, Vec<(i64, KinematicSample)>> = BTreeMap::new();

    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2; // 1-based, after the header
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        match parse_row(&fields, line_no, c_id, c_frame, c_lat, c_lon, c_speed, c_lane, c_class) {
            Ok((vehicle_id, frame, sample)) => {
                report.rows_ok += 1;
                by_vehicle.entry(vehicle_id).or_default().push((frame, sample));
            }
            Err(err) => report.row_errors.push(err),
        }
    }

    let mut tracks = Vec::new();
    for (vehicle_id, mut rows) in by_vehicle {
        rows.sort_by_key(|(frame, _)| *frame);
        let n_before = tracks.len();
        split_into_segments(vehicle_id, rows, &mut tracks, &mut report);
        if tracks.len() > n_before + 1 {
            report.gap_splits += tracks.len() - n_before - 1;
        }
    }
    Ok((tracks, report))
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    fields: &[&str],
    line_no: usize,
    c_id: usize,
    c_frame: usize,
    c_lat: usize,
    c_lon: usize,
    c_speed: usize,
    c_lane: usize,
    c_class: usize,
) -> Result<(i64, i64, KinematicSample), RowError> {
    let err = |msg: String| RowError { line: line_no, message: msg };
    let get = |i: usize| -> Result<&str, RowError> {
        fields.get(i).copied().ok_or_else(|| err(format!("missing field {i}")))
    };
    let int = |i: usize, what: &str| -> Result<i64, RowError> {
        get(i)?.parse::<i64>().map_err(|_| err(format!("non-numeric {what} `{}`", fields.get(i).copied().unwrap_or(""))))
    };
    let num = |i: usize, what: &str| -> Result<f64, RowError> {
        let v: f64 = get(i)?
            .parse()
            .map_err(|_| err(format!("non-numeric {what} `{}`", fields.get(i).copied().unwrap_or(""))))?;
        if !v.is_finite() {
            return Err(err(format!("non-finite {what}")));
        }
        Ok(v)
    };

    let vehicle_id = int(c_id, "vehicle id")?;
    let frame = int(c_frame, "frame id")?;
    let lateral = num(c_lat, "lateral position")?;
    let longitudinal = num(c_lon, "longitudinal position")?;
    let speed = num(c_speed, "speed")?;
    if speed < 0.0 {
        return Err(err(format!("negative speed {speed}")));
    }
    let lane_raw = int(c_lane, "lane id")?;
    if lane_raw < 1 {
        return Err(err(format!("lane id must be >= 1, got {lane_raw}")));
    }
    let class_code = int(c_class, "vehicle class")?;
    let vehicle_class = VehicleClass::from_code(class_code)
        .ok_or_else(|| err(format!("unknown vehicle class code {class_code}")))?;

    let sample = KinematicSample {
        frame,
        t: frame as f64 * FRAME_DT,
        x_l: longitudinal,
        y_l: lateral,
        v_x: 0.0,
        v_y: 0.0,
        lane_id: lane_raw as u32,
        vehicle_class,
    };
    Ok((vehicle_id, frame, sample))
}

fn split_into_segments(
    vehicle_id: i64,
    rows: Vec<(i64, KinematicSample)>,
    tracks: &mut Vec<VehicleTrack>,
    report: &mut IngestReport,
) {
    let mut current: Vec<KinematicSample> = Vec::new();
    let mut duplicate_in_current = false;
    let flush = |samples: &mut Vec<KinematicSample>,
                 dup: &mut bool,
                 tracks: &mut Vec<VehicleTrack>,
                 report: &mut IngestReport| {
        if samples.is_empty() {
            return;
        }
        let seg = std::mem::take(samples);
        if *dup {
            report.rejected_segments.push(RejectedSegment {
                vehicle_id,
                first_frame: seg[0].frame,
                reason: "non-constant frame spacing (duplicate frames)".into(),
            });
        } else {
            tracks.push(VehicleTrack { vehicle_id, samples: seg });
        }
        *dup = false;
    };

    for (frame, sample) in rows {
        match current.last() {
            Some(last) if frame == last.frame => duplicate_in_current = true,
            Some(last) if frame > last.frame + 1 => {
                flush(&mut current, &mut duplicate_in_current, tracks, report);
                current.push(sample);
            }
            _ => current.push(sample),
        }
    }
    flush(&mut current, &mut duplicate_in_current, tracks, report);
}

/// Optional position pre-smoothing for velocity derivation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Smoothing {
    /// Window length in samples; must be odd.
    pub window: usize,
    /// Polynomial order; must be < window.
    pub order: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing { window: 11, order: 3 }
    }
}

/// Fill `v_x`/`v_y` from positions by central finite differences
/// (one-sided at the endpoints). When `smoothing` is set, positions are
/// first fit with a sliding polynomial window, Savitzky-Golay style.
pub fn derive_velocities(
    track: &VehicleTrack,
    smoothing: Option<Smoothing>,
) -> Result<VehicleTrack, IngestError> {
    let n = track.samples.len();
    if n < 2 {
        return Err(IngestError::TrackTooShort { vehicle_id: track.vehicle_id, len: n });
    }
    let mut xs: Vec<f64> = track.samples.iter().map(|s| s.x_l).collect();
    let mut ys: Vec<f64> = track.samples.iter().map(|s| s.y_l).collect();
    if let Some(s) = smoothing {
        if s.window % 2 == 0 || s.order >= s.window {
            return Err(IngestError::BadSmoothing { window: s.window, order: s.order });
        }
        xs = smooth_polynomial(&xs, s.window, s.order);
        ys = smooth_polynomial(&ys, s.window, s.order);
    }

    let diff = |p: &[f64], i: usize| -> f64 {
        if i == 0 {
            (p[1] - p[0]) / FRAME_DT
        } else if i == n - 1 {
            (p[n - 1] - p[n - 2]) / FRAME_DT
        } else {
            (p[i + 1] - p[i - 1]) / (2.0 * FRAME_DT)
        }
    };

    let mut out = track.clone();
    for i in 0..n {
        out.samples[i].x_l = xs[i];
        out.samples[i].y_l = ys[i];
        out.samples[i].v_x = diff(&xs, i);
        out.samples[i].v_y = diff(&ys, i);
    }
    Ok(out)
}

/// Sliding least-squares polynomial fit evaluated at each sample.
/// Windows are clamped (asymmetric) near the edges.
fn smooth_polynomial(values: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = values.len();
    if n <= order + 1 {
        return values.to_vec();
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let offsets: Vec<f64> = (lo..hi).map(|j| j as f64 - i as f64).collect();
        let win: Vec<f64> = values[lo..hi].to_vec();
        let k = order.min(win.len() - 1);
        let coeffs = polyfit(&offsets, &win, k);
        out.push(coeffs[0]); // value at offset 0
    }
    out
}

/// Least-squares polynomial fit via normal equations; returns coefficients
/// in increasing power order.
fn polyfit(xs: &[f64], ys: &[f64], order: usize) -> Vec<f64> {
    let m = order + 1;
    // Normal matrix: N[a][b] = sum x^(a+b); rhs[a] = sum y x^a.
    let mut n_mat = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut pow = vec![1.0; 2 * m - 1];
        for p in 1..2 * m - 1 {
            pow[p] = pow[p - 1] * x;
        }
        for a in 0..m {
            for b in 0..m {
                n_mat[a][b] += pow[a + b];
            }
            rhs[a] += y * pow[a];
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&a, &b| n_mat[a][col].abs().partial_cmp(&n_mat[b][col].abs()).unwrap())
            .unwrap();
        n_mat.swap(col, pivot);
        rhs.swap(col, pivot);
        let diag = n_mat[col][col];
        if diag.abs() < 1e-300 {
            continue;
        }
        for row in 0..m {
            if row == col {
                continue;
            }
            let factor = n_mat[row][col] / diag;
            for k in col..m {
                n_mat[row][k] -= factor * n_mat[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    (0..m).map(|i| if n_mat[i][i].abs() < 1e-300 { 0.0 } else { rhs[i] / n_mat[i][i] }).collect()
}

const TRACK_FORMAT_HEADER: &str = "# lane-intent tracks v1";

/// Write tracks in the internal versioned tab-delimited format.
///
/// Floats are written with the shortest round-trippable representation, so
/// write→read is bit-exact.
pub fn write_tracks<W: Write>(mut w: W, tracks: &[VehicleTrack]) -> std::io::Result<()> {
    writeln!(w, "{TRACK_FORMAT_HEADER}")?;
    writeln!(w, "vehicle_id\tframe\tx_l\ty_l\tv_x\tv_y\tlane_id\tclass")?;
    for track in tracks {
        for s in &track.samples {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                track.vehicle_id, s.frame, s.x_l, s.y_l, s.v_x, s.v_y, s.lane_id,
                s.vehicle_class.code()
            )?;
        }
    }
    Ok(())
}

/// Read tracks written by [`write_tracks`]. Consecutive rows with the same
/// vehicle id and contiguous frames form one track; a frame gap starts a new
/// segment.
pub fn read_tracks<R: BufRead>(reader: R) -> Result<Vec<VehicleTrack>, IngestError> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or(IngestError::MissingHeader)?;
    let first = first?;
    if first.trim() != TRACK_FORMAT_HEADER {
        return Err(IngestError::BadTrackVersion(first.trim().to_string()));
    }
    let (_, header) = lines.next().ok_or(IngestError::MissingHeader)?;
    header?;

    let mut tracks: Vec<VehicleTrack> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |msg: String| IngestError::BadTrackRecord { line: line_no, msg };
        if f.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", f.len())));
        }
        let vehicle_id: i64 = f[0].parse().map_err(|_| bad("bad vehicle id".into()))?;
        let frame: i64 = f[1].parse().map_err(|_| bad("bad frame".into()))?;
        let parse_f = |s: &str, what: &str| -> Result<f64, IngestError> {
            s.parse().map_err(|_| IngestError::BadTrackRecord {
                line: line_no,
                msg: format!("bad {what}"),
            })
        };
        let sample = KinematicSample {
            frame,
            t: frame as f64 * FRAME_DT,
            x_l: parse_f(f[2], "x_l")?,
            y_l: parse_f(f[3], "y_l")?,
            v_x: parse_f(f[4], "v_x")?,
            v_y: parse_f(f[5], "v_y")?,
            lane_id: f[6].parse().map_err(|_| bad("bad lane id".into()))?,
            vehicle_class: VehicleClass::from_code(
                f[7].parse().map_err(|_| bad("bad class".into()))?,
            )
            .ok_or_else(|| bad("unknown class code".into()))?,
        };
        match tracks.last_mut() {
            Some(t) if t.vehicle_id == vehicle_id && t.last_frame() + 1 == frame => {
                t.samples.push(sample)
            }
            _ => tracks.push(VehicleTrack { vehicle_id, samples: vec![sample] }),
        }
    }
    Ok(tracks)
}
