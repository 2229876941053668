//! Windowed observation extraction: SV selection, relative features,
//! lateral-deviation computation, labeling with TTLC.

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::geometry::LaneGeometry;
use crate::types::{KinematicSample, ManeuverLabel, VehicleClass, VehicleTrack, FRAME_DT};

use super::{
    ExtractionParams, FeatureError, Observation, SvSlot, N_CHANNELS, SEQ_LEN,
};

/// Lateral deviation from the lane centerline, -1 at the left divider,
/// 0 at the centerline, +1 at the right divider.
pub fn compute_dy(y_l: f64, left_divider: f64, lane_width: f64) -> f64 {
    2.0 * (y_l - left_divider) / lane_width - 1.0
}

/// Relative state, SV minus TV: (dy, dx, dvy, dvx).
pub fn relative_features(tv: &KinematicSample, sv: &KinematicSample) -> [f64; 4] {
    [sv.y_l - tv.y_l, sv.x_l - tv.x_l, sv.v_y - tv.v_y, sv.v_x - tv.v_x]
}

/// One-hot static vector: vehicle class (M/A/T), left lane exists,
/// right lane exists. Existence encodes yes = [0,1], no = [1,0].
pub fn encode_static(class: VehicleClass, left_exists: bool, right_exists: bool) -> [f64; 7] {
    let c = class.one_hot();
    let enc = |b: bool| if b { [0.0, 1.0] } else { [1.0, 0.0] };
    let l = enc(left_exists);
    let r = enc(right_exists);
    [c[0], c[1], c[2], l[0], l[1], r[0], r[1]]
}

/// Occupant of one SV slot at the selection frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotState {
    Real { vehicle_id: i64, state: KinematicSample },
    Synthetic,
}

impl SlotState {
    pub fn is_real(&self) -> bool {
        matches!(self, SlotState::Real { .. })
    }
}

/// Features of a synthetic slot occupant at the TV's current state: it
/// matches the TV's velocity, sits at the slot's extreme longitudinal
/// offset, and rides the slot lane's center laterally.
pub fn synthetic_features(
    slot: SvSlot,
    tv: &KinematicSample,
    geometry: &LaneGeometry,
    sv_range: f64,
) -> [f64; 4] {
    let dy = if slot.lane_offset() == 0 {
        0.0
    } else {
        slot_lane_center(slot, tv.lane_id, geometry) - tv.y_l
    };
    [dy, slot.longitudinal_sign() * sv_range, 0.0, 0.0]
}

/// Center of the slot's lane; extrapolated by one lane width when the
/// neighboring lane does not exist.
fn slot_lane_center(slot: SvSlot, tv_lane: u32, geometry: &LaneGeometry) -> f64 {
    let lane = geometry.lane(tv_lane).expect("TV lane validated by caller");
    let target = tv_lane as i64 + slot.lane_offset();
    if target >= 1 {
        if let Some(spec) = geometry.lane(target as u32) {
            return spec.center();
        }
    }
    lane.center() + slot.lane_offset() as f64 * lane.width
}

/// Select the eight SV slots around the TV from the vehicles present at the
/// selection frame. Vehicles farther than `sv_range` longitudinally are
/// treated as absent; absent slots come back as `Synthetic`.
pub fn select_svs(
    tv: &KinematicSample,
    others: &[(i64, KinematicSample)],
    geometry: &LaneGeometry,
    sv_range: f64,
) -> [SlotState; 8] {
    let in_lane = |lane: i64| -> Vec<&(i64, KinematicSample)> {
        if lane < 1 {
            return Vec::new();
        }
        others.iter().filter(|(_, s)| s.lane_id as i64 == lane).collect()
    };
    let within = |s: &KinematicSample| (s.x_l - tv.x_l).abs() <= sv_range;
    let to_state = |pick: Option<&(i64, KinematicSample)>| match pick {
        Some((id, s)) if within(s) => SlotState::Real { vehicle_id: *id, state: *s },
        _ => SlotState::Synthetic,
    };
    // Deterministic tie-break on equal distances: lower vehicle id wins.
    let nearest = |cands: &[&(i64, KinematicSample)],
                   key: &dyn Fn(&KinematicSample) -> Option<f64>|
     -> Option<(i64, KinematicSample)> {
        cands
            .iter()
            .filter_map(|(id, s)| key(s).map(|d| (d, *id, *s)))
            .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap())
            .map(|(_, id, s)| (id, s))
    };

    let tv_lane = tv.lane_id as i64;
    let mut slots = [SlotState::Synthetic; 8];

    let same = in_lane(tv_lane);
    let preceding = nearest(&same, &|s| (s.x_l > tv.x_l).then(|| s.x_l - tv.x_l));
    let following = nearest(&same, &|s| (s.x_l < tv.x_l).then(|| tv.x_l - s.x_l));
    slots[SvSlot::SamePreceding.index()] = to_state(preceding.as_ref());
    slots[SvSlot::SameFollowing.index()] = to_state(following.as_ref());

    for (lane_offset, imm_slot, pre_slot, fol_slot) in [
        (-1i64, SvSlot::LeftImmediate, SvSlot::LeftPreceding, SvSlot::LeftFollowing),
        (1, SvSlot::RightImmediate, SvSlot::RightPreceding, SvSlot::RightFollowing),
    ] {
        let lane = tv_lane + lane_offset;
        let exists = lane >= 1 && geometry.contains(lane as u32);
        if !exists {
            continue; // all three slots stay synthetic
        }
        let cands = in_lane(lane);
        let immediate = nearest(&cands, &|s| Some((s.x_l - tv.x_l).abs()));
        let immediate = match immediate {
            Some((id, s)) if within(&s) => {
                slots[imm_slot.index()] = SlotState::Real { vehicle_id: id, state: s };
                Some((id, s))
            }
            _ => None,
        };
        if let Some((imm_id, imm)) = immediate {
            let rest: Vec<&(i64, KinematicSample)> =
                cands.iter().filter(|(id, _)| *id != imm_id).copied().collect();
            let pre = nearest(&rest, &|s| (s.x_l > imm.x_l).then(|| s.x_l - imm.x_l));
            let fol = nearest(&rest, &|s| (s.x_l < imm.x_l).then(|| imm.x_l - s.x_l));
            slots[pre_slot.index()] = to_state(pre.as_ref());
            slots[fol_slot.index()] = to_state(fol.as_ref());
        }
    }
    slots
}

/// What came out of an extraction pass besides the observations.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ExtractReport {
    /// Windows whose prediction span contained crossings that cancelled out;
    /// labeled LK.
    pub net_zero_windows: usize,
    /// Tracks too short to host a single window.
    pub short_tracks: usize,
    pub windows_emitted: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub observations: Vec<Observation>,
    pub report: ExtractReport,
}

/// Slide labeled windows over every track.
///
/// For each window end `t`: the sequence covers `[t - 3.9 s, t]` keeping
/// every `downsample`-th frame; the label compares the lane id at `t` with
/// the lane id at `t + prediction_window`; TTLC is the time until the first
/// frame whose lane differs from the window-end lane. Windows step by
/// `lc_step_frames` while labeled as a lane change and by `lk_step_frames`
/// otherwise.
pub fn extract_observations(
    tracks: &[VehicleTrack],
    geometry: &LaneGeometry,
    params: &ExtractionParams,
) -> Result<Extraction, FeatureError> {
    params.validate()?;
    for track in tracks {
        for s in &track.samples {
            if !geometry.contains(s.lane_id) {
                return Err(FeatureError::UnknownLane {
                    lane_id: s.lane_id,
                    vehicle_id: track.vehicle_id,
                });
            }
        }
    }

    // Frame index: which tracks cover a given frame.
    let mut frame_index: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, track) in tracks.iter().enumerate() {
        for f in track.first_frame()..=track.last_frame() {
            frame_index.entry(f).or_default().push(i);
        }
    }

    let per_track: Vec<Extraction> = tracks
        .par_iter()
        .enumerate()
        .map(|(ti, track)| extract_track(ti, track, tracks, &frame_index, geometry, params))
        .collect();

    let mut out = Extraction::default();
    for mut part in per_track {
        out.observations.append(&mut part.observations);
        out.report.net_zero_windows += part.report.net_zero_windows;
        out.report.short_tracks += part.report.short_tracks;
        out.report.windows_emitted += part.report.windows_emitted;
    }
    Ok(out)
}

fn extract_track(
    track_idx: usize,
    track: &VehicleTrack,
    tracks: &[VehicleTrack],
    frame_index: &HashMap<i64, Vec<usize>>,
    geometry: &LaneGeometry,
    params: &ExtractionParams,
) -> Extraction {
    let mut out = Extraction::default();
    let retained = params.retained_len();
    let span = (retained - 1) * params.downsample; // frames covered by the sequence
    let pred = params.prediction_frames();
    let first = track.first_frame();
    let last = track.last_frame();

    // Earliest window end leaving a full history; latest leaving the
    // prediction span inside the track.
    let mut end = first + params.history_frames as i64 - 1;
    if end + pred > last {
        out.report.short_tracks += 1;
        return out;
    }

    while end + pred <= last {
        let tv_end = *track.at_frame(end).unwrap();
        let end_lane = tv_end.lane_id as i64;
        let future_lane = track.at_frame(end + pred).unwrap().lane_id as i64;
        let delta = future_lane - end_lane;
        let mut label = ManeuverLabel::from_lane_delta(delta);

        // First future frame leaving the window-end lane, for TTLC and for
        // spotting out-and-back excursions.
        let crossing = (end + 1..=end + pred)
            .find(|f| track.at_frame(*f).unwrap().lane_id as i64 != end_lane);
        let ttlc = match label {
            ManeuverLabel::Lk => {
                if crossing.is_some() {
                    out.report.net_zero_windows += 1;
                }
                label = ManeuverLabel::Lk;
                params.lk_ttlc
            }
            _ => (crossing.expect("lane differs at window end") - end) as f64 * FRAME_DT,
        };

        let others: Vec<(i64, KinematicSample)> = frame_index
            .get(&end)
            .map(|ids| {
                ids.iter()
                    .filter(|&&i| i != track_idx)
                    .filter_map(|&i| tracks[i].at_frame(end).map(|s| (tracks[i].vehicle_id, *s)))
                    .collect()
            })
            .unwrap_or_default();
        let slots = select_svs(&tv_end, &others, geometry, params.sv_range);

        let mut seq = Array2::zeros((SEQ_LEN, N_CHANNELS));
        let first_retained = end - span as i64;
        let y0 = track.at_frame(first_retained).unwrap().y_l;
        for (row, f) in (first_retained..=end).step_by(params.downsample).enumerate() {
            let tv = track.at_frame(f).unwrap();
            let lane = geometry.lane(tv.lane_id).unwrap();
            seq[[row, 0]] = tv.y_l - y0;
            seq[[row, 1]] = compute_dy(tv.y_l, lane.left_divider, lane.width);
            seq[[row, 2]] = tv.v_y;
            seq[[row, 3]] = tv.v_x;
            for slot in SvSlot::ALL {
                let base = slot.channel_base();
                let feat = match slots[slot.index()] {
                    SlotState::Real { vehicle_id, .. } => {
                        let sv = tracks
                            .iter()
                            .find(|t| t.vehicle_id == vehicle_id)
                            .and_then(|t| t.at_frame(f));
                        match sv {
                            Some(sv) => relative_features(tv, sv),
                            // SV track does not reach this far back: fall
                            // back to the slot's synthetic values.
                            None => synthetic_features(slot, tv, geometry, params.sv_range),
                        }
                    }
                    SlotState::Synthetic => synthetic_features(slot, tv, geometry, params.sv_range),
                };
                for (k, v) in feat.iter().enumerate() {
                    seq[[row, base + k]] = *v;
                }
            }
        }

        let lane_spec = geometry.lane(tv_end.lane_id).unwrap();
        let obs = Observation {
            seq,
            statics: encode_static(tv_end.vehicle_class, lane_spec.left_exists, lane_spec.right_exists),
            label,
            ttlc,
            tv_id: track.vehicle_id,
            t_end: tv_end.t,
        };
        debug_assert!(obs.validate().is_ok());
        out.observations.push(obs);
        out.report.windows_emitted += 1;

        end += if label.is_lane_change() {
            params.lc_step_frames as i64
        } else {
            params.lk_step_frames as i64
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LaneGeometry;
    use crate::types::FRAME_DT;

    fn sample(frame: i64, x: f64, y: f64, vx: f64, vy: f64, lane: u32) -> KinematicSample {
        KinematicSample {
            frame,
            t: frame as f64 * FRAME_DT,
            x_l: x,
            y_l: y,
            v_x: vx,
            v_y: vy,
            lane_id: lane,
            vehicle_class: VehicleClass::Auto,
        }
    }

    #[test]
    fn dy_anchors() {
        // Dyadic inputs make the arithmetic exact; the decimal lane-width
        // anchors land within one ulp.
        assert_eq!(compute_dy(3.0, 2.0, 2.0), 0.0);
        assert_eq!(compute_dy(2.0, 2.0, 2.0), -1.0);
        assert_eq!(compute_dy(4.0, 2.0, 2.0), 1.0);
        assert!(compute_dy(5.4, 3.6, 3.6).abs() < 1e-15);
        assert!((compute_dy(3.6, 3.6, 3.6) + 1.0).abs() < 1e-15);
        assert!((compute_dy(7.2, 3.6, 3.6) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_features_componentwise() {
        let tv = sample(0, 100.0, 1.8, 30.0, 0.0, 1);
        let sv = sample(0, 140.0, 1.8, 28.0, 0.0, 1);
        assert_eq!(relative_features(&tv, &sv), [0.0, 40.0, 0.0, -2.0]);
        assert_eq!(relative_features(&tv, &tv), [0.0; 4]);
        let sv2 = sample(0, 100.0, 5.4, 30.0, 0.0, 2);
        assert!((relative_features(&tv, &sv2)[0] - 3.6).abs() < 1e-12);
    }

    #[test]
    fn static_encoding_table() {
        assert_eq!(
            encode_static(VehicleClass::Auto, true, true),
            [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]
        );
        assert_eq!(
            encode_static(VehicleClass::Motorcycle, false, false),
            [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            encode_static(VehicleClass::Truck, true, false),
            [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn lone_tv_gets_all_synthetic_slots() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let tv = sample(0, 100.0, 5.4, 30.0, 0.0, 2);
        let slots = select_svs(&tv, &[], &geo, 100.0);
        assert!(slots.iter().all(|s| !s.is_real()));
        let feat = synthetic_features(SvSlot::SamePreceding, &tv, &geo, 100.0);
        assert_eq!(feat, [0.0, 100.0, 0.0, 0.0]);
        let feat = synthetic_features(SvSlot::LeftFollowing, &tv, &geo, 100.0);
        assert!((feat[0] + 3.6).abs() < 1e-12);
        assert_eq!(&feat[1..], &[-100.0, 0.0, 0.0]);
        let feat = synthetic_features(SvSlot::RightImmediate, &tv, &geo, 100.0);
        assert!((feat[0] - 3.6).abs() < 1e-12);
        assert_eq!(&feat[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_real_preceding_vehicle() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let tv = sample(0, 100.0, 5.4, 30.0, 0.0, 2);
        let ahead = (9, sample(0, 140.0, 5.4, 30.0, 0.0, 2));
        let slots = select_svs(&tv, &[ahead], &geo, 100.0);
        match slots[SvSlot::SamePreceding.index()] {
            SlotState::Real { vehicle_id, state } => {
                assert_eq!(vehicle_id, 9);
                assert_eq!(state.x_l - tv.x_l, 40.0);
            }
            SlotState::Synthetic => panic!("expected real occupant"),
        }
        assert_eq!(slots.iter().filter(|s| s.is_real()).count(), 1);
    }

    #[test]
    fn out_of_range_vehicle_is_absent() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let tv = sample(0, 100.0, 5.4, 30.0, 0.0, 2);
        let far = (9, sample(0, 250.0, 5.4, 30.0, 0.0, 2));
        let slots = select_svs(&tv, &[far], &geo, 100.0);
        assert!(!slots[SvSlot::SamePreceding.index()].is_real());
    }

    #[test]
    fn neighbor_lane_trio() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let tv = sample(0, 100.0, 5.4, 30.0, 0.0, 2);
        let others = vec![
            (1, sample(0, 105.0, 1.8, 30.0, 0.0, 1)), // left immediate
            (2, sample(0, 150.0, 1.8, 30.0, 0.0, 1)), // left preceding (of 1)
            (3, sample(0, 60.0, 1.8, 30.0, 0.0, 1)),  // left following (of 1)
            (4, sample(0, 300.0, 1.8, 30.0, 0.0, 1)), // beyond range
        ];
        let slots = select_svs(&tv, &others, &geo, 100.0);
        let id_of = |slot: SvSlot| match slots[slot.index()] {
            SlotState::Real { vehicle_id, .. } => Some(vehicle_id),
            SlotState::Synthetic => None,
        };
        assert_eq!(id_of(SvSlot::LeftImmediate), Some(1));
        assert_eq!(id_of(SvSlot::LeftPreceding), Some(2));
        assert_eq!(id_of(SvSlot::LeftFollowing), Some(3));
        assert_eq!(id_of(SvSlot::RightImmediate), None);
    }

    #[test]
    fn edge_lane_has_synthetic_outside_slots() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let tv = sample(0, 100.0, 1.8, 30.0, 0.0, 1);
        let other = (5, sample(0, 120.0, 1.8, 30.0, 0.0, 1));
        let slots = select_svs(&tv, &[other], &geo, 100.0);
        assert!(!slots[SvSlot::LeftImmediate.index()].is_real());
        assert!(!slots[SvSlot::LeftPreceding.index()].is_real());
        assert!(!slots[SvSlot::LeftFollowing.index()].is_real());
        assert!(slots[SvSlot::SamePreceding.index()].is_real());
    }

    fn straight_track(id: i64, n: usize, lane: u32, y: f64) -> VehicleTrack {
        VehicleTrack {
            vehicle_id: id,
            samples: (0..n as i64).map(|f| sample(f, 30.0 * f as f64 * FRAME_DT, y, 30.0, 0.0, lane)).collect(),
        }
    }

    #[test]
    fn pure_lane_keeping_yields_lk_windows() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let track = straight_track(1, 200, 2, 5.4);
        let params = ExtractionParams::default();
        let result = extract_observations(&[track], &geo, &params).unwrap();
        assert!(!result.observations.is_empty());
        assert!(result.observations.iter().all(|o| o.label == ManeuverLabel::Lk));
        assert!(result.observations.iter().all(|o| o.ttlc == 6.0));
        // LK stepping: ends 39, 64, 89, ... up to 159 (pred span 40 of 199).
        assert_eq!(result.observations.len(), 5);
    }

    #[test]
    fn short_track_emits_nothing() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let track = straight_track(1, 60, 2, 5.4);
        let result = extract_observations(&[track], &geo, &ExtractionParams::default()).unwrap();
        assert!(result.observations.is_empty());
        assert_eq!(result.report.short_tracks, 1);
    }

    /// A track that crosses from lane 2 into lane 3 at an exact frame.
    fn crossing_track(crossing_frame: i64, n: usize) -> VehicleTrack {
        let samples = (0..n as i64)
            .map(|f| {
                // Step lateral profile: before the crossing frame the
                // vehicle sits at lane 2 center, after at lane 3 center.
                let (y, lane) = if f < crossing_frame { (5.4, 2) } else { (9.0, 3) };
                sample(f, 30.0 * f as f64 * FRAME_DT, y, 30.0, 0.0, lane)
            })
            .collect();
        VehicleTrack { vehicle_id: 1, samples }
    }

    #[test]
    fn crossing_labels_and_ttlc() {
        let geo = LaneGeometry::uniform(3, 3.6);
        // Crossing at frame 100 (t = 10.0 s).
        let track = crossing_track(100, 200);
        let params = ExtractionParams::default();
        let result = extract_observations(&[track], &geo, &params).unwrap();
        let lc: Vec<_> = result.observations.iter().filter(|o| o.label.is_lane_change()).collect();
        assert!(!lc.is_empty());
        for o in &lc {
            assert_eq!(o.label, ManeuverLabel::Lcr);
            let expected = 10.0 - o.t_end;
            assert!((o.ttlc - expected).abs() < 1e-9, "ttlc {} vs {}", o.ttlc, expected);
            assert!(o.ttlc > 0.0 && o.ttlc <= 4.0);
        }
        // Windows ending before t = 6.0 s cannot see the crossing.
        for o in &result.observations {
            if o.t_end < 6.0 - 1e-9 {
                assert_eq!(o.label, ManeuverLabel::Lk);
                assert_eq!(o.ttlc, 6.0);
            }
        }
    }

    #[test]
    fn y_channel_is_relative_to_window_start() {
        let geo = LaneGeometry::uniform(3, 3.6);
        let track = crossing_track(100, 200);
        let result = extract_observations(&[track], &geo, &ExtractionParams::default()).unwrap();
        for o in &result.observations {
            assert_eq!(o.seq[[0, 0]], 0.0, "first retained y must be the reference");
        }
    }

    #[test]
    fn out_and_back_is_lk_and_reported() {
        let geo = LaneGeometry::uniform(3, 3.6);
        // Leaves lane 2 at frame 60, returns at frame 75.
        let samples = (0..160i64)
            .map(|f| {
                let (y, lane) = if (60..75).contains(&f) { (9.0, 3) } else { (5.4, 2) };
                sample(f, 30.0 * f as f64 * FRAME_DT, y, 30.0, 0.0, lane)
            })
            .collect();
        let track = VehicleTrack { vehicle_id: 1, samples };
        let params = ExtractionParams { lk_step_frames: 1, lc_step_frames: 1, ..Default::default() };
        let result = extract_observations(&[track], &geo, &params).unwrap();
        let w = result
            .observations
            .iter()
            .find(|o| (o.t_end - 5.0).abs() < 1e-9)
            .expect("window ending at 5.0 s");
        // Both crossings (6.0 s and 7.5 s) are inside [5.0, 9.0].
        assert_eq!(w.label, ManeuverLabel::Lk);
        assert!(result.report.net_zero_windows > 0);
    }
}
