//! Synthetic multi-lane highway scenarios with ground-truth lane-change
//! annotations.
//!
//! Vehicles cruise at near-constant speed; scheduled lane changes follow a
//! minimum-jerk (quintic) lateral profile between lane centers, which gives
//! realistic lateral-velocity signatures without a behavioral traffic model.
//! The exact divider-crossing instants are logged, so extraction and
//! labeling can be checked against known ground truth.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::LaneGeometry;
use crate::seeds::indexed_rng;
use crate::types::{KinematicSample, ManeuverLabel, VehicleClass, VehicleTrack, FRAME_DT};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: bad maneuver record: {msg}")]
    BadManeuverRecord { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_lanes: u32,
    pub lane_width: f64,
    pub n_vehicles: usize,
    /// Scenario length in seconds.
    pub duration: f64,
    /// Expected lane changes per vehicle-minute.
    pub lc_rate: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Standard deviation of additive Gaussian position noise, meters.
    pub position_noise_sigma: f64,
    /// Maximum amplitude of the smooth in-lane lateral wander, meters.
    /// Zero keeps every vehicle glued to the lane center between maneuvers.
    pub lateral_wander: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_lanes: 3,
            lane_width: 3.6,
            n_vehicles: 10,
            duration: 120.0,
            lc_rate: 1.0,
            speed_min: 22.0,
            speed_max: 33.0,
            position_noise_sigma: 0.05,
            lateral_wander: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_lanes < 1 {
            return Err(SynthError::InvalidConfig("n_lanes must be >= 1".into()));
        }
        if self.duration <= 0.0 {
            return Err(SynthError::InvalidConfig("duration must be positive".into()));
        }
        if self.lc_rate < 0.0 {
            return Err(SynthError::InvalidConfig("lc_rate must be >= 0".into()));
        }
        if self.lane_width <= 0.0 {
            return Err(SynthError::InvalidConfig("lane_width must be positive".into()));
        }
        if !(self.speed_min <= self.speed_max) || self.speed_min < 0.0 {
            return Err(SynthError::InvalidConfig("speed range must satisfy 0 <= min <= max".into()));
        }
        if self.position_noise_sigma < 0.0 {
            return Err(SynthError::InvalidConfig("position_noise_sigma must be >= 0".into()));
        }
        if self.lateral_wander < 0.0 || self.lateral_wander >= self.lane_width / 4.0 {
            return Err(SynthError::InvalidConfig(
                "lateral_wander must be in [0, lane_width/4) so vehicles stay in lane".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> LaneGeometry {
        LaneGeometry::uniform(self.n_lanes, self.lane_width)
    }
}

/// One executed lane change with its exact divider-crossing instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub vehicle_id: i64,
    pub direction: ManeuverLabel,
    /// Instant the noiseless lateral trajectory crosses the divider, seconds.
    pub crossing_time: f64,
    pub start_lane: u32,
    pub end_lane: u32,
}

/// Ground truth for a generated scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManeuverLog {
    pub maneuvers: Vec<Maneuver>,
    /// Scheduled maneuvers that were dropped because they would have
    /// overlapped an earlier one (or could not complete in time).
    pub dropped: usize,
}

/// Minimum-jerk blend, 0 at tau=0 to 1 at tau=1.
fn quintic(tau: f64) -> f64 {
    let t3 = tau * tau * tau;
    10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * tau * tau
}

fn quintic_deriv(tau: f64) -> f64 {
    let t2 = tau * tau;
    30.0 * t2 - 60.0 * t2 * tau + 30.0 * t2 * t2
}

/// Solve quintic(tau) = frac on [0, 1] by bisection.
fn quintic_inverse(frac: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if quintic(mid) < frac {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct PlannedManeuver {
    start: f64,
    duration: f64,
    from_center: f64,
    to_center: f64,
}

/// Generate a seeded scenario. Identical config (including seed) produces
/// bit-identical tracks and log.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<(Vec<VehicleTrack>, ManeuverLog), SynthError> {
    config.validate()?;
    let geometry = config.geometry();
    let n_frames = (config.duration / FRAME_DT).round() as i64;
    let span = (config.n_vehicles as f64 * 25.0).max(100.0);

    let mut tracks = Vec::with_capacity(config.n_vehicles);
    let mut log = ManeuverLog::default();

    for v in 0..config.n_vehicles {
        let vehicle_id = v as i64 + 1;
        let mut rng = indexed_rng(config.seed, "synth.vehicle", v as u64);

        let start_lane: u32 = rng.gen_range(1..=config.n_lanes);
        let v0 = rng.gen_range(config.speed_min..=config.speed_max);
        let x0 = rng.gen_range(0.0..span);
        // Bounded longitudinal speed jitter: a slow sinusoid.
        let jitter_amp = rng.gen_range(0.0..0.3);
        let jitter_freq = rng.gen_range(0.1..0.5);
        let jitter_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        // Smooth in-lane lateral wander; zero amplitude disables it.
        let (wander_amp, wander_freq, wander_phase) = if config.lateral_wander > 0.0 {
            (
                rng.gen_range(0.2..=1.0) * config.lateral_wander,
                rng.gen_range(0.2..0.6),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        } else {
            (0.0, 1.0, 0.0)
        };
        let wander_at = move |t: f64| wander_amp * (wander_freq * t + wander_phase).sin();
        let wander_vel =
            move |t: f64| wander_amp * wander_freq * (wander_freq * t + wander_phase).cos();
        let vehicle_class = match rng.gen_range(0..10) {
            0 => VehicleClass::Motorcycle,
            1 | 2 => VehicleClass::Truck,
            _ => VehicleClass::Auto,
        };

        // Schedule lane changes as a Poisson arrival process; overlapping or
        // non-completing candidates are dropped, never merged.
        let mut planned: Vec<PlannedManeuver> = Vec::new();
        let mut lane = start_lane;
        let mut prev_end = 0.0_f64;
        let rate_per_s = config.lc_rate / 60.0;
        if rate_per_s > 0.0 {
            let mut t = 0.0;
            loop {
                // Exponential inter-arrival gap.
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                t += -u.ln() / rate_per_s;
                if t >= config.duration {
                    break;
                }
                let dur = rng.gen_range(3.0..=5.0);
                let go_left = lane > 1;
                let go_right = lane < config.n_lanes;
                let direction = match (go_left, go_right) {
                    (true, true) => {
                        if rng.gen_bool(0.5) {
                            ManeuverLabel::Lcl
                        } else {
                            ManeuverLabel::Lcr
                        }
                    }
                    (true, false) => ManeuverLabel::Lcl,
                    (false, true) => ManeuverLabel::Lcr,
                    (false, false) => {
                        log.dropped += 1;
                        continue;
                    }
                };
                if t < prev_end || t + dur > config.duration {
                    log.dropped += 1;
                    continue;
                }
                let target = match direction {
                    ManeuverLabel::Lcl => lane - 1,
                    ManeuverLabel::Lcr => lane + 1,
                    ManeuverLabel::Lk => unreachable!(),
                };
                let from_center = geometry.lane(lane).unwrap().center();
                let to_center = geometry.lane(target).unwrap().center();
                // Crossing instant: where the noiseless lateral trajectory
                // (quintic blend plus wander) passes the divider. The blend
                // slope dominates the wander slope there, so the crossing is
                // unique and bisection is safe.
                let divider = if target > lane {
                    geometry.lane(lane).unwrap().right_divider()
                } else {
                    geometry.lane(lane).unwrap().left_divider
                };
                let crossing_time = if wander_amp == 0.0 {
                    let frac = (divider - from_center) / (to_center - from_center);
                    t + dur * quintic_inverse(frac)
                } else {
                    let f = |x: f64| {
                        from_center
                            + (to_center - from_center) * quintic(((x - t) / dur).clamp(0.0, 1.0))
                            + wander_at(x)
                            - divider
                    };
                    let (mut lo, mut hi) = (t, t + dur);
                    let lo_sign = f(lo).signum();
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if f(mid).signum() == lo_sign {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                };
                planned.push(PlannedManeuver { start: t, duration: dur, from_center, to_center });
                log.maneuvers.push(Maneuver {
                    vehicle_id,
                    direction,
                    crossing_time,
                    start_lane: lane,
                    end_lane: target,
                });
                lane = target;
                prev_end = t + dur;
            }
        }

        // Noiseless lateral position/velocity at time t.
        let lateral = |t: f64| -> (f64, f64) {
            let base = geometry.lane(start_lane).unwrap().center();
            let mut y = base;
            let mut vy = 0.0;
            for m in &planned {
                if t >= m.start + m.duration {
                    y = m.to_center;
                } else if t >= m.start {
                    let tau = (t - m.start) / m.duration;
                    y = m.from_center + (m.to_center - m.from_center) * quintic(tau);
                    vy = (m.to_center - m.from_center) / m.duration * quintic_deriv(tau);
                    break;
                } else {
                    break;
                }
            }
            (y + wander_at(t), vy + wander_vel(t))
        };

        let noise = Normal::new(0.0, config.position_noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
        let mut samples = Vec::with_capacity(n_frames as usize);
        for frame in 0..n_frames {
            let t = frame as f64 * FRAME_DT;
            let (y_clean, v_y) = lateral(t);
            let x_clean = x0 + v0 * t
                - jitter_amp / jitter_freq * ((jitter_freq * t + jitter_phase).cos() - jitter_phase.cos());
            let v_x = v0 + jitter_amp * (jitter_freq * t + jitter_phase).sin();
            let (ny, nx) = if config.position_noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let y_l = y_clean + ny;
            let x_l = x_clean + nx;
            samples.push(KinematicSample {
                frame,
                t,
                x_l,
                y_l,
                v_x,
                v_y,
                lane_id: lane_id_for(&geometry, y_l),
                vehicle_class,
            });
        }
        tracks.push(VehicleTrack { vehicle_id, samples });
    }

    log.maneuvers.sort_by(|a, b| {
        (a.vehicle_id, a.crossing_time).partial_cmp(&(b.vehicle_id, b.crossing_time)).unwrap()
    });
    Ok((tracks, log))
}

/// Lane containing a lateral coordinate; clamped to the nearest outer lane.
fn lane_id_for(geometry: &LaneGeometry, y: f64) -> u32 {
    let mut result = None;
    for id in geometry.lane_ids() {
        let lane = geometry.lane(id).unwrap();
        if y < lane.right_divider() {
            result = Some(id);
            break;
        }
    }
    result.unwrap_or_else(|| geometry.lane_ids().last().unwrap())
}

const MANEUVER_FORMAT_HEADER: &str = "# lane-intent maneuvers v1";

/// Write the maneuver log as tab-delimited text.
pub fn write_maneuver_log<W: Write>(mut w: W, log: &ManeuverLog) -> std::io::Result<()> {
    writeln!(w, "{MANEUVER_FORMAT_HEADER}")?;
    writeln!(w, "# dropped={}", log.dropped)?;
    writeln!(w, "vehicle_id\tdirection\tcrossing_time\tstart_lane\tend_lane")?;
    for m in &log.maneuvers {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            m.vehicle_id, m.direction, m.crossing_time, m.start_lane, m.end_lane
        )?;
    }
    Ok(())
}

/// Read a maneuver log written by [`write_maneuver_log`].
pub fn read_maneuver_log<R: BufRead>(reader: R) -> Result<ManeuverLog, SynthError> {
    let mut log = ManeuverLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("# dropped=") {
            log.dropped = rest.parse().map_err(|_| SynthError::BadManeuverRecord {
                line: line_no,
                msg: "bad dropped count".into(),
            })?;
            continue;
        }
        if trimmed.starts_with('#') || trimmed.starts_with("vehicle_id") {
            continue;
        }
        let f: Vec<&str> = trimmed.split('\t').collect();
        let bad = |msg: &str| SynthError::BadManeuverRecord { line: line_no, msg: msg.into() };
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        log.maneuvers.push(Maneuver {
            vehicle_id: f[0].parse().map_err(|_| bad("bad vehicle id"))?,
            direction: ManeuverLabel::parse(f[1]).ok_or_else(|| bad("bad direction"))?,
            crossing_time: f[2].parse().map_err(|_| bad("bad crossing time"))?,
            start_lane: f[3].parse().map_err(|_| bad("bad start lane"))?,
            end_lane: f[4].parse().map_err(|_| bad("bad end lane"))?,
        });
    }
    Ok(log)
}
