//! Dataset assembly: vehicle-disjoint splitting, test balancing, LK halving.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::ManeuverLabel;

use super::{FeatureError, Observation};

/// Split observations into train/test with disjoint vehicle-id sets,
/// targeting `ratio` of the observations in the train split.
pub fn split_by_vehicle(
    observations: Vec<Observation>,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Observation>, Vec<Observation>), FeatureError> {
    let mut vehicle_ids: Vec<i64> = Vec::new();
    for obs in &observations {
        if !vehicle_ids.contains(&obs.tv_id) {
            vehicle_ids.push(obs.tv_id);
        }
    }
    if vehicle_ids.len() < 2 {
        return Err(FeatureError::TooFewVehicles(vehicle_ids.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vehicle_ids.shuffle(&mut rng);

    let counts: std::collections::HashMap<i64, usize> =
        vehicle_ids.iter().map(|&id| (id, observations.iter().filter(|o| o.tv_id == id).count())).collect();
    let total: usize = observations.len();
    let target = ratio * total as f64;

    let mut train_ids: Vec<i64> = Vec::new();
    let mut train_count = 0usize;
    for &id in &vehicle_ids {
        if (train_count as f64) < target {
            train_ids.push(id);
            train_count += counts[&id];
        }
    }
    // Both sides must be non-empty.
    if train_ids.len() == vehicle_ids.len() {
        train_ids.pop();
    }
    if train_ids.is_empty() {
        train_ids.push(vehicle_ids[0]);
    }

    let (train, test): (Vec<Observation>, Vec<Observation>) =
        observations.into_iter().partition(|o| train_ids.contains(&o.tv_id));
    Ok((train, test))
}

/// A class-balanced test set plus the lane-keeping observations that were
/// removed to balance it (kept for the LK-recall metric).
#[derive(Debug, Clone)]
pub struct BalancedTest {
    pub balanced: Vec<Observation>,
    pub lk_holdout: Vec<Observation>,
}

/// Randomly discard observations until every class has the minimum class
/// count. Removed LKs are returned as the holdout; removed lane changes are
/// dropped.
pub fn balance_test_set(test: Vec<Observation>, seed: u64) -> Result<BalancedTest, FeatureError> {
    let mut counts = [0usize; 3];
    for obs in &test {
        counts[obs.label.index()] += 1;
    }
    for label in ManeuverLabel::ALL {
        if counts[label.index()] == 0 {
            return Err(FeatureError::EmptyClass(label.as_str()));
        }
    }
    let keep = *counts.iter().min().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per class, choose which instances to keep, uniformly without
    // replacement, then filter in the original order.
    let mut keep_flags: [Vec<bool>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (c, flags) in keep_flags.iter_mut().enumerate() {
        let n = counts[c];
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut f = vec![false; n];
        for &i in idx.iter().take(keep) {
            f[i] = true;
        }
        *flags = f;
    }

    let mut seen = [0usize; 3];
    let mut balanced = Vec::with_capacity(keep * 3);
    let mut lk_holdout = Vec::new();
    for obs in test {
        let c = obs.label.index();
        let kept = keep_flags[c][seen[c]];
        seen[c] += 1;
        if kept {
            balanced.push(obs);
        } else if obs.label == ManeuverLabel::Lk {
            lk_holdout.push(obs);
        }
    }
    Ok(BalancedTest { balanced, lk_holdout })
}

/// Randomly drop half (floor) of the LK observations; lane changes are
/// untouched. Order of the survivors is preserved.
pub fn halve_lk(observations: Vec<Observation>, seed: u64) -> Vec<Observation> {
    let n_lk = observations.iter().filter(|o| o.label == ManeuverLabel::Lk).count();
    let keep = n_lk / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n_lk).collect();
    idx.shuffle(&mut rng);
    let mut keep_flag = vec![false; n_lk];
    for &i in idx.iter().take(keep) {
        keep_flag[i] = true;
    }
    let mut lk_seen = 0usize;
    observations
        .into_iter()
        .filter(|obs| {
            if obs.label == ManeuverLabel::Lk {
                let kept = keep_flag[lk_seen];
                lk_seen += 1;
                kept
            } else {
                true
            }
        })
        .collect()
}

/// Subsample the LK class down to `ratio` times the lane-change count.
/// Useful for constructing sets with a controlled imbalance.
pub fn trim_to_imbalance(observations: Vec<Observation>, ratio: f64, seed: u64) -> Vec<Observation> {
    let n_lc = observations.iter().filter(|o| o.label.is_lane_change()).count();
    let n_lk = observations.iter().filter(|o| o.label == ManeuverLabel::Lk).count();
    let target_lk = ((n_lc as f64) * ratio).round() as usize;
    if target_lk >= n_lk {
        return observations;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep_flag = vec![false; n_lk];
    let mut idx: Vec<usize> = (0..n_lk).collect();
    idx.shuffle(&mut rng);
    for &i in idx.iter().take(target_lk) {
        keep_flag[i] = true;
    }
    let mut lk_seen = 0usize;
    observations
        .into_iter()
        .filter(|obs| {
            if obs.label == ManeuverLabel::Lk {
                let kept = keep_flag[lk_seen];
                lk_seen += 1;
                kept
            } else {
                true
            }
        })
        .collect()
}
