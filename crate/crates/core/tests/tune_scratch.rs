//! Temporary calibration experiments (not part of the suite).

use lane_intent::autoencoder::train_autoencoder;
use lane_intent::ensemble::{class_counts, train_ensemble, BagMode, EnsembleConfig};
use lane_intent::eval::evaluate_model;
use lane_intent::features::{
    extract_observations, split_by_vehicle, trim_to_imbalance, ExtractionParams, Scaler,
};
use lane_intent::optim::TrainHyperparams;
use lane_intent::synth::{generate_scenario, ScenarioConfig};

fn scenario_obs(seed: u64, n_vehicles: usize, duration: f64, lc_rate: f64, noise: f64)
    -> (Vec<lane_intent::features::Observation>, lane_intent::synth::ManeuverLog)
{
    let config = ScenarioConfig {
        n_vehicles,
        duration,
        lc_rate,
        position_noise_sigma: noise,
        seed,
        ..Default::default()
    };
    let (tracks, log) = generate_scenario(&config).unwrap();
    let params = ExtractionParams { lk_halving: false, ..Default::default() };
    let out = extract_observations(&tracks, &config.geometry(), &params).unwrap();
    (out.observations, log)
}

#[test]
#[ignore]
fn tune_ae_overfit() {
    let (obs, _) = scenario_obs(1, 6, 90.0, 2.0, 0.05);
    println!("total obs: {}", obs.len());
    let subset: Vec<_> = obs.into_iter().take(32).collect();
    let scaler = Scaler::fit(&subset).unwrap();
    let scaled = scaler.apply_set(&subset);
    for (embedding, lr, clip, epochs) in [
        (128usize, 0.02f64, 0.25f64, 2500usize),
        (128, 0.01, 1.0, 2000),
        (256, 0.01, 0.25, 1200),
    ] {
        let start = std::time::Instant::now();
        let hyper = TrainHyperparams {
            batch_size: 32,
            learning_rate: lr,
            clip_norm: clip,
            epochs,
            weight_decay: 0.0,
            ..Default::default()
        };
        let (_, history) = train_autoencoder(&scaled, embedding, &hyper).unwrap();
        let checkpoints: Vec<String> = history
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 250 == 0 || *i == history.len() - 1)
            .map(|(i, l)| format!("{i}:{l:.2e}"))
            .collect();
        println!(
            "H={embedding} lr={lr} clip={clip} epochs={epochs}: {} ({:.1}s)",
            checkpoints.join(" "),
            start.elapsed().as_secs_f64()
        );
    }
}

#[test]
#[ignore]
fn tune_mcbe() {
    use lane_intent::types::ManeuverLabel;
    for (t_iters, embedding, lk_step, wander) in [
        (10usize, 64usize, 4usize, 0.25f64),
        (20, 64, 4, 0.25),
        (10, 64, 3, 0.3),
    ] {
        let total_start = std::time::Instant::now();
        let mut wins = 0;
        let mut lk_prec_delta_sum = 0.0;
        for seed in 0..10u64 {
            let config = ScenarioConfig {
                n_vehicles: 16,
                duration: 360.0,
                lc_rate: 1.2,
                position_noise_sigma: 0.1,
                lateral_wander: wander,
                seed: 1000 + seed,
                ..Default::default()
            };
            let (tracks, _) = generate_scenario(&config).unwrap();
            let params = ExtractionParams { lk_halving: false, lk_step_frames: lk_step, ..Default::default() };
            let obs = extract_observations(&tracks, &config.geometry(), &params).unwrap().observations;
            let obs = trim_to_imbalance(obs, 20.0, seed);
            let counts = class_counts(&obs);
            let (train, test) = split_by_vehicle(obs, 0.75, seed).unwrap();
            let scaler = Scaler::fit(&train).unwrap();
            let scaled_train = scaler.apply_set(&train);

            // Stratified AE subsample: all lane changes plus an equal serving of LKs.
            let lc: Vec<_> = scaled_train.iter().filter(|o| o.label.is_lane_change()).cloned().collect();
            let lk: Vec<_> = scaled_train.iter().filter(|o| o.label == ManeuverLabel::Lk).collect();
            let mut ae_subset = lc.clone();
            let stride = (lk.len() / lc.len().max(1)).max(1);
            ae_subset.extend(lk.iter().step_by(stride).map(|o| (*o).clone()));

            let ae_hyper = TrainHyperparams {
                batch_size: 64,
                learning_rate: 3e-3,
                clip_norm: 1.0,
                epochs: 30,
                weight_decay: 0.0,
                seed,
                ..Default::default()
            };
            let (ae, _hist) = train_autoencoder(&ae_subset, embedding, &ae_hyper).unwrap();

            let cls_hyper = TrainHyperparams {
                batch_size: 64,
                learning_rate: 0.01,
                epochs: 0,
                weight_decay: 0.0,
                seed,
                ..Default::default()
            };
            let mut reports = Vec::new();
            for beta in [1usize, 5] {
                let config = EnsembleConfig {
                    beta,
                    train_iters: t_iters,
                    seed,
                    bag_mode: BagMode::Independent,
                    retrain_encoder: false,
                };
                let ensemble = train_ensemble(
                    &scaled_train, &ae, Some(scaler.clone()), false, &config, &cls_hyper, &ae_hyper,
                ).unwrap();
                reports.push(evaluate_model(&ensemble, test.clone(), seed).unwrap());
            }
            let macro_recall = |r: &lane_intent::eval::EvalReport| {
                let rs: Vec<f64> = r.multiclass.recall.iter().filter_map(|x| *x).collect();
                rs.iter().sum::<f64>() / rs.len() as f64
            };
            let m1 = macro_recall(&reports[0]);
            let m5 = macro_recall(&reports[1]);
            let p1 = reports[0].multiclass.precision[1].unwrap_or(0.0);
            let p5 = reports[1].multiclass.precision[1].unwrap_or(0.0);
            if m5 >= m1 { wins += 1; }
            lk_prec_delta_sum += p5 - p1;
            println!(
                "  T={t_iters} H={embedding} seed {seed}: counts {:?} macro1 {m1:.3} macro5 {m5:.3} lkp1 {p1:.3} lkp5 {p5:.3}",
                counts
            );
        }
        println!(
            "T={t_iters} H={embedding} lk_step={lk_step} wander={wander}: wins {wins}/10, mean lk prec delta {:.4}, total {:.0}s",
            lk_prec_delta_sum / 10.0,
            total_start.elapsed().as_secs_f64()
        );
    }
}
