//! Flat key=value run configuration with command-line overrides.

use std::path::Path;

use serde::Serialize;

use lane_intent::ensemble::BagMode;
use lane_intent::features::ExtractionParams;
use lane_intent::ingest::Smoothing;
use lane_intent::optim::TrainHyperparams;
use lane_intent::synth::ScenarioConfig;

use crate::error::CliError;

/// Everything a run needs, resolved from defaults, the config file, and
/// command-line overrides (in that order of precedence).
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset_name: String,
    pub static_features: bool,

    // synth
    pub synth_n_lanes: u32,
    pub synth_lane_width: f64,
    pub synth_n_vehicles: usize,
    pub synth_duration: f64,
    pub synth_lc_rate: f64,
    pub synth_speed_min: f64,
    pub synth_speed_max: f64,
    pub synth_noise_sigma: f64,
    pub synth_lateral_wander: f64,

    // ingest
    pub smoothing: bool,
    pub smoothing_window: usize,
    pub smoothing_order: usize,

    // extract
    pub extract_lc_step: usize,
    pub extract_lk_step: usize,
    pub extract_sv_range: f64,
    pub extract_lk_halving: bool,
    pub extract_split_ratio: f64,

    // training
    pub embedding: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub ae_epochs: usize,

    // ensemble
    pub beta: usize,
    pub train_iters: usize,
    pub bag_mode: BagMode,
    pub retrain_encoder: bool,

    // evaluation
    pub ttlc_bin_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset_name: "synth".into(),
            static_features: false,
            synth_n_lanes: 3,
            synth_lane_width: 3.6,
            synth_n_vehicles: 10,
            synth_duration: 120.0,
            synth_lc_rate: 1.0,
            synth_speed_min: 22.0,
            synth_speed_max: 33.0,
            synth_noise_sigma: 0.05,
            synth_lateral_wander: 0.0,
            smoothing: false,
            smoothing_window: 11,
            smoothing_order: 3,
            extract_lc_step: 5,
            extract_lk_step: 25,
            extract_sv_range: 100.0,
            extract_lk_halving: true,
            extract_split_ratio: 0.75,
            embedding: 512,
            batch_size: 256,
            learning_rate: 1e-4,
            clip_norm: 0.25,
            weight_decay: 0.01,
            ae_epochs: 50,
            beta: 5,
            train_iters: 20,
            bag_mode: BagMode::Independent,
            retrain_encoder: false,
            ttlc_bin_width: 0.5,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            config.apply_file(&text, path)?;
        }
        Ok(config)
    }

    fn apply_file(&mut self, text: &str, path: &Path) -> Result<(), CliError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("{}:{}: expected `key = value`", path.display(), idx + 1))
            })?;
            self.set(key.trim(), value.trim()).map_err(|msg| {
                CliError::config(format!("{}:{}: {msg}", path.display(), idx + 1))
            })?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "dataset.name" => self.dataset_name = value.to_string(),
            "static_features" => self.static_features = parse(key, value)?,
            "synth.n_lanes" => self.synth_n_lanes = parse(key, value)?,
            "synth.lane_width" => self.synth_lane_width = parse(key, value)?,
            "synth.n_vehicles" => self.synth_n_vehicles = parse(key, value)?,
            "synth.duration" => self.synth_duration = parse(key, value)?,
            "synth.lc_rate" => self.synth_lc_rate = parse(key, value)?,
            "synth.speed_min" => self.synth_speed_min = parse(key, value)?,
            "synth.speed_max" => self.synth_speed_max = parse(key, value)?,
            "synth.noise_sigma" => self.synth_noise_sigma = parse(key, value)?,
            "synth.lateral_wander" => self.synth_lateral_wander = parse(key, value)?,
            "ingest.smoothing" => self.smoothing = parse(key, value)?,
            "ingest.smoothing_window" => self.smoothing_window = parse(key, value)?,
            "ingest.smoothing_order" => self.smoothing_order = parse(key, value)?,
            "extract.lc_step" => self.extract_lc_step = parse(key, value)?,
            "extract.lk_step" => self.extract_lk_step = parse(key, value)?,
            "extract.sv_range" => self.extract_sv_range = parse(key, value)?,
            "extract.lk_halving" => self.extract_lk_halving = parse(key, value)?,
            "extract.split_ratio" => self.extract_split_ratio = parse(key, value)?,
            "train.embedding" => self.embedding = parse(key, value)?,
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.learning_rate" => self.learning_rate = parse(key, value)?,
            "train.clip_norm" => self.clip_norm = parse(key, value)?,
            "train.weight_decay" => self.weight_decay = parse(key, value)?,
            "train.ae_epochs" => self.ae_epochs = parse(key, value)?,
            "ensemble.beta" => self.beta = parse(key, value)?,
            "ensemble.train_iters" => self.train_iters = parse(key, value)?,
            "ensemble.bag_mode" => {
                self.bag_mode = BagMode::parse(value)
                    .ok_or_else(|| format!("invalid bag mode `{value}` (independent|coverage)"))?
            }
            "ensemble.retrain_encoder" => self.retrain_encoder = parse(key, value)?,
            "eval.ttlc_bin_width" => self.ttlc_bin_width = parse(key, value)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            n_lanes: self.synth_n_lanes,
            lane_width: self.synth_lane_width,
            n_vehicles: self.synth_n_vehicles,
            duration: self.synth_duration,
            lc_rate: self.synth_lc_rate,
            speed_min: self.synth_speed_min,
            speed_max: self.synth_speed_max,
            position_noise_sigma: self.synth_noise_sigma,
            lateral_wander: self.synth_lateral_wander,
            seed: lane_intent::seeds::stream_seed(self.seed, "synth"),
        }
    }

    pub fn extraction(&self) -> ExtractionParams {
        ExtractionParams {
            lc_step_frames: self.extract_lc_step,
            lk_step_frames: self.extract_lk_step,
            sv_range: self.extract_sv_range,
            lk_halving: self.extract_lk_halving,
            seed: lane_intent::seeds::stream_seed(self.seed, "extract"),
            ..ExtractionParams::default()
        }
    }

    pub fn train_hyper(&self, stage: &str, epochs: usize) -> TrainHyperparams {
        TrainHyperparams {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            weight_decay: self.weight_decay,
            epochs,
            seed: lane_intent::seeds::stream_seed(self.seed, stage),
        }
    }

    pub fn smoothing_params(&self) -> Option<Smoothing> {
        self.smoothing.then_some(Smoothing { window: self.smoothing_window, order: self.smoothing_order })
    }

    /// Canonical JSON used for the manifest config hash.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
