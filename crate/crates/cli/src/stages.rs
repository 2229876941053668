//! Pipeline stages behind the subcommands. Every stage writes its artifacts
//! plus a manifest into the workdir and is deterministic given the config
//! and master seed.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use lane_intent::checkpoint::{load_autoencoder, load_ensemble, save_autoencoder, save_ensemble};
use lane_intent::ensemble::{train_ensemble, EnsembleConfig};
use lane_intent::eval::{cross_dataset_eval, curves_to_text, evaluate_model, ttlc_curve_from_model};
use lane_intent::features::{
    extract_observations, halve_lk, read_observations, split_by_vehicle, write_observations,
    ObservationSet, Scaler,
};
use lane_intent::geometry::load_lane_geometry;
use lane_intent::ingest::{derive_velocities, parse_trajectory_file, read_tracks, write_tracks, ColumnMap};
use lane_intent::seeds::stream_seed;
use lane_intent::synth::{generate_scenario, write_maneuver_log};
use lane_intent::autoencoder::train_autoencoder;
use lane_intent::types::DatasetMeta;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::write_manifest;

pub struct Paths {
    pub workdir: PathBuf,
}

impl Paths {
    pub fn new(workdir: &Path) -> Paths {
        Paths { workdir: workdir.to_path_buf() }
    }

    pub fn tracks(&self) -> PathBuf {
        self.workdir.join("tracks.tsv")
    }
    pub fn maneuvers(&self) -> PathBuf {
        self.workdir.join("maneuvers.tsv")
    }
    pub fn lanes(&self) -> PathBuf {
        self.workdir.join("lanes.cfg")
    }
    pub fn train_obs(&self) -> PathBuf {
        self.workdir.join("train.obs")
    }
    pub fn test_obs(&self) -> PathBuf {
        self.workdir.join("test.obs")
    }
    pub fn ae_ckpt(&self) -> PathBuf {
        self.workdir.join("ae.ckpt")
    }
    pub fn scaler(&self) -> PathBuf {
        self.workdir.join("scaler.json")
    }
    pub fn model_dir(&self) -> PathBuf {
        self.workdir.join("model")
    }
    pub fn metrics_txt(&self) -> PathBuf {
        self.workdir.join("metrics.txt")
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.workdir.join("metrics.json")
    }
    pub fn cross_metrics_txt(&self) -> PathBuf {
        self.workdir.join("cross_metrics.txt")
    }
    pub fn cross_metrics_json(&self) -> PathBuf {
        self.workdir.join("cross_metrics.json")
    }
    pub fn curves(&self) -> PathBuf {
        self.workdir.join("curves.tsv")
    }
}

fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "missing prerequisite {}; run `lane-intent {hint}` first",
            path.display()
        )))
    }
}

pub fn synth(config: &RunConfig, paths: &Paths) -> Result<(), CliError> {
    let scenario = config.scenario();
    let (tracks, log) = generate_scenario(&scenario)?;
    {
        let mut w = BufWriter::new(fs::File::create(paths.tracks())?);
        write_tracks(&mut w, &tracks)?;
    }
    {
        let mut w = BufWriter::new(fs::File::create(paths.maneuvers())?);
        write_maneuver_log(&mut w, &log)?;
    }
    fs::write(paths.lanes(), scenario.geometry().to_config_string())?;
    write_manifest(
        &paths.workdir,
        "synth",
        config,
        &[],
        &[&paths.tracks(), &paths.maneuvers(), &paths.lanes()],
    )?;
    println!(
        "synth: {} vehicles, {} maneuvers ({} dropped), {:.0} s at 10 Hz -> {}",
        tracks.len(),
        log.maneuvers.len(),
        log.dropped,
        scenario.duration,
        paths.tracks().display()
    );
    Ok(())
}

pub fn ingest(config: &RunConfig, paths: &Paths, input: &Path, geometry: &Path) -> Result<(), CliError> {
    let reader = BufReader::new(
        fs::File::open(input)
            .map_err(|e| CliError::data(format!("cannot open {}: {e}", input.display())))?,
    );
    let (raw_tracks, report) = parse_trajectory_file(reader, &ColumnMap::default())?;

    let geometry_text = fs::read_to_string(geometry)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", geometry.display())))?;
    load_lane_geometry(geometry_text.as_bytes())?;

    let smoothing = config.smoothing_params();
    let mut tracks = Vec::with_capacity(raw_tracks.len());
    let mut too_short = 0usize;
    for track in &raw_tracks {
        match derive_velocities(track, smoothing) {
            Ok(t) => tracks.push(t),
            Err(lane_intent::ingest::IngestError::TrackTooShort { .. }) => too_short += 1,
            Err(e) => return Err(e.into()),
        }
    }
    {
        let mut w = BufWriter::new(fs::File::create(paths.tracks())?);
        write_tracks(&mut w, &tracks)?;
    }
    fs::write(paths.lanes(), &geometry_text)?;
    write_manifest(
        &paths.workdir,
        "ingest",
        config,
        &[input, geometry],
        &[&paths.tracks(), &paths.lanes()],
    )?;

    println!(
        "ingest: {} rows ok, {} row errors, {} rejected segments, {} gap splits, {} single-sample segments dropped",
        report.rows_ok,
        report.row_errors.len(),
        report.rejected_segments.len(),
        report.gap_splits,
        too_short
    );
    for err in report.row_errors.iter().take(10) {
        println!("  line {}: {}", err.line, err.message);
    }
    if report.row_errors.len() > 10 {
        println!("  ... {} more row errors", report.row_errors.len() - 10);
    }
    println!("ingest: {} track segments -> {}", tracks.len(), paths.tracks().display());
    Ok(())
}

pub fn extract(
    config: &RunConfig,
    paths: &Paths,
    tracks_path: Option<&Path>,
    geometry_path: Option<&Path>,
    dataset: Option<&str>,
) -> Result<(), CliError> {
    let tracks_path = tracks_path.map(Path::to_path_buf).unwrap_or_else(|| paths.tracks());
    let geometry_path = geometry_path.map(Path::to_path_buf).unwrap_or_else(|| paths.lanes());
    require(&tracks_path, "synth` or `lane-intent ingest")?;
    require(&geometry_path, "synth` or `lane-intent ingest")?;

    let tracks = read_tracks(BufReader::new(fs::File::open(&tracks_path)?))?;
    let geometry = load_lane_geometry(BufReader::new(fs::File::open(&geometry_path)?))?;
    let params = config.extraction();
    let extraction = extract_observations(&tracks, &geometry, &params)?;
    let mut observations = extraction.observations;
    let n_extracted = observations.len();
    if params.lk_halving {
        observations = halve_lk(observations, stream_seed(config.seed, "extract.halve"));
    }
    let (train, test) = split_by_vehicle(
        observations,
        config.extract_split_ratio,
        stream_seed(config.seed, "extract.split"),
    )?;

    let dataset_name = dataset.unwrap_or(&config.dataset_name);
    let meta = DatasetMeta::new(dataset_name);
    let write = |path: &Path, observations: Vec<lane_intent::features::Observation>| -> Result<usize, CliError> {
        let n = observations.len();
        let set = ObservationSet {
            dataset: meta.clone(),
            params: params.clone(),
            seed: config.seed,
            observations,
        };
        let mut w = BufWriter::new(fs::File::create(path)?);
        write_observations(&mut w, &set)?;
        Ok(n)
    };
    let counts = |set: &Path| -> Result<[usize; 3], CliError> {
        let set = read_observations(BufReader::new(fs::File::open(set)?))?;
        Ok(lane_intent::ensemble::class_counts(&set.observations))
    };
    let n_train = write(&paths.train_obs(), train)?;
    let n_test = write(&paths.test_obs(), test)?;
    write_manifest(
        &paths.workdir,
        "extract",
        config,
        &[&tracks_path, &geometry_path],
        &[&paths.train_obs(), &paths.test_obs()],
    )?;

    let train_counts = counts(&paths.train_obs())?;
    let test_counts = counts(&paths.test_obs())?;
    println!(
        "extract: {} windows ({} net-zero relabeled LK, {} short tracks) -> {} train / {} test",
        n_extracted, extraction.report.net_zero_windows, extraction.report.short_tracks, n_train, n_test
    );
    println!(
        "extract: train LCL/LK/LCR = {}/{}/{}, test = {}/{}/{}",
        train_counts[0], train_counts[1], train_counts[2],
        test_counts[0], test_counts[1], test_counts[2]
    );
    Ok(())
}

pub fn train_ae(config: &RunConfig, paths: &Paths) -> Result<(), CliError> {
    require(&paths.train_obs(), "extract")?;
    let set = read_observations(BufReader::new(fs::File::open(paths.train_obs())?))?;
    let scaler = Scaler::fit(&set.observations)?;
    if scaler.any_floored() {
        let floored: Vec<usize> = scaler
            .floored
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        println!("train-ae: warning: zero-variance channels floored: {floored:?}");
    }
    let scaled = scaler.apply_set(&set.observations);
    let hyper = config.train_hyper("train-ae", config.ae_epochs);
    let (model, history) = train_autoencoder(&scaled, config.embedding, &hyper)?;
    save_autoencoder(&paths.ae_ckpt(), &model, Some(&hyper), config.seed)?;
    fs::write(
        paths.scaler(),
        serde_json::to_vec_pretty(&scaler).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    write_manifest(
        &paths.workdir,
        "train-ae",
        config,
        &[&paths.train_obs()],
        &[&paths.ae_ckpt(), &paths.scaler()],
    )?;
    println!(
        "train-ae: {} observations, embedding {}, {} epochs, loss {:.6} -> {:.6}",
        set.observations.len(),
        config.embedding,
        history.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn train(config: &RunConfig, paths: &Paths, beta: usize, stage: &str) -> Result<(), CliError> {
    require(&paths.train_obs(), "extract")?;
    require(&paths.ae_ckpt(), "train-ae")?;
    require(&paths.scaler(), "train-ae")?;
    let set = read_observations(BufReader::new(fs::File::open(paths.train_obs())?))?;
    let (encoder, _, _) = load_autoencoder(&paths.ae_ckpt())?;
    let scaler: Scaler = serde_json::from_slice(&fs::read(paths.scaler())?)
        .map_err(|e| CliError::data(format!("bad scaler file: {e}")))?;

    let scaled = scaler.apply_set(&set.observations);
    let ensemble_config = EnsembleConfig {
        beta,
        train_iters: config.train_iters,
        seed: stream_seed(config.seed, "ensemble"),
        bag_mode: config.bag_mode,
        retrain_encoder: config.retrain_encoder,
    };
    let cls_hyper = config.train_hyper("classifier", config.train_iters);
    let ae_hyper = config.train_hyper("member-ae", config.ae_epochs);
    let ensemble = train_ensemble(
        &scaled,
        &encoder,
        Some(scaler),
        config.static_features,
        &ensemble_config,
        &cls_hyper,
        &ae_hyper,
    )?;
    save_ensemble(&paths.model_dir(), &ensemble)?;
    write_manifest(
        &paths.workdir,
        stage,
        config,
        &[&paths.train_obs(), &paths.ae_ckpt(), &paths.scaler()],
        &[&paths.model_dir()],
    )?;
    println!(
        "{stage}: {} member(s), bag mode {}, static features {} -> {}",
        ensemble.members.len(),
        ensemble_config.bag_mode.as_str(),
        config.static_features,
        paths.model_dir().display()
    );
    Ok(())
}

fn load_model_and_test(
    paths: &Paths,
    model: Option<&Path>,
    test: Option<&Path>,
) -> Result<(lane_intent::ensemble::Ensemble, ObservationSet), CliError> {
    let model_dir = model.map(Path::to_path_buf).unwrap_or_else(|| paths.model_dir());
    let test_path = test.map(Path::to_path_buf).unwrap_or_else(|| paths.test_obs());
    require(&model_dir.join("manifest.json"), "train` or `lane-intent train-ensemble")?;
    require(&test_path, "extract")?;
    let ensemble = load_ensemble(&model_dir)?;
    let set = read_observations(BufReader::new(fs::File::open(&test_path)?))?;
    Ok((ensemble, set))
}

pub fn eval(config: &RunConfig, paths: &Paths, model: Option<&Path>, test: Option<&Path>) -> Result<(), CliError> {
    let (ensemble, set) = load_model_and_test(paths, model, test)?;
    let report = evaluate_model(&ensemble, set.observations, stream_seed(config.seed, "eval.balance"))?;
    let text = format!("dataset\t{}\n{}", set.dataset.name, report.to_text());
    fs::write(paths.metrics_txt(), &text)?;
    fs::write(
        paths.metrics_json(),
        serde_json::to_vec_pretty(&report.to_json()).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    write_manifest(
        &paths.workdir,
        "eval",
        config,
        &[&paths.test_obs()],
        &[&paths.metrics_txt(), &paths.metrics_json()],
    )?;
    print!("{text}");
    Ok(())
}

pub fn cross_eval(
    config: &RunConfig,
    paths: &Paths,
    test: &Path,
    model: Option<&Path>,
) -> Result<(), CliError> {
    let (ensemble, set) = load_model_and_test(paths, model, Some(test))?;
    let report = cross_dataset_eval(&ensemble, set.observations, stream_seed(config.seed, "cross-eval.balance"))?;
    let text = format!("evaluated_on\t{}\n{}", set.dataset.name, report.to_text());
    fs::write(paths.cross_metrics_txt(), &text)?;
    fs::write(
        paths.cross_metrics_json(),
        serde_json::to_vec_pretty(&report.to_json()).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    write_manifest(
        &paths.workdir,
        "cross-eval",
        config,
        &[test],
        &[&paths.cross_metrics_txt(), &paths.cross_metrics_json()],
    )?;
    print!("{text}");
    Ok(())
}

pub fn curves(config: &RunConfig, paths: &Paths, model: Option<&Path>, test: Option<&Path>) -> Result<(), CliError> {
    let (ensemble, set) = load_model_and_test(paths, model, test)?;
    let curves = ttlc_curve_from_model(&ensemble, &set.observations, config.ttlc_bin_width)?;
    let text = curves_to_text(&curves);
    fs::write(paths.curves(), &text)?;
    write_manifest(&paths.workdir, "curves", config, &[&paths.test_obs()], &[&paths.curves()])?;
    print!("{text}");
    Ok(())
}
