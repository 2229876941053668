//! Interaction-aware lane-change intention prediction.
//!
//! The pipeline goes: trajectory ingestion ([`ingest`]) or synthetic scenario
//! generation ([`synth`]) → windowed feature extraction and labeling
//! ([`features`]) → LSTM sequence autoencoder ([`autoencoder`]) → linear
//! probabilistic classifier ([`classifier`]) → balanced-bag ensemble
//! ([`ensemble`]) → metric suites and generalization protocol ([`eval`]).
//!
//! Everything is seeded and deterministic: identical inputs and seeds
//! reproduce identical artifacts, byte for byte.

pub mod autoencoder;
pub mod checkpoint;
pub mod classifier;
pub mod ensemble;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod ingest;
pub mod lstm;
pub mod optim;
pub mod seeds;
pub mod synth;
pub mod types;

pub use types::{KinematicSample, ManeuverLabel, VehicleClass, VehicleTrack};
