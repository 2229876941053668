//! Versioned binary checkpoints.
//!
//! Container layout: magic `LNCK`, format version (u32 LE), JSON metadata
//! length (u32 LE), JSON metadata, then named tensors: name length (u16 LE),
//! name bytes, rank (u8), dims (u64 LE each), data (f64 LE). Floats are
//! stored as raw bits, so save→load round-trips bit-exactly.
//!
//! An ensemble is a directory: `manifest.json` plus one checkpoint per
//! member and one for the shared encoder.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::autoencoder::SeqAutoencoder;
use crate::classifier::{ClassifierParams, LossMode};
use crate::ensemble::{Ensemble, EnsembleConfig, EnsembleMember};
use crate::features::Scaler;
use crate::lstm::LstmCellParams;
use crate::optim::TrainHyperparams;

const MAGIC: &[u8; 4] = b"LNCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {got} unsupported (expected {FORMAT_VERSION})")]
    Version { got: u32 },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A named-tensor container with JSON metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: Value,
    tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(meta: Value) -> Checkpoint {
        Checkpoint { meta, tensors: BTreeMap::new() }
    }

    pub fn put(&mut self, name: &str, dims: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.tensors.insert(name.to_string(), (dims, data));
    }

    pub fn put_matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.put(name, vec![m.nrows(), m.ncols()], m.iter().copied().collect());
    }

    pub fn put_vector(&mut self, name: &str, v: &Array1<f64>) {
        self.put(name, vec![v.len()], v.to_vec());
    }

    pub fn take_matrix(&mut self, name: &str) -> Result<Array2<f64>, CheckpointError> {
        let (dims, data) =
            self.tensors.remove(name).ok_or_else(|| CheckpointError::MissingTensor(name.into()))?;
        if dims.len() != 2 {
            return Err(CheckpointError::Corrupt(format!("tensor `{name}` is not a matrix")));
        }
        Array2::from_shape_vec((dims[0], dims[1]), data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor `{name}`: {e}")))
    }

    pub fn take_vector(&mut self, name: &str) -> Result<Array1<f64>, CheckpointError> {
        let (dims, data) =
            self.tensors.remove(name).ok_or_else(|| CheckpointError::MissingTensor(name.into()))?;
        if dims.len() != 1 {
            return Err(CheckpointError::Corrupt(format!("tensor `{name}` is not a vector")));
        }
        Ok(Array1::from_vec(data))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        for (name, (dims, data)) in &self.tensors {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[dims.len() as u8])?;
            for d in dims {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Corrupt("wrong magic bytes".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { got: version });
        }
        r.read_exact(&mut b4)?;
        let meta_len = u32::from_le_bytes(b4) as usize;
        let mut meta_buf = vec![0u8; meta_len];
        r.read_exact(&mut meta_buf)?;
        let meta: Value = serde_json::from_slice(&meta_buf)?;

        let mut tensors = BTreeMap::new();
        loop {
            let mut b2 = [0u8; 2];
            match r.read_exact(&mut b2) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let name_len = u16::from_le_bytes(b2) as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| CheckpointError::Corrupt("tensor name not utf-8".into()))?;
            let mut b1 = [0u8; 1];
            r.read_exact(&mut b1)?;
            let rank = b1[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            let mut b8 = [0u8; 8];
            for _ in 0..rank {
                r.read_exact(&mut b8)?;
                dims.push(u64::from_le_bytes(b8) as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                data.push(f64::from_le_bytes(b8));
            }
            tensors.insert(name, (dims, data));
        }
        Ok(Checkpoint { meta, tensors })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AeMeta {
    kind: String,
    embedding: usize,
    hyper: Option<TrainHyperparams>,
    seed: u64,
}

fn put_cell(ck: &mut Checkpoint, prefix: &str, cell: &LstmCellParams) {
    ck.put_matrix(&format!("{prefix}.input_weights"), &cell.input_weights);
    ck.put_matrix(&format!("{prefix}.recurrent_weights"), &cell.recurrent_weights);
    ck.put_vector(&format!("{prefix}.bias"), &cell.bias);
}

fn take_cell(ck: &mut Checkpoint, prefix: &str) -> Result<LstmCellParams, CheckpointError> {
    Ok(LstmCellParams {
        input_weights: ck.take_matrix(&format!("{prefix}.input_weights"))?,
        recurrent_weights: ck.take_matrix(&format!("{prefix}.recurrent_weights"))?,
        bias: ck.take_vector(&format!("{prefix}.bias"))?,
    })
}

/// Save an autoencoder with its training hyperparameters and seed.
pub fn save_autoencoder(
    path: &Path,
    model: &SeqAutoencoder,
    hyper: Option<&TrainHyperparams>,
    seed: u64,
) -> Result<(), CheckpointError> {
    let meta = AeMeta {
        kind: "seq_autoencoder".into(),
        embedding: model.embedding(),
        hyper: hyper.cloned(),
        seed,
    };
    let mut ck = Checkpoint::new(serde_json::to_value(&meta)?);
    put_cell(&mut ck, "encoder", &model.encoder);
    put_cell(&mut ck, "decoder", &model.decoder);
    ck.put_matrix("output_proj", &model.output_proj);
    ck.put_vector("output_bias", &model.output_bias);
    let mut file = fs::File::create(path)?;
    ck.write(&mut file)?;
    Ok(())
}

pub fn load_autoencoder(
    path: &Path,
) -> Result<(SeqAutoencoder, Option<TrainHyperparams>, u64), CheckpointError> {
    let mut ck = Checkpoint::read(fs::File::open(path)?)?;
    let meta: AeMeta = serde_json::from_value(ck.meta.clone())?;
    if meta.kind != "seq_autoencoder" {
        return Err(CheckpointError::Corrupt(format!("expected autoencoder, found `{}`", meta.kind)));
    }
    let model = SeqAutoencoder {
        encoder: take_cell(&mut ck, "encoder")?,
        decoder: take_cell(&mut ck, "decoder")?,
        output_proj: ck.take_matrix("output_proj")?,
        output_bias: ck.take_vector("output_bias")?,
    };
    Ok((model, meta.hyper, meta.seed))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierMeta {
    kind: String,
    loss_mode: LossMode,
    has_encoder: bool,
}

fn save_member(path: &Path, member: &EnsembleMember) -> Result<(), CheckpointError> {
    let meta = ClassifierMeta {
        kind: "classifier".into(),
        loss_mode: member.classifier.loss_mode,
        has_encoder: member.encoder.is_some(),
    };
    let mut ck = Checkpoint::new(serde_json::to_value(&meta)?);
    ck.put_matrix("weights", &member.classifier.weights);
    ck.put_vector("bias", &member.classifier.bias);
    if let Some(enc) = &member.encoder {
        put_cell(&mut ck, "ae.encoder", &enc.encoder);
        put_cell(&mut ck, "ae.decoder", &enc.decoder);
        ck.put_matrix("ae.output_proj", &enc.output_proj);
        ck.put_vector("ae.output_bias", &enc.output_bias);
    }
    let mut file = fs::File::create(path)?;
    ck.write(&mut file)?;
    Ok(())
}

fn load_member(path: &Path) -> Result<EnsembleMember, CheckpointError> {
    let mut ck = Checkpoint::read(fs::File::open(path)?)?;
    let meta: ClassifierMeta = serde_json::from_value(ck.meta.clone())?;
    if meta.kind != "classifier" {
        return Err(CheckpointError::Corrupt(format!("expected classifier, found `{}`", meta.kind)));
    }
    let classifier = ClassifierParams {
        weights: ck.take_matrix("weights")?,
        bias: ck.take_vector("bias")?,
        loss_mode: meta.loss_mode,
    };
    let encoder = if meta.has_encoder {
        Some(SeqAutoencoder {
            encoder: take_cell(&mut ck, "ae.encoder")?,
            decoder: take_cell(&mut ck, "ae.decoder")?,
            output_proj: ck.take_matrix("ae.output_proj")?,
            output_bias: ck.take_vector("ae.output_bias")?,
        })
    } else {
        None
    };
    Ok(EnsembleMember { encoder, classifier })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnsembleManifest {
    kind: String,
    config: EnsembleConfig,
    use_static: bool,
    scaler: Option<Scaler>,
    encoder_file: String,
    member_files: Vec<String>,
}

/// Save an ensemble as a directory: manifest plus per-member checkpoints.
pub fn save_ensemble(dir: &Path, ensemble: &Ensemble) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    save_autoencoder(&dir.join("encoder.ckpt"), &ensemble.encoder, None, ensemble.config.seed)?;
    let mut member_files = Vec::new();
    for (i, member) in ensemble.members.iter().enumerate() {
        let name = format!("member_{i:03}.ckpt");
        save_member(&dir.join(&name), member)?;
        member_files.push(name);
    }
    let manifest = EnsembleManifest {
        kind: "ensemble".into(),
        config: ensemble.config.clone(),
        use_static: ensemble.use_static,
        scaler: ensemble.scaler.clone(),
        encoder_file: "encoder.ckpt".into(),
        member_files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<Ensemble, CheckpointError> {
    let manifest: EnsembleManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.kind != "ensemble" {
        return Err(CheckpointError::Corrupt(format!("expected ensemble, found `{}`", manifest.kind)));
    }
    let (encoder, _, _) = load_autoencoder(&dir.join(&manifest.encoder_file))?;
    let members = manifest
        .member_files
        .iter()
        .map(|f| load_member(&dir.join(f)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble {
        encoder,
        members,
        config: manifest.config,
        scaler: manifest.scaler,
        use_static: manifest.use_static,
    })
}
