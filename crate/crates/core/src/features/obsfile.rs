//! Persisted observation sets.
//!
//! Binary layout: magic `LNOB`, format version (u32 LE), JSON header length
//! (u32 LE), JSON header, then fixed-size little-endian records:
//! label (u8), ttlc (f64), tv_id (i64), t_end (f64), 7 static f64s,
//! 720 sequence f64s in row-major (timestep, channel) order.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::types::{DatasetMeta, ManeuverLabel};

use super::{ExtractionParams, FeatureError, Observation, FLAT_LEN, LAYOUT_VERSION, N_CHANNELS, N_STATIC, SEQ_LEN};

const MAGIC: &[u8; 4] = b"LNOB";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    layout_version: u32,
    dataset: DatasetMeta,
    params: ExtractionParams,
    seed: u64,
    count: u64,
}

/// A set of observations with the provenance needed to reproduce it.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub dataset: DatasetMeta,
    pub params: ExtractionParams,
    pub seed: u64,
    pub observations: Vec<Observation>,
}

/// Write an observation set in the versioned binary format.
pub fn write_observations<W: Write>(mut w: W, set: &ObservationSet) -> Result<(), FeatureError> {
    let header = Header {
        layout_version: LAYOUT_VERSION,
        dataset: set.dataset.clone(),
        params: set.params.clone(),
        seed: set.seed,
        count: set.observations.len() as u64,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| FeatureError::BadObservationFile(format!("header encode: {e}")))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for obs in &set.observations {
        obs.validate()?;
        w.write_all(&[obs.label.index() as u8])?;
        w.write_all(&obs.ttlc.to_le_bytes())?;
        w.write_all(&obs.tv_id.to_le_bytes())?;
        w.write_all(&obs.t_end.to_le_bytes())?;
        for v in &obs.statics {
            w.write_all(&v.to_le_bytes())?;
        }
        debug_assert_eq!(obs.seq.len(), FLAT_LEN);
        for v in obs.seq.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read an observation set written by [`write_observations`].
pub fn read_observations<R: Read>(mut r: R) -> Result<ObservationSet, FeatureError> {
    let bad = |msg: &str| FeatureError::BadObservationFile(msg.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("wrong magic bytes"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(FeatureError::BadObservationFile(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    r.read_exact(&mut u32buf)?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| FeatureError::BadObservationFile(format!("header decode: {e}")))?;
    if header.layout_version != LAYOUT_VERSION {
        return Err(FeatureError::BadObservationFile(format!(
            "layout version {} not supported (expected {LAYOUT_VERSION})",
            header.layout_version
        )));
    }

    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut R| -> Result<f64, FeatureError> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };

    let mut observations = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        let mut label_byte = [0u8; 1];
        r.read_exact(&mut label_byte)?;
        let label = ManeuverLabel::from_index(label_byte[0] as usize)
            .ok_or_else(|| bad("invalid label byte"))?;
        let ttlc = read_f64(&mut r)?;
        let mut i64buf = [0u8; 8];
        r.read_exact(&mut i64buf)?;
        let tv_id = i64::from_le_bytes(i64buf);
        let t_end = read_f64(&mut r)?;
        let mut statics = [0.0; N_STATIC];
        for v in &mut statics {
            *v = read_f64(&mut r)?;
        }
        let mut flat = Vec::with_capacity(FLAT_LEN);
        for _ in 0..FLAT_LEN {
            flat.push(read_f64(&mut r)?);
        }
        let seq = Array2::from_shape_vec((SEQ_LEN, N_CHANNELS), flat)
            .map_err(|_| bad("sequence shape mismatch"))?;
        let obs = Observation { seq, statics, label, ttlc, tv_id, t_end };
        obs.validate()?;
        observations.push(obs);
    }
    Ok(ObservationSet {
        dataset: header.dataset,
        params: header.params,
        seed: header.seed,
        observations,
    })
}
