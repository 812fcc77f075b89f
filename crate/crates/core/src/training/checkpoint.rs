//! Checkpoint directories: model weights, architecture config, tokenizer
//! identity, and optionally the training log.
//!
//! Layout:
//! - `model.json` holds the format version, the [`EncoderConfig`], and
//!   the tokenizer identifier.
//! - `weights.bin` holds every parameter tensor as name, shape, and f64
//!   little-endian values, in visitor order, behind a magic tag.
//! - `training_log.json` is present when a log was saved.
//!
//! Loading rebuilds the model from the stored config and refuses any
//! format-version, tensor-name, or shape disagreement.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, RegressionModel};
use crate::error::{Error, Result};

use super::TrainingLog;

const MAGIC: &[u8; 4] = b"RKWT";
const FORMAT_VERSION: u32 = 1;

/// Upper bound on a single tensor's element count when loading, guarding
/// against corrupt headers allocating unbounded memory.
const MAX_TENSOR_ELEMENTS: u64 = 1 << 30;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: EncoderConfig,
    tokenizer: String,
}

/// Everything a checkpoint stores besides the weights.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub config: EncoderConfig,
    pub tokenizer: String,
    pub log: Option<TrainingLog>,
}

/// Writes `dir/model.json`, `dir/weights.bin`, and (when `log` is given)
/// `dir/training_log.json`, creating the directory first.
pub fn save_checkpoint(
    model: &RegressionModel,
    tokenizer_id: &str,
    log: Option<&TrainingLog>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = ModelFile {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        tokenizer: tokenizer_id.to_string(),
    };
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Checkpoint(format!("cannot serialize model.json: {e}")))?;
    std::fs::write(dir.join("model.json"), meta_json)?;

    let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    model.for_each_param(&mut |name, shape, data| {
        tensors.push((name.to_string(), shape.to_vec(), data.to_vec()));
    });
    let file = std::fs::File::create(dir.join("weights.bin"))?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, shape, data) in &tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &dim in shape {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &value in data {
            out.write_all(&value.to_le_bytes())?;
        }
    }
    out.flush()?;

    if let Some(log) = log {
        let log_json = serde_json::to_string_pretty(log)
            .map_err(|e| Error::Checkpoint(format!("cannot serialize training log: {e}")))?;
        std::fs::write(dir.join("training_log.json"), log_json)?;
    }
    Ok(())
}

/// Rebuilds a model from a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<(RegressionModel, CheckpointMeta)> {
    let meta_path = dir.join("model.json");
    let meta_raw = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: ModelFile = serde_json::from_str(&meta_raw)
        .map_err(|e| Error::Checkpoint(format!("malformed model.json: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    meta.config.validate()?;

    let file = std::fs::File::open(dir.join("weights.bin"))?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("weights.bin has the wrong magic tag".into()));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "weights.bin format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = read_u64(&mut input)?;
    let mut stored: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        if name_len > 4096 {
            return Err(Error::Checkpoint("tensor name length out of range".into()));
        }
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut input, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(&mut input)? as usize;
        if ndim > 8 {
            return Err(Error::Checkpoint("tensor rank out of range".into()));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut elements: u64 = 1;
        for _ in 0..ndim {
            let dim = read_u64(&mut input)?;
            elements = elements.saturating_mul(dim.max(1));
            shape.push(dim as usize);
        }
        if elements > MAX_TENSOR_ELEMENTS {
            return Err(Error::Checkpoint(format!(
                "tensor {name} claims {elements} elements"
            )));
        }
        let total: usize = shape.iter().product();
        let mut data = vec![0.0f64; total];
        for slot in &mut data {
            *slot = read_f64(&mut input)?;
        }
        if stored.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }

    let mut model = RegressionModel::new(meta.config.clone(), 0)?;
    let mut error: Option<Error> = None;
    model.for_each_param_mut(&mut |p| {
        if error.is_some() {
            return;
        }
        match stored.remove(&p.name) {
            Some((shape, data)) if shape == p.shape => p.data.copy_from_slice(&data),
            Some((shape, _)) => {
                error = Some(Error::Checkpoint(format!(
                    "tensor {} has shape {shape:?}, model expects {:?}",
                    p.name, p.shape
                )));
            }
            None => {
                error = Some(Error::Checkpoint(format!("missing tensor {}", p.name)));
            }
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    if let Some(name) = stored.keys().next() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds tensor {name} the model does not define"
        )));
    }

    let log_path = dir.join("training_log.json");
    let log = if log_path.exists() {
        let raw = std::fs::read_to_string(&log_path)?;
        Some(
            serde_json::from_str(&raw)
                .map_err(|e| Error::Checkpoint(format!("malformed training log: {e}")))?,
        )
    } else {
        None
    };

    Ok((
        model,
        CheckpointMeta {
            config: meta.config,
            tokenizer: meta.tokenizer,
            log,
        },
    ))
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Checkpoint("weights.bin is truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(input, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
