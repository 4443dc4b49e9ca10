//! Binary checkpoint: magic, manifest length (u64 LE), JSON manifest, then
//! every tensor row-major as f64 LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::model::{ModelDims, ModelParams, TensorShape};

const MAGIC: &[u8; 8] = b"HINFEDC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub dims: ModelDims,
    pub tensors: Vec<TensorShape>,
}

fn manifest_of(params: &ModelParams) -> CheckpointManifest {
    CheckpointManifest {
        dims: params.dims,
        tensors: params
            .tensor_names()
            .into_iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorShape {
                name,
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    }
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<(), IoError> {
    if !params.is_finite() {
        return Err(IoError::Checkpoint("refusing to save non-finite parameters".into()));
    }
    let manifest = serde_json::to_vec(&manifest_of(params))?;
    out.write_all(MAGIC)?;
    out.write_all(&(manifest.len() as u64).to_le_bytes())?;
    out.write_all(&manifest)?;
    for t in params.tensors() {
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint; with `expected` set, its dims must match exactly.
pub fn read_checkpoint<R: Read>(mut input: R, expected: Option<ModelDims>) -> Result<ModelParams, IoError> {
    let truncated = |what: &str| IoError::Checkpoint(format!("truncated checkpoint ({what})"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| truncated("header"))?;
    if &magic != MAGIC {
        return Err(IoError::Checkpoint("not a checkpoint file".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| truncated("header"))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(IoError::Checkpoint(format!("manifest length {len} is implausible")));
    }
    let mut manifest = vec![0u8; len];
    input.read_exact(&mut manifest).map_err(|_| truncated("manifest"))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&manifest)?;
    if let Some(want) = expected {
        if want != manifest.dims {
            return Err(IoError::Checkpoint(format!(
                "checkpoint dims {:?} do not match expected {:?}",
                manifest.dims, want
            )));
        }
    }
    let mut params = ModelParams::zeros(manifest.dims);
    if manifest_of(&params) != manifest {
        return Err(IoError::Checkpoint("tensor manifest inconsistent with dims".into()));
    }
    let mut buf = [0u8; 8];
    for t in params.tensors_mut() {
        fill(t, &mut input, &mut buf).map_err(|_| truncated("tensor data"))?;
    }
    if input.read(&mut buf)? != 0 {
        return Err(IoError::Checkpoint("trailing bytes after tensor data".into()));
    }
    Ok(params)
}

fn fill<R: Read>(t: &mut Array2<f64>, input: &mut R, buf: &mut [u8; 8]) -> std::io::Result<()> {
    for v in t.iter_mut() {
        input.read_exact(buf)?;
        *v = f64::from_le_bytes(*buf);
    }
    Ok(())
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), IoError> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path, expected: Option<ModelDims>) -> Result<ModelParams, IoError> {
    read_checkpoint(BufReader::new(File::open(path)?), expected)
}
