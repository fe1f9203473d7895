//! Binary checkpoint: magic, version, JSON metadata, then named tensor
//! blocks of little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, ModelError};
use crate::autodiff::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UBANTCK\0";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

/// Writes the model with its config and `extra` metadata.
pub fn write_checkpoint(
    model: &Model,
    extra: &serde_json::Value,
    mut w: impl Write,
) -> Result<(), ModelError> {
    let meta = serde_json::json!({ "model": model.config(), "extra": extra });
    let meta = serde_json::to_vec(&meta).map_err(|e| bad(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(&mut w, VERSION)?;
    put_u32(&mut w, meta.len() as u32)?;
    w.write_all(&meta)?;
    put_u32(&mut w, model.params().len() as u32)?;
    for (name, t) in model.names().iter().zip(model.params()) {
        put_u32(&mut w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.rank() as u32)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint. With `expected`, parameter shapes are checked against
/// that config instead of the stored one.
pub fn read_checkpoint(
    mut r: impl Read,
    expected: Option<&ModelConfig>,
) -> Result<(Model, serde_json::Value), ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = get_u32(&mut r)? as usize;
    let mut meta = vec![0u8; len];
    r.read_exact(&mut meta)?;
    let meta: serde_json::Value = serde_json::from_slice(&meta).map_err(|e| bad(e.to_string()))?;
    let stored: ModelConfig =
        serde_json::from_value(meta["model"].clone()).map_err(|e| bad(e.to_string()))?;
    let blocks = get_u32(&mut r)? as usize;
    let mut named = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let n = get_u32(&mut r)? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| bad(e.to_string()))?;
        let rank = get_u32(&mut r)? as usize;
        let shape: Vec<usize> = (0..rank)
            .map(|_| get_u64(&mut r).map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        let numel: usize = shape.iter().product();
        let mut buf = vec![0u8; numel * 8];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        named.push((name, Tensor::new(shape, data)?));
    }
    let config = expected.copied().unwrap_or(stored);
    let model = Model::from_params(config, named)?;
    Ok((model, meta["extra"].clone()))
}

pub fn save_checkpoint(model: &Model, extra: &serde_json::Value, path: &Path) -> Result<(), ModelError> {
    write_checkpoint(model, extra, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<(Model, serde_json::Value), ModelError> {
    read_checkpoint(BufReader::new(File::open(path)?), expected)
}
