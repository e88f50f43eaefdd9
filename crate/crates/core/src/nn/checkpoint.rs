//! `weights.bin`: the tensors of a model, concatenated in a fixed documented
//! order, each stored row-major as little-endian `f64`.

use std::fs;
use std::path::Path;

use super::tape::Mat;
use crate::error::{Error, Result};

pub fn write_weights(path: &Path, tensors: &[&Mat]) -> Result<()> {
    let n: usize = tensors.iter().map(|t| t.len()).sum();
    let mut bytes = Vec::with_capacity(n * 8);
    for t in tensors {
        for v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Fills `tensors` (whose shapes define the layout) from `path`.
pub fn read_weights(path: &Path, tensors: &mut [&mut Mat]) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let n: usize = tensors.iter().map(|t| t.len()).sum();
    if bytes.len() != n * 8 {
        return Err(Error::Data(format!("{} holds {} bytes, expected {}", path.display(), bytes.len(), n * 8)));
    }
    let mut chunks = bytes.chunks_exact(8);
    for t in tensors.iter_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
    }
    Ok(())
}
