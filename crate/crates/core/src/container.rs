//! On-disk embedding container: `<stem>.json` header plus `<stem>.bin`
//! holding row-major little-endian `f32` values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub rows: usize,
    pub dim: usize,
    pub ts_start: usize,
    pub ts_end: usize,
    pub scheme: String,
    pub seed: u64,
    pub epsilon: f64,
}

/// Header and blob paths for a stem (any extension on the stem is replaced).
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn write_f32_le(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f32_le(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::data(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn save(stem: &Path, emb: &EmbeddingMatrix, scheme: &str, seed: u64, epsilon: f64) -> Result<()> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (json, bin) = paths(stem);
    let header = ContainerHeader {
        rows: emb.rows,
        dim: emb.dim,
        ts_start: emb.ts_range.start,
        ts_end: emb.ts_range.end,
        scheme: scheme.to_string(),
        seed,
        epsilon,
    };
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    write_f32_le(&bin, emb.data.iter().map(|&v| v as f32))
}

pub fn load(stem: &Path) -> Result<(ContainerHeader, EmbeddingMatrix)> {
    let (json, bin) = paths(stem);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: ContainerHeader = serde_json::from_str(&text)?;
    let values = read_f32_le(&bin)?;
    if values.len() != header.rows * header.dim {
        return Err(Error::data(format!(
            "size mismatch: header says {}×{} = {} values, blob has {}",
            header.rows,
            header.dim,
            header.rows * header.dim,
            values.len()
        )));
    }
    let emb = EmbeddingMatrix::new(
        header.rows,
        header.dim,
        values.into_iter().map(f64::from).collect(),
        header.ts_start..header.ts_end,
    )?;
    Ok((header, emb))
}
