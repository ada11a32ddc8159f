//! Plot-ready CSV of TS-token embeddings projected onto their principal axes.
//!
//! The 2-D and 3-D coordinates come from one deterministic fit, so the 2-D
//! pair equals the first two 3-D columns.

use std::path::Path;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::regularizers::fit_projection;

pub const PCA_HEADER: [&str; 7] = ["index", "value", "pc1_2d", "pc2_2d", "pc1_3d", "pc2_3d", "pc3_3d"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaRow {
    pub index: usize,
    pub value: f64,
    pub pc2: [f64; 2],
    pub pc3: [f64; 3],
}

/// Project the TS block. Row `i` carries grid value `−1 + i·ε`.
pub fn pca_rows(emb: &EmbeddingMatrix, epsilon: f64) -> Result<Vec<PcaRow>> {
    let block = emb.ts_block();
    let ctx = fit_projection(block, emb.dim)?;
    let rows: Vec<PcaRow> = ctx
        .project(block)
        .into_iter()
        .enumerate()
        .map(|(i, y)| PcaRow {
            index: i,
            value: -1.0 + i as f64 * epsilon,
            pc2: [y[0], y[1]],
            pc3: y,
        })
        .collect();
    if rows.iter().any(|r| r.pc3.iter().any(|v| !v.is_finite())) {
        return Err(Error::geometry("non-finite projected coordinate"));
    }
    Ok(rows)
}

pub fn export_pca(emb: &EmbeddingMatrix, epsilon: f64, out: &Path) -> Result<usize> {
    let rows = pca_rows(emb, epsilon)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)?;
    w.write_record(PCA_HEADER)?;
    for r in &rows {
        let mut rec = vec![r.index.to_string(), format!("{:.6}", r.value)];
        rec.extend(r.pc2.iter().chain(&r.pc3).map(|v| format!("{v:.10e}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(rows.len())
}
