//! TS-token embedding blocks under geometric priors.
//!
//! Every scheme is anchored to [`BaseStats`] computed from the existing
//! ("base") rows of an embedding table: their mean, the mean and spread of
//! their distance to that mean, and their top three principal axes.

mod schemes;
pub mod vmf;

use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, column_mean, norm};
use crate::rng;

pub use schemes::{
    init_default, init_helix, init_pca_main, init_slerp, init_vmf, slerp, tangential_noise,
};

/// Dense row-major embedding table with a marked TS block.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub ts_range: Range<usize>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, ts_range: Range<usize>) -> Result<Self> {
        if dim < 3 {
            return Err(Error::config(format!("embedding dim must be ≥ 3, got {dim}")));
        }
        if data.len() != rows * dim {
            return Err(Error::data(format!(
                "size mismatch: {rows}×{dim} needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if ts_range.start > ts_range.end || ts_range.end > rows {
            return Err(Error::data(format!(
                "ts range {ts_range:?} outside [0, {rows})"
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite embedding entry at {i}")));
        }
        Ok(EmbeddingMatrix {
            rows,
            dim,
            data,
            ts_range,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_ts(&self) -> usize {
        self.ts_range.len()
    }

    pub fn ts_block(&self) -> &[f64] {
        &self.data[self.ts_range.start * self.dim..self.ts_range.end * self.dim]
    }

    pub fn ts_block_mut(&mut self) -> &mut [f64] {
        let d = self.dim;
        &mut self.data[self.ts_range.start * d..self.ts_range.end * d]
    }

    /// Rows outside the TS block.
    pub fn base_rows(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity((self.rows - self.n_ts()) * d);
        out.extend_from_slice(&self.data[..self.ts_range.start * d]);
        out.extend_from_slice(&self.data[self.ts_range.end * d..]);
        out
    }

    /// Append a TS block after the current rows.
    pub fn with_ts_block(base: &[f64], dim: usize, ts: Vec<f64>) -> Result<Self> {
        let n_base = base.len() / dim;
        let n_ts = ts.len() / dim;
        let mut data = Vec::with_capacity(base.len() + ts.len());
        data.extend_from_slice(base);
        data.extend(ts);
        Self::new(n_base + n_ts, dim, data, n_base..n_base + n_ts)
    }
}

/// Statistics of the base rows that every initialization scheme anchors to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStats {
    pub mean_embed: Vec<f64>,
    /// Mean distance of a base row to `mean_embed`.
    pub avg_radius: f64,
    /// Population std of those distances.
    pub radius_std: f64,
    /// Top three principal axes of the centered base rows, orthonormal.
    pub axes: [Vec<f64>; 3],
    /// Range of centered base-row projections onto `axes[0]`.
    pub axis1_range: (f64, f64),
}

/// Mean, average radius and radius spread of a row set.
pub fn radius_moments(rows: &[f64], dim: usize) -> (Vec<f64>, f64, f64) {
    let n = rows.len() / dim;
    let mean = column_mean(rows, n, dim);
    let radii: Vec<f64> = rows
        .chunks_exact(dim)
        .map(|r| r.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let avg = radii.iter().sum::<f64>() / n as f64;
    let var = radii.iter().map(|r| (r - avg).powi(2)).sum::<f64>() / n as f64;
    (mean, avg, var.sqrt())
}

pub fn base_stats(emb: &EmbeddingMatrix) -> Result<BaseStats> {
    base_stats_from_rows(&emb.base_rows(), emb.dim)
}

pub fn base_stats_from_rows(rows: &[f64], dim: usize) -> Result<BaseStats> {
    let n = rows.len() / dim;
    if n < 4 {
        return Err(Error::geometry(format!("need at least 4 base rows, got {n}")));
    }
    if dim < 3 {
        return Err(Error::geometry(format!("need dim ≥ 3, got {dim}")));
    }
    let (mean_embed, avg_radius, radius_std) = radius_moments(rows, dim);
    if avg_radius <= 0.0 {
        return Err(Error::geometry("base rows are all identical"));
    }
    let pa = linalg::principal_axes(rows, n, dim, 3)?;
    let mut axes = pa.axes;
    linalg::gram_schmidt(&mut axes)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows.chunks_exact(dim) {
        let p: f64 = r
            .iter()
            .zip(&mean_embed)
            .zip(&axes[0])
            .map(|((x, m), a)| (x - m) * a)
            .sum();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let [a1, a2, a3]: [Vec<f64>; 3] = axes.try_into().expect("three axes");
    Ok(BaseStats {
        mean_embed,
        avg_radius,
        radius_std,
        axes: [a1, a2, a3],
        axis1_range: (lo, hi),
    })
}

/// Seeded stand-in for a pretrained base embedding table.
///
/// Rows are Gaussian with a power-law spectrum (std `1/sqrt(1+j)` along the
/// j-th axis of a random rotation) around a random offset whose norm equals
/// the expected radius. Pretrained tables are anisotropic with a shared
/// offset; an isotropic zero-mean table would make a line through the
/// origin collapse to ±1 under layer normalization.
pub fn standin_base_table(rows: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(rng::derive(seed, "base-table"));
    let rot = linalg::random_orthogonal(&mut rng, dim);
    let sigmas: Vec<f64> = (0..dim).map(|j| 1.0 / ((1 + j) as f64).sqrt()).collect();
    let radius = sigmas.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mut offset = linalg::random_unit(&mut rng, dim);
    offset.iter_mut().for_each(|x| *x *= radius);
    let mut out = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        let z = linalg::gaussian_vec(&mut rng, dim);
        for i in 0..dim {
            // rot is orthogonal; rows of the table are offset + Σ_j σ_j z_j q_j.
            let v: f64 = (0..dim).map(|j| rot[i * dim + j] * sigmas[j] * z[j]).sum();
            out.push(offset[i] + v);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Default,
    Slerp,
    #[serde(alias = "pca-main")]
    PcaMain,
    Helix,
    Vmf,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Default => "default",
            InitScheme::Slerp => "slerp",
            InitScheme::PcaMain => "pca_main",
            InitScheme::Helix => "helix",
            InitScheme::Vmf => "vmf",
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "default" => Ok(InitScheme::Default),
            "slerp" => Ok(InitScheme::Slerp),
            "pca_main" | "pcamain" => Ok(InitScheme::PcaMain),
            "helix" => Ok(InitScheme::Helix),
            "vmf" => Ok(InitScheme::Vmf),
            other => Err(Error::config(format!("unknown init scheme '{other}'"))),
        }
    }
}

fn default_noise() -> f64 {
    0.01
}
fn default_turns() -> u32 {
    1
}
fn default_kappa() -> f64 {
    50.0
}
fn default_margin() -> f64 {
    0.05
}

/// Which scheme to use and its knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    /// Helix only.
    #[serde(default = "default_turns")]
    pub num_turns: u32,
    /// VMF concentration κ.
    #[serde(default = "default_kappa")]
    pub concentration: f64,
    /// PCA-Main range extension as a fraction of the projection span.
    #[serde(default = "default_margin")]
    pub margin_frac: f64,
    #[serde(default)]
    pub shuffled: bool,
}

impl InitSpec {
    pub fn new(scheme: InitScheme, seed: u64) -> Self {
        InitSpec {
            scheme,
            seed,
            noise_scale: default_noise(),
            num_turns: default_turns(),
            concentration: default_kappa(),
            margin_frac: default_margin(),
            shuffled: false,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0) {
            return Err(Error::config("noise_scale must be ≥ 0"));
        }
        if !(self.margin_frac >= 0.0) {
            return Err(Error::config("margin_frac must be ≥ 0"));
        }
        if self.scheme == InitScheme::Helix && self.num_turns < 1 {
            return Err(Error::config("num_turns must be ≥ 1"));
        }
        if self.scheme == InitScheme::Vmf && !(self.concentration > 0.0) {
            return Err(Error::config(format!(
                "vMF concentration must be > 0, got {}",
                self.concentration
            )));
        }
        Ok(())
    }

    /// Short label such as `helix-2` or `slerp*` (shuffled).
    pub fn label(&self) -> String {
        let mut s = match self.scheme {
            InitScheme::Helix => format!("helix-{}", self.num_turns),
            InitScheme::PcaMain => "pca-main".to_string(),
            other => other.name().to_string(),
        };
        if self.shuffled {
            s.push('*');
        }
        s
    }
}

/// Build an `n × D` TS block under `spec`, including the shuffle ablation.
pub fn init_ts_block(n: usize, stats: &BaseStats, spec: &InitSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::config(format!("need at least 2 TS tokens, got {n}")));
    }
    let block = match spec.scheme {
        InitScheme::Default => init_default(n, stats, spec.seed),
        InitScheme::Slerp => init_slerp(n, stats, spec)?,
        InitScheme::PcaMain => init_pca_main(n, stats, spec)?,
        InitScheme::Helix => init_helix(n, stats, spec)?,
        InitScheme::Vmf => init_vmf(n, stats, spec)?,
    };
    if spec.shuffled {
        let dim = stats.mean_embed.len();
        let perm = shuffle_permutation(n, rng::derive(spec.seed, "shuffle"));
        Ok(permute_rows(&block, dim, &perm))
    } else {
        Ok(block)
    }
}

/// Seeded uniform permutation of `0..n`.
pub fn shuffle_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed));
    perm
}

/// Row `i` of the output is row `perm[i]` of the input.
pub fn permute_rows(rows: &[f64], dim: usize, perm: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len());
    for &src in perm {
        out.extend_from_slice(&rows[src * dim..(src + 1) * dim]);
    }
    out
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Randomly permute the TS rows, leaving base rows in place.
pub fn shuffle_ts_block(emb: &EmbeddingMatrix, seed: u64) -> EmbeddingMatrix {
    let perm = shuffle_permutation(emb.n_ts(), seed);
    let mut out = emb.clone();
    let shuffled = permute_rows(emb.ts_block(), emb.dim, &perm);
    out.ts_block_mut().copy_from_slice(&shuffled);
    out
}

/// Mean distance of the TS rows to `center`.
pub fn mean_radius(block: &[f64], dim: usize, center: &[f64]) -> f64 {
    let n = block.len() / dim;
    block
        .chunks_exact(dim)
        .map(|r| {
            let d: Vec<f64> = r.iter().zip(center).map(|(a, b)| a - b).collect();
            norm(&d)
        })
        .sum::<f64>()
        / n as f64
}
