use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernels::Real;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::{Specials, FRAME_TOKENS};

fn d_dim() -> usize {
    64
}
fn d_layers() -> usize {
    2
}
fn d_heads() -> usize {
    2
}
fn d_ff() -> usize {
    256
}
fn d_context() -> usize {
    288
}
fn d_init_std() -> f64 {
    0.02
}
fn d_pos_scale() -> f64 {
    1.0
}

/// Shape of the micro decoder. `vocab` counts specials plus TS tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_layers")]
    pub layers: usize,
    #[serde(default = "d_heads")]
    pub heads: usize,
    #[serde(default = "d_ff")]
    pub ff_dim: usize,
    #[serde(default = "d_context")]
    pub context: usize,
    /// Filled in from the vocabulary by grid runs; may be omitted there.
    #[serde(default)]
    pub vocab: usize,
    /// Std of linear-layer weights at init.
    #[serde(default = "d_init_std")]
    pub init_std: f64,
    /// Position-table norm relative to the token-embedding radius.
    #[serde(default = "d_pos_scale")]
    pub pos_scale: f64,
}

impl ModelConfig {
    /// Defaults for a TS vocabulary of `n_ts` tokens.
    pub fn for_ts_tokens(n_ts: usize) -> Self {
        ModelConfig {
            dim: d_dim(),
            layers: d_layers(),
            heads: d_heads(),
            ff_dim: d_ff(),
            context: d_context(),
            vocab: Specials::COUNT + n_ts,
            init_std: d_init_std(),
            pos_scale: d_pos_scale(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.layers == 0 || self.ff_dim == 0 {
            return Err(Error::config("layers and ff_dim must be ≥ 1"));
        }
        if self.context <= FRAME_TOKENS {
            return Err(Error::config(format!("context {} too short", self.context)));
        }
        if self.vocab <= Specials::COUNT {
            return Err(Error::config("vocab must exceed the special tokens"));
        }
        Ok(())
    }
}

/// Offsets of one transformer block inside the flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    /// `D × 3D`, columns `[q | k | v]`.
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc1: Range<usize>,
    pub b_fc1: Range<usize>,
    pub w_fc2: Range<usize>,
    pub b_fc2: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub tok_emb: Range<usize>,
    pub pos_emb: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    /// `D × V`.
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f, v) = (cfg.dim, cfg.ff_dim, cfg.vocab);
        let mut c = Cursor(0);
        let tok_emb = c.take(v * d);
        let pos_emb = c.take(cfg.context * d);
        let layers = (0..cfg.layers)
            .map(|_| LayerLayout {
                ln1_g: c.take(d),
                ln1_b: c.take(d),
                w_qkv: c.take(d * 3 * d),
                b_qkv: c.take(3 * d),
                w_o: c.take(d * d),
                b_o: c.take(d),
                ln2_g: c.take(d),
                ln2_b: c.take(d),
                w_fc1: c.take(d * f),
                b_fc1: c.take(f),
                w_fc2: c.take(f * d),
                b_fc2: c.take(d),
            })
            .collect();
        let lnf_g = c.take(d);
        let lnf_b = c.take(d);
        let head_w = c.take(d * v);
        let head_b = c.take(v);
        Layout {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            total: c.0,
        }
    }

    /// Ranges exempt from weight decay (layer-norm gains/shifts and biases).
    pub fn no_decay(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([
                l.ln1_g.clone(),
                l.ln1_b.clone(),
                l.b_qkv.clone(),
                l.b_o.clone(),
                l.ln2_g.clone(),
                l.ln2_b.clone(),
                l.b_fc1.clone(),
                l.b_fc2.clone(),
            ]);
        }
        out.extend([self.lnf_g.clone(), self.lnf_b.clone(), self.head_b.clone()]);
        out
    }

    /// Named groups, for diagnostics and per-group gradient checks.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![
            ("tok_emb".to_string(), self.tok_emb.clone()),
            ("pos_emb".to_string(), self.pos_emb.clone()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, r) in [
                ("ln1_g", &l.ln1_g),
                ("ln1_b", &l.ln1_b),
                ("w_qkv", &l.w_qkv),
                ("b_qkv", &l.b_qkv),
                ("w_o", &l.w_o),
                ("b_o", &l.b_o),
                ("ln2_g", &l.ln2_g),
                ("ln2_b", &l.ln2_b),
                ("w_fc1", &l.w_fc1),
                ("b_fc1", &l.b_fc1),
                ("w_fc2", &l.w_fc2),
                ("b_fc2", &l.b_fc2),
            ] {
                out.push((format!("layer{i}.{name}"), r.clone()));
            }
        }
        out.extend([
            ("lnf_g".to_string(), self.lnf_g.clone()),
            ("lnf_b".to_string(), self.lnf_b.clone()),
            ("head_w".to_string(), self.head_w.clone()),
            ("head_b".to_string(), self.head_b.clone()),
        ]);
        out
    }
}

/// Sinusoidal position table, row-major `context × dim`.
pub fn sinusoidal_table(context: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; context * dim];
    for p in 0..context {
        for i in 0..dim {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = p as f64 * freq;
            out[p * dim + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    out
}

/// Parameters of the micro decoder in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

impl<T: Real> Model<T> {
    /// Token table copied from `emb` (which must have `cfg.vocab` rows);
    /// positions from a sinusoidal table with row norm ≈ `pos_scale·radius/√2`;
    /// linear weights Gaussian with std `init_std`; LN gains 1; biases 0.
    pub fn init(cfg: &ModelConfig, emb: &EmbeddingMatrix, radius: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if emb.rows != cfg.vocab || emb.dim != cfg.dim {
            return Err(Error::config(format!(
                "embedding table is {}×{}, model expects {}×{}",
                emb.rows, emb.dim, cfg.vocab, cfg.dim
            )));
        }
        let layout = Layout::new(cfg);
        let mut p = vec![T::zero(); layout.total];
        for (dst, &src) in p[layout.tok_emb.clone()].iter_mut().zip(&emb.data) {
            *dst = T::from_f64c(src);
        }
        let pos_amp = cfg.pos_scale * radius / (cfg.dim as f64).sqrt();
        let table = sinusoidal_table(cfg.context, cfg.dim);
        for (dst, &src) in p[layout.pos_emb.clone()].iter_mut().zip(&table) {
            *dst = T::from_f64c(pos_amp * src);
        }
        let mut rng = rng::seeded(rng::derive(seed, "model-init"));
        let mut fill = |p: &mut [T], r: &Range<usize>| {
            for v in &mut p[r.clone()] {
                *v = T::from_f64c(cfg.init_std * rng.sample::<f64, _>(StandardNormal));
            }
        };
        for l in &layout.layers {
            fill(&mut p, &l.w_qkv);
            fill(&mut p, &l.w_o);
            fill(&mut p, &l.w_fc1);
            fill(&mut p, &l.w_fc2);
        }
        fill(&mut p, &layout.head_w);
        for r in layout
            .layers
            .iter()
            .flat_map(|l| [l.ln1_g.clone(), l.ln2_g.clone()])
            .chain([layout.lnf_g.clone()])
        {
            p[r].iter_mut().for_each(|v| *v = T::one());
        }
        Ok(Model {
            cfg: cfg.clone(),
            layout,
            params: p,
        })
    }

    pub fn from_params(cfg: &ModelConfig, params: Vec<T>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        if params.len() != layout.total {
            return Err(Error::data(format!(
                "parameter blob has {} values, config needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Model {
            cfg: cfg.clone(),
            layout,
            params,
        })
    }

    /// Rows `[start, end)` of the token table as `f64`.
    pub fn token_rows_f64(&self, rows: Range<usize>) -> Vec<f64> {
        let d = self.cfg.dim;
        let base = self.layout.tok_emb.start;
        self.params[base + rows.start * d..base + rows.end * d]
            .iter()
            .map(|v| v.to_f64c())
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::from_f64c(v.to_f64c())).collect(),
        }
    }
}
