//! Raw series → normalized values → ε-grid token indices → prompt text.
//!
//! Normalization divides every channel of a sample by one shared factor, the
//! global maximum absolute value, so all values land in `[-1, 1]`. The grid
//! has `N = ceil(2/ε) + 1` points `v_i = -1 + i·ε`, and each normalized value
//! maps to its nearest grid point (ties go to the even index).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multivariate series; channels may have different lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub channels: Vec<Vec<f64>>,
}

impl RawSeries {
    pub fn new(channels: Vec<Vec<f64>>) -> Result<Self> {
        let s = RawSeries { channels };
        s.validate()?;
        Ok(s)
    }

    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::new(vec![values])
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::data("series has no channels"));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.is_empty() {
                return Err(Error::data(format!("channel {c} is empty")));
            }
            if let Some(pos) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "channel {c} has non-finite value at index {pos}"
                )));
            }
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }
}

/// The TS-token vocabulary: an ε-grid on `[-1, 1]` occupying the contiguous
/// ID range `[base_offset, base_offset + n_tokens)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub epsilon: f64,
    pub n_tokens: usize,
    pub base_offset: usize,
    /// Decimal places used when rendering grid values as text.
    pub decimals: usize,
}

/// Number of grid tokens for precision `epsilon`.
pub fn vocab_size(epsilon: f64) -> usize {
    let q = 2.0 / epsilon;
    let r = q.round();
    // 2/ε computed in floating point can land a hair above an integer.
    let q = if (q - r).abs() <= 1e-12 * q { r } else { q };
    q.ceil() as usize + 1
}

/// Smallest number of decimals that prints every multiple of `epsilon` exactly.
fn decimals_for(epsilon: f64) -> usize {
    (0..=9)
        .find(|&d| {
            let scaled = epsilon * 10f64.powi(d as i32);
            (scaled - scaled.round()).abs() <= 1e-9 * scaled.max(1.0)
        })
        .unwrap_or(9)
}

pub fn build_vocab(epsilon: f64, base_offset: usize) -> Result<TokenVocab> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::config(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    Ok(TokenVocab {
        epsilon,
        n_tokens: vocab_size(epsilon),
        base_offset,
        decimals: decimals_for(epsilon),
    })
}

impl TokenVocab {
    /// Grid value of token index `i`.
    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.epsilon
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_tokens).map(|i| self.value(i)).collect()
    }

    pub fn id_range(&self) -> std::ops::Range<usize> {
        self.base_offset..self.base_offset + self.n_tokens
    }

    /// Nearest grid index for a normalized value.
    pub fn quantize_value(&self, v: f64) -> Result<usize> {
        let half = self.epsilon / 2.0;
        let (lo, hi) = (-1.0 - half, 1.0 + half);
        if !(v >= lo && v <= hi) {
            return Err(Error::Range { value: v, lo, hi });
        }
        let u = (v + 1.0) / self.epsilon;
        let floor = u.floor();
        let frac = u - floor;
        // Midpoints are detected up to a few ulps of the grid coordinate.
        let tol = 8.0 * f64::EPSILON * u.abs().max(1.0);
        let idx = if (frac - 0.5).abs() <= tol {
            let f = floor as i64;
            if f % 2 == 0 {
                f
            } else {
                f + 1
            }
        } else {
            u.round() as i64
        };
        Ok(idx.clamp(0, self.n_tokens as i64 - 1) as usize)
    }

    /// Text of a grid value, e.g. `0.035` or `-0.876` for ε = 0.001.
    pub fn format_value(&self, i: usize) -> String {
        fmt_fixed(self.value(i), self.decimals)
    }

    /// Wrapped token text, e.g. `<0.035>`.
    pub fn token_text(&self, i: usize) -> String {
        format!("<{}>", self.format_value(i))
    }
}

/// Fixed-point formatting without a negative zero.
fn fmt_fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub channels: Vec<Vec<f64>>,
    pub scale: f64,
}

/// Scale every channel by the sample-wide maximum absolute value.
///
/// An all-zero sample keeps scale 1.
pub fn normalize(series: &RawSeries) -> Result<NormalizedSeries> {
    series.validate()?;
    let max_abs = series
        .channels
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs == 0.0 { 1.0 } else { max_abs };
    let channels = series
        .channels
        .iter()
        .map(|ch| ch.iter().map(|v| (v / scale).clamp(-1.0, 1.0)).collect())
        .collect();
    Ok(NormalizedSeries { channels, scale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedSeries {
    pub channels: Vec<Vec<usize>>,
    pub scale: f64,
}

pub fn quantize(norm: &NormalizedSeries, vocab: &TokenVocab) -> Result<QuantizedSeries> {
    let channels = norm
        .channels
        .iter()
        .map(|ch| ch.iter().map(|&v| vocab.quantize_value(v)).collect())
        .collect::<Result<Vec<Vec<usize>>>>()?;
    Ok(QuantizedSeries {
        channels,
        scale: norm.scale,
    })
}

/// Map token indices back to values in the original units.
pub fn detokenize(q: &QuantizedSeries, vocab: &TokenVocab) -> Result<RawSeries> {
    let mut channels = Vec::with_capacity(q.channels.len());
    for ch in &q.channels {
        let mut out = Vec::with_capacity(ch.len());
        for &i in ch {
            if i >= vocab.n_tokens {
                return Err(Error::data(format!(
                    "token index {i} outside [0, {})",
                    vocab.n_tokens
                )));
            }
            out.push(vocab.value(i) * q.scale);
        }
        channels.push(out);
    }
    Ok(RawSeries { channels })
}

/// `normalize` followed by `quantize`.
pub fn tokenize(series: &RawSeries, vocab: &TokenVocab) -> Result<QuantizedSeries> {
    quantize(&normalize(series)?, vocab)
}

/// Token IDs for every channel, channels joined by `separator_id`.
pub fn encode_ids(q: &QuantizedSeries, vocab: &TokenVocab, separator_id: usize) -> Vec<usize> {
    let mut ids = Vec::with_capacity(q.channels.iter().map(Vec::len).sum::<usize>() + q.channels.len());
    for (c, ch) in q.channels.iter().enumerate() {
        if c > 0 {
            ids.push(separator_id);
        }
        ids.extend(ch.iter().map(|&i| vocab.base_offset + i));
    }
    ids
}

/// Summary statistics of one channel, on raw values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub len: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    /// Population standard deviation (divisor `len`).
    pub std: f64,
    pub left: f64,
    pub right: f64,
    /// Value at index `len / 2`.
    pub mid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub channels: Vec<ChannelStats>,
}

pub fn channel_stats(ch: &[f64]) -> ChannelStats {
    let n = ch.len() as f64;
    let mean = ch.iter().sum::<f64>() / n;
    let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (min, max) = ch
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    ChannelStats {
        len: ch.len(),
        max,
        // Summation rounding can push the mean a hair outside [min, max].
        min,
        mean: mean.clamp(min, max),
        std: var.sqrt(),
        left: ch[0],
        right: ch[ch.len() - 1],
        mid: ch[ch.len() / 2],
    }
}

pub fn compute_stats(series: &RawSeries) -> Result<SeriesStats> {
    series.validate()?;
    Ok(SeriesStats {
        channels: series.channels.iter().map(|c| channel_stats(c)).collect(),
    })
}

/// Bundled prompt layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// Multiple-choice QA with an options block.
    #[default]
    Tsqa,
    /// Like `Tsqa` with an auxiliary-information block after the series.
    MmtsInWild,
    /// Exam-style single answer selection.
    TimeSeriesExam,
    /// Free-form description, no options block.
    BedTime,
}

impl TemplateId {
    pub fn default_instruction(self) -> &'static str {
        match self {
            TemplateId::Tsqa | TemplateId::MmtsInWild => {
                "Output the option letter followed by the full option text exactly as listed in Options. Do not add explanations or generate any additional content."
            }
            TemplateId::TimeSeriesExam => {
                "For a given question, you should exactly choose one answer from the options, and output the full answer. Don't generate anything else."
            }
            TemplateId::BedTime => {
                "Output a brief natural-language description of the given time series. Do not generate analysis or any additional content."
            }
        }
    }

    fn has_options(self) -> bool {
        !matches!(self, TemplateId::BedTime)
    }
}

/// Background, question, options and instruction wrapped around the series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub background: String,
    pub question: String,
    pub options: Vec<String>,
    /// Empty means the template's default instruction.
    pub instruction: String,
    pub template: TemplateId,
}

/// Separator placed between token texts.
pub const SEPARATOR: &str = "|";

fn fmt3(v: f64) -> String {
    fmt_fixed(v, 3)
}

/// One channel as `|<v0>|<v1>|...|`.
pub fn render_tokens(indices: &[usize], vocab: &TokenVocab) -> String {
    let mut s = String::with_capacity(indices.len() * (vocab.decimals + 5) + 1);
    s.push_str(SEPARATOR);
    for &i in indices {
        s.push_str(&vocab.token_text(i));
        s.push_str(SEPARATOR);
    }
    s
}

/// The time-series information block: per-channel statistics, the shared
/// scale factor, and the quantized token sequences.
pub fn render_series_block(series: &RawSeries, vocab: &TokenVocab) -> Result<String> {
    let stats = compute_stats(series)?;
    let q = tokenize(series, vocab)?;
    let n = series.channels.len();
    let mut out = String::new();
    let _ = writeln!(out, "Given {n} time series:");
    for (i, st) in stats.channels.iter().enumerate() {
        let _ = writeln!(
            out,
            "Time series {} is of length {}, with statistical information: {{max:{}, min:{}, mean:{}, std:{}, left:{}, right:{}, mid:{}}}.",
            i + 1,
            st.len,
            fmt3(st.max),
            fmt3(st.min),
            fmt3(st.mean),
            fmt3(st.std),
            fmt3(st.left),
            fmt3(st.right),
            fmt3(st.mid),
        );
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "We normalize all time series values into range [-1.0, +1.0], with the same scale factor {}.",
        fmt3(q.scale)
    );
    let _ = writeln!(
        out,
        "After scaling, the {n} time series are below (\"{SEPARATOR}\" is the separator between values):"
    );
    for (i, ch) in q.channels.iter().enumerate() {
        let _ = writeln!(out, "Time series {} is: {}.", i + 1, render_tokens(ch, vocab));
    }
    Ok(out)
}

/// Full prompt: the series block wrapped by the selected template.
pub fn render_prompt(series: &RawSeries, vocab: &TokenVocab, spec: &PromptSpec) -> Result<String> {
    let block = render_series_block(series, vocab)?;
    let mut out = String::new();
    out.push_str("## Time Series Information:\n\n");
    out.push_str(&block);
    if spec.template == TemplateId::MmtsInWild && !spec.background.is_empty() {
        out.push('\n');
        out.push_str(&spec.background);
        out.push('\n');
    }
    out.push_str("\n## Question:\n\n");
    out.push_str(&spec.question);
    out.push('\n');
    if spec.template.has_options() {
        out.push_str("\n## Options:\n\n");
        for (i, opt) in spec.options.iter().enumerate() {
            let letter = char::from(b'A' + (i % 26) as u8);
            let _ = writeln!(out, "{letter}. {opt}");
        }
    }
    out.push_str("\n## Instruction:\n\n");
    if spec.instruction.is_empty() {
        out.push_str(spec.template.default_instruction());
    } else {
        out.push_str(&spec.instruction);
    }
    out.push('\n');
    Ok(out)
}
