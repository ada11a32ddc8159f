//! Labeled synthetic multiple-choice samples for four series-understanding
//! tasks, and their encoding as micro-LM inputs.
//!
//! Every sample follows `y_t = a·t/L + A·sin(2πt/p + φ) + σ·η_t + spikes`
//! with `η_t` standard Gaussian truncated to `|η| ≤ 4`. Each task draws the
//! parameter that defines its label from a class-specific band and the
//! remaining parameters from a shared nuisance band.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::ts_processor::{tokenize, RawSeries, TokenVocab};

pub const LENGTHS: [usize; 3] = [64, 128, 256];
pub const N_CLASSES: usize = 3;
/// Truncation bound of the unit noise.
pub const NOISE_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Trend,
    Seasonality,
    Volatility,
    Outliers,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Trend,
        TaskKind::Seasonality,
        TaskKind::Volatility,
        TaskKind::Outliers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Trend => "trend",
            TaskKind::Seasonality => "seasonality",
            TaskKind::Volatility => "volatility",
            TaskKind::Outliers => "outliers",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn n_classes(self) -> usize {
        N_CLASSES
    }

    pub fn class_names(self) -> [&'static str; N_CLASSES] {
        match self {
            TaskKind::Trend => ["up", "down", "flat"],
            TaskKind::Seasonality => ["none", "short", "long"],
            TaskKind::Volatility => ["low", "mid", "high"],
            TaskKind::Outliers => ["0 spikes", "1 spike", "2 spikes"],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown task '{s}'")))
    }
}

/// A single additive spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub position: usize,
    pub magnitude: f64,
}

/// Generator parameters, recorded for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub slope: f64,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub sigma: f64,
    pub spikes: Vec<Spike>,
}

impl GenParams {
    /// The noise-free, spike-free part at time `t` of a length-`len` series.
    pub fn trend_and_season(&self, t: usize, len: usize) -> f64 {
        let t = t as f64;
        self.slope * t / len as f64 + self.amplitude * (2.0 * PI * t / self.period + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    #[serde(flatten)]
    pub series: RawSeries,
    pub task: TaskKind,
    pub label: usize,
    pub params: GenParams,
}

impl SyntheticSample {
    pub fn values(&self) -> &[f64] {
        &self.series.channels[0]
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= NOISE_BOUND {
            return z;
        }
    }
}

fn draw_params<R: Rng + ?Sized>(rng: &mut R, task: TaskKind, label: usize, len: usize) -> GenParams {
    let phase = uniform(rng, 0.0, 2.0 * PI);
    let mut p = GenParams {
        slope: 0.0,
        amplitude: 0.0,
        period: 1.0,
        phase,
        sigma: 0.0,
        spikes: Vec::new(),
    };
    match task {
        TaskKind::Trend => {
            p.slope = match label {
                0 => uniform(rng, 0.5, 2.0),
                1 => uniform(rng, -2.0, -0.5),
                _ => uniform(rng, -0.05, 0.05),
            };
            p.amplitude = uniform(rng, 0.0, 0.2);
            p.period = uniform(rng, 6.0, 24.0);
            p.sigma = uniform(rng, 0.02, 0.15);
        }
        TaskKind::Seasonality => {
            p.slope = uniform(rng, -0.3, 0.3);
            p.sigma = uniform(rng, 0.02, 0.1);
            match label {
                0 => p.period = uniform(rng, 6.0, 48.0),
                1 => {
                    p.amplitude = uniform(rng, 0.5, 1.5);
                    p.period = uniform(rng, 6.0, 12.0);
                }
                _ => {
                    p.amplitude = uniform(rng, 0.5, 1.5);
                    p.period = uniform(rng, 24.0, 48.0);
                }
            }
        }
        TaskKind::Volatility => {
            p.slope = uniform(rng, -0.3, 0.3);
            p.amplitude = uniform(rng, 0.8, 1.2);
            p.period = uniform(rng, 32.0, 64.0);
            p.sigma = match label {
                0 => uniform(rng, 0.02, 0.05),
                1 => uniform(rng, 0.15, 0.25),
                _ => uniform(rng, 0.5, 0.8),
            };
        }
        TaskKind::Outliers => {
            p.slope = uniform(rng, -0.3, 0.3);
            p.amplitude = uniform(rng, 0.0, 0.5);
            p.period = uniform(rng, 24.0, 48.0);
            p.sigma = uniform(rng, 0.05, 0.15);
            let mut positions: Vec<usize> = Vec::with_capacity(label);
            while positions.len() < label {
                let pos = rng.random_range(2..len - 2);
                if positions.iter().all(|&q| q.abs_diff(pos) >= 3) {
                    positions.push(pos);
                }
            }
            positions.sort_unstable();
            p.spikes = positions
                .into_iter()
                .map(|position| {
                    let m = uniform(rng, 4.0 * p.sigma + 1.0, 4.0 * p.sigma + 3.0);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    Spike {
                        position,
                        magnitude: sign * m,
                    }
                })
                .collect();
        }
    }
    p
}

/// Sample `index` of the `(task, seed)` stream.
pub fn generate_one(task: TaskKind, seed: u64, index: usize) -> SyntheticSample {
    let mut rng = rng::stream(rng::derive(seed, task.name()), index as u64);
    let label = index % N_CLASSES;
    let len = LENGTHS[rng.random_range(0..LENGTHS.len())];
    let params = draw_params(&mut rng, task, label, len);
    let mut values: Vec<f64> = (0..len)
        .map(|t| params.trend_and_season(t, len) + params.sigma * truncated_normal(&mut rng))
        .collect();
    for s in &params.spikes {
        values[s.position] += s.magnitude;
    }
    SyntheticSample {
        series: RawSeries {
            channels: vec![values],
        },
        task,
        label,
        params,
    }
}

/// `count` samples with labels cycling through the classes, so every
/// class count is within one of `count / n_classes`.
pub fn generate(task: TaskKind, count: usize, seed: u64) -> Result<Vec<SyntheticSample>> {
    if count < task.n_classes() {
        return Err(Error::config(format!(
            "count {count} is below the {} classes of {task}",
            task.n_classes()
        )));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|i| generate_one(task, seed, i))
        .collect())
}

/// Special-token IDs of the micro-LM vocabulary. TS tokens follow them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specials {
    pub bos: usize,
    pub sep: usize,
    pub ask: usize,
    pub pad: usize,
    /// First of four task tokens.
    pub task_base: usize,
    /// First of four option tokens.
    pub opt_base: usize,
}

impl Default for Specials {
    fn default() -> Self {
        Specials {
            bos: 0,
            sep: 1,
            ask: 2,
            pad: 3,
            task_base: 4,
            opt_base: 8,
        }
    }
}

impl Specials {
    pub const COUNT: usize = 12;
    pub const N_OPTIONS: usize = 4;

    pub fn task_token(&self, task: TaskKind) -> usize {
        self.task_base + task.index()
    }

    pub fn option_token(&self, label: usize) -> usize {
        self.opt_base + label
    }
}

/// Tokens added around the series by [`encode_sample`].
pub const FRAME_TOKENS: usize = 5;

/// `[BOS, task, SEP, ts…, SEP, ASK]` and the option token of the label.
///
/// Series longer than `context − 5` are center-cropped before
/// normalization.
pub fn encode_sample(
    sample: &SyntheticSample,
    vocab: &TokenVocab,
    specials: &Specials,
    context: usize,
) -> Result<(Vec<usize>, usize)> {
    if context <= FRAME_TOKENS {
        return Err(Error::data(format!(
            "context {context} cannot hold any series tokens"
        )));
    }
    if sample.label >= Specials::N_OPTIONS {
        return Err(Error::data(format!("label {} has no option token", sample.label)));
    }
    let values = sample.values();
    let room = context - FRAME_TOKENS;
    let cropped = if values.len() > room {
        let start = (values.len() - room) / 2;
        &values[start..start + room]
    } else {
        values
    };
    let q = tokenize(&RawSeries::univariate(cropped.to_vec())?, vocab)?;
    let mut ids = Vec::with_capacity(cropped.len() + FRAME_TOKENS);
    ids.extend([specials.bos, specials.task_token(sample.task), specials.sep]);
    ids.extend(q.channels[0].iter().map(|&i| vocab.base_offset + i));
    ids.extend([specials.sep, specials.ask]);
    Ok((ids, specials.option_token(sample.label)))
}
