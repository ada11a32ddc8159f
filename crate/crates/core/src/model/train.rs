use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernels::Real;
use super::metrics::{argmax, Confusion};
use super::optim::{AdamW, AdamWConfig, Schedule};
use super::params::{Model, ModelConfig};
use crate::container::{read_f32_le, write_f32_le};
use crate::error::{Error, Result};
use crate::regularizers::{
    fit_projection, measure, total_regularizer, GeometryContext, GeometryReport, RegularizerConfig, GLOBAL_STEP,
};
use crate::rng;
use crate::synth::{encode_sample, Specials, SyntheticSample, TaskKind};
use crate::ts_processor::TokenVocab;

/// One encoded multiple-choice example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub ids: Vec<usize>,
    pub target: usize,
    pub task: TaskKind,
    pub label: usize,
}

pub fn encode_dataset(
    samples: &[SyntheticSample],
    vocab: &TokenVocab,
    specials: &Specials,
    context: usize,
) -> Result<Vec<Example>> {
    samples
        .par_iter()
        .map(|s| {
            let (ids, target) = encode_sample(s, vocab, specials, context)?;
            Ok(Example {
                ids,
                target,
                task: s.task,
                label: s.label,
            })
        })
        .collect()
}

fn d_steps() -> usize {
    2000
}
fn d_batch() -> usize {
    16
}
fn d_lr() -> f64 {
    3e-4
}
fn d_warmup() -> f64 {
    0.03
}
fn d_eval() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub peak_lr: f64,
    #[serde(default = "d_warmup")]
    pub warmup_ratio: f64,
    #[serde(default)]
    pub adamw: AdamWConfig,
    #[serde(default = "d_eval")]
    pub eval_interval: usize,
    #[serde(default)]
    pub reg: RegularizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: d_steps(),
            batch_size: d_batch(),
            peak_lr: d_lr(),
            warmup_ratio: d_warmup(),
            adamw: AdamWConfig::default(),
            eval_interval: d_eval(),
            reg: RegularizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("steps and batch_size must be ≥ 1"));
        }
        if self.eval_interval == 0 || self.eval_interval > self.steps {
            return Err(Error::config(format!(
                "eval interval {} must lie in [1, steps={}]",
                self.eval_interval, self.steps
            )));
        }
        if !(self.peak_lr > 0.0) || !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::config("peak_lr must be > 0 and warmup_ratio in [0, 1)"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule::warmup_cosine(self.peak_lr, self.warmup_ratio, self.steps)
    }
}

/// Accuracy and Macro-F1 on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub n: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Pooled accuracy over all examples.
    pub accuracy: f64,
    /// Mean cross-entropy at the answer position.
    pub ce: f64,
    pub per_task: BTreeMap<String, TaskScore>,
}

impl EvalReport {
    /// Unweighted mean of per-task accuracies.
    pub fn mean_task_accuracy(&self) -> f64 {
        self.per_task.values().map(|t| t.accuracy).sum::<f64>() / self.per_task.len().max(1) as f64
    }
}

/// Predicted option index: argmax over the option-token logits.
pub fn predict<T: Real>(logits: &[T], specials: &Specials) -> usize {
    argmax(&logits[specials.opt_base..specials.opt_base + Specials::N_OPTIONS])
}

pub fn evaluate<T: Real>(model: &Model<T>, data: &[Example], specials: &Specials) -> Result<EvalReport> {
    let outs: Vec<(usize, f64)> = data
        .par_iter()
        .map(|ex| {
            let logits = model.forward(&ex.ids)?;
            let ce = super::network::ce_from_logits(&logits, ex.target).to_f64c();
            Ok((predict(&logits, specials), ce))
        })
        .collect::<Result<_>>()?;
    let mut conf: BTreeMap<TaskKind, Confusion> = BTreeMap::new();
    let mut correct = 0usize;
    let mut ce = 0.0;
    for (ex, &(pred, l)) in data.iter().zip(&outs) {
        conf.entry(ex.task)
            .or_insert_with(|| Confusion::new(ex.task.n_classes()))
            .add(ex.label, pred);
        correct += usize::from(pred == ex.label);
        ce += l;
    }
    let n = data.len().max(1) as f64;
    Ok(EvalReport {
        accuracy: correct as f64 / n,
        ce: ce / n,
        per_task: conf
            .into_iter()
            .map(|(t, c)| {
                (
                    t.name().to_string(),
                    TaskScore {
                        n: c.total(),
                        accuracy: c.accuracy(),
                        macro_f1: c.macro_f1(),
                    },
                )
            })
            .collect(),
    })
}

/// One row of the training log (after the optimizer update of `step`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub ce: f64,
    pub l_ord: f64,
    pub l_mono: f64,
    pub total: f64,
    pub geometry: Option<GeometryReport>,
    pub eval_acc: Option<f64>,
}

pub const LOG_HEADER: [&str; 11] = [
    "step",
    "lr",
    "ce",
    "l_ord",
    "l_mono",
    "total",
    "r_ord_local",
    "r_ord_global",
    "r_mono_local",
    "r_mono_global",
    "eval_acc",
];

impl LogRow {
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
        let g = self.geometry;
        vec![
            self.step.to_string(),
            format!("{:.9e}", self.lr),
            format!("{:.9e}", self.ce),
            format!("{:.9e}", self.l_ord),
            format!("{:.9e}", self.l_mono),
            format!("{:.9e}", self.total),
            opt(g.map(|g| g.r_ord_local)),
            opt(g.map(|g| g.r_ord_global)),
            opt(g.map(|g| g.r_mono_local)),
            opt(g.map(|g| g.r_mono_global)),
            opt(self.eval_acc),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    /// `None` when the TS block is too small for the global step.
    pub geometry: Option<GeometryReport>,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<LogRow>,
    /// Geometry at step 0 and at every evaluation, when measurable.
    pub geometry: Vec<(usize, GeometryReport)>,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainOutcome {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("training evaluates at the last step")
    }

    /// Mean logged CE over steps `(step − window, step]`.
    pub fn mean_ce_before(&self, step: usize, window: usize) -> Option<f64> {
        let rows: Vec<f64> = self
            .log
            .iter()
            .filter(|r| r.step <= step && r.step + window > step)
            .map(|r| r.ce)
            .collect();
        (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
    }
}

fn batch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, epoch as u64));
    idx
}

/// Summed per-example gradients of mean CE, reduced in batch order.
pub fn batch_gradient<T: Real>(model: &Model<T>, batch: &[&Example]) -> Result<(f64, Vec<T>)> {
    let scale = T::from_f64c(1.0 / batch.len() as f64);
    let parts: Vec<(f64, Vec<T>)> = batch
        .par_iter()
        .map(|ex| {
            let mut g = vec![T::zero(); model.layout.total];
            let l = model.loss_and_grad(&ex.ids, ex.target, scale, &mut g)?;
            Ok((l.to_f64c(), g))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut ce, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        ce += l;
        grad.iter_mut().zip(&g).for_each(|(a, &b)| *a += b);
    }
    Ok((ce / batch.len() as f64, grad))
}

/// Train in place. `ts_rows` marks the TS block inside the token table.
/// `on_row` sees every log row as it is produced.
pub fn train<T: Real>(
    model: &mut Model<T>,
    ts_rows: Range<usize>,
    train_set: &[Example],
    eval_set: &[Example],
    cfg: &TrainConfig,
    order_seed: u64,
    mut on_row: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(Error::config("training and evaluation sets must be non-empty"));
    }
    let n_ts = ts_rows.len();
    if cfg.reg.is_active() {
        cfg.reg.validate(n_ts)?;
    }
    let specials = Specials::default();
    let d = model.cfg.dim;
    let ts_off = model.layout.tok_emb.start + ts_rows.start * d;
    let schedule = cfg.schedule();
    let mut opt = AdamW::<T>::new(cfg.adamw, model.layout.total, &model.layout.no_decay());

    let measurable = n_ts > 2 * GLOBAL_STEP;
    let snapshot = |m: &Model<T>| -> Result<Option<GeometryReport>> {
        if measurable {
            measure(&m.token_rows_f64(ts_rows.clone()), d).map(Some)
        } else {
            Ok(None)
        }
    };
    let mut geometry: Vec<(usize, GeometryReport)> = snapshot(model)?.map(|g| (0, g)).into_iter().collect();
    let mut log = Vec::with_capacity(cfg.steps);
    let mut checkpoints = Vec::new();
    let mut ctx: Option<GeometryContext> = None;
    let mut order = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0;

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = batch_order(train_set.len(), order_seed, epoch);
                epoch += 1;
                cursor = 0;
            }
            batch.push(&train_set[order[cursor]]);
            cursor += 1;
        }
        let (ce, mut grad) = batch_gradient(model, &batch)?;

        let (mut l_ord, mut l_mono, mut reg_total) = (0.0, 0.0, 0.0);
        if cfg.reg.is_active() {
            let block = model.token_rows_f64(ts_rows.clone());
            if ctx.is_none() || step % cfg.reg.refresh_interval == 0 {
                ctx = Some(fit_projection(&block, d)?);
            }
            let r = total_regularizer(ctx.as_ref().expect("fitted"), &block, &cfg.reg)?;
            l_ord = r.l_ord;
            l_mono = r.l_mono;
            reg_total = r.total;
            for (g, &rg) in grad[ts_off..ts_off + n_ts * d].iter_mut().zip(&r.grad) {
                *g += T::from_f64c(rg);
            }
        }
        let total = ce + reg_total;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite loss or gradient at step {}: ce={ce}, l_ord={l_ord}, l_mono={l_mono}",
                step + 1
            )));
        }
        let lr = schedule.lr(step);
        opt.step(&mut model.params, &grad, lr);

        let done = step + 1;
        let mut row = LogRow {
            step: done,
            lr,
            ce,
            l_ord,
            l_mono,
            total,
            geometry: None,
            eval_acc: None,
        };
        if done % cfg.eval_interval == 0 || done == cfg.steps {
            let g = snapshot(model)?;
            let eval = evaluate(model, eval_set, &specials)?;
            row.geometry = g;
            row.eval_acc = Some(eval.accuracy);
            if let Some(g) = g {
                geometry.push((done, g));
            }
            checkpoints.push(Checkpoint {
                step: done,
                geometry: g,
                eval,
            });
        }
        on_row(&row);
        log.push(row);
    }
    Ok(TrainOutcome {
        log,
        geometry,
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub ts_start: usize,
    pub ts_end: usize,
    pub epsilon: f64,
    pub step: usize,
}

/// `<stem>.json` header plus `<stem>.bin` of `f32` parameters.
pub fn save_checkpoint<T: Real>(stem: &Path, model: &Model<T>, header: &CheckpointHeader) -> Result<()> {
    let json = stem.with_extension("json");
    std::fs::write(&json, serde_json::to_string_pretty(header)?).map_err(|e| Error::io(&json, e))?;
    write_f32_le(
        &stem.with_extension("bin"),
        model.params.iter().map(|v| v.to_f64c() as f32),
    )
}

pub fn load_checkpoint(stem: &Path) -> Result<(CheckpointHeader, Model<f32>)> {
    let json = stem.with_extension("json");
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text)?;
    let params = read_f32_le(&stem.with_extension("bin"))?;
    let model = Model::from_params(&header.model, params)?;
    Ok((header, model))
}
