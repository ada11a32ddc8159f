//! Variant grid runner and the accuracy-versus-geometry regression.
//!
//! Each (variant, seed) cell is an independent job: its base table, data,
//! TS block, model weights and batch order are derived from the grid and
//! cell seeds only, so a cell's result does not depend on which other
//! cells run alongside it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{base_stats_from_rows, init_ts_block, standin_base_table, EmbeddingMatrix, InitScheme, InitSpec};
use crate::error::{Error, Result};
use crate::model::train::{encode_dataset, save_checkpoint, train, CheckpointHeader, Example, TrainConfig, LOG_HEADER};
use crate::model::{EvalReport, Model, ModelConfig};
use crate::regularizers::{GeometryReport, RegularizerConfig, GLOBAL_STEP, LOCAL_STEP};
use crate::rng;
use crate::synth::{generate, Specials, SyntheticSample, TaskKind};
use crate::ts_processor::{build_vocab, TokenVocab};

fn d_tasks() -> Vec<TaskKind> {
    vec![TaskKind::Trend, TaskKind::Volatility]
}
fn d_train() -> usize {
    3000
}
fn d_eval() -> usize {
    600
}
fn d_eps() -> f64 {
    0.001
}
fn d_base_rows() -> usize {
    1024
}

/// Synthetic data shared by every cell of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    #[serde(default = "d_tasks")]
    pub tasks: Vec<TaskKind>,
    /// Total training samples, split evenly across tasks.
    #[serde(default = "d_train")]
    pub train_count: usize,
    #[serde(default = "d_eval")]
    pub eval_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_eps")]
    pub epsilon: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            tasks: d_tasks(),
            train_count: d_train(),
            eval_count: d_eval(),
            seed: 0,
            epsilon: d_eps(),
        }
    }
}

/// Training and evaluation sets drawn from disjoint seed partitions.
pub struct Dataset {
    pub vocab: TokenVocab,
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
}

fn split_counts(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

pub fn generate_split(spec: &DataSpec, partition: &str) -> Result<Vec<SyntheticSample>> {
    let total = if partition == "train" {
        spec.train_count
    } else {
        spec.eval_count
    };
    let seed = rng::derive(spec.seed, partition);
    let mut out = Vec::with_capacity(total);
    for (task, count) in spec.tasks.iter().zip(split_counts(total, spec.tasks.len())) {
        out.extend(generate(*task, count, seed)?);
    }
    Ok(out)
}

impl DataSpec {
    pub fn build(&self, context: usize) -> Result<Dataset> {
        if self.tasks.is_empty() {
            return Err(Error::config("data spec needs at least one task"));
        }
        let vocab = build_vocab(self.epsilon, Specials::COUNT)?;
        let specials = Specials::default();
        let train = encode_dataset(&generate_split(self, "train")?, &vocab, &specials, context)?;
        let eval = encode_dataset(&generate_split(self, "eval")?, &vocab, &specials, context)?;
        Ok(Dataset { vocab, train, eval })
    }
}

/// The seeded stand-in for a pretrained embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseTableSpec {
    #[serde(default = "d_base_rows")]
    pub rows: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BaseTableSpec {
    fn default() -> Self {
        BaseTableSpec {
            rows: d_base_rows(),
            seed: 0,
        }
    }
}

/// One row of the grid. `init.seed` is replaced by a per-cell seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub id: String,
    pub init: InitSpec,
    #[serde(default)]
    pub reg: RegularizerConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl VariantSpec {
    pub fn new(id: &str, init: InitSpec, seeds: &[u64]) -> Self {
        VariantSpec {
            id: id.to_string(),
            init,
            reg: RegularizerConfig::default(),
            model: None,
            train: TrainConfig::default(),
            seeds: seeds.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config(format!("variant {}: no seeds", self.id)));
        }
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid variant id '{}'", self.id)));
        }
        self.init.validate()?;
        let mut t = self.train.clone();
        t.reg = self.reg.clone();
        t.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub base: BaseTableSpec,
    pub variants: Vec<VariantSpec>,
    /// Run cells concurrently.
    #[serde(default)]
    pub parallel: bool,
}

fn scheme_spec(scheme: InitScheme) -> InitSpec {
    InitSpec::new(scheme, 0)
}

/// The nine initialization variants: five schemes, Helix at 1, 2 and 4
/// turns, and shuffled Slerp / PCA-Main.
pub fn table_variants(seeds: &[u64]) -> Vec<VariantSpec> {
    let helix = |turns: u32| {
        let mut s = scheme_spec(InitScheme::Helix);
        s.num_turns = turns;
        s
    };
    let shuffled = |scheme| {
        let mut s = scheme_spec(scheme);
        s.shuffled = true;
        s
    };
    [
        ("pca-main", scheme_spec(InitScheme::PcaMain)),
        ("slerp", scheme_spec(InitScheme::Slerp)),
        ("helix-1", helix(1)),
        ("helix-2", helix(2)),
        ("helix-4", helix(4)),
        ("vmf", scheme_spec(InitScheme::Vmf)),
        ("default", scheme_spec(InitScheme::Default)),
        ("pca-main-shuffled", shuffled(InitScheme::PcaMain)),
        ("slerp-shuffled", shuffled(InitScheme::Slerp)),
    ]
    .into_iter()
    .map(|(id, init)| VariantSpec::new(id, init, seeds))
    .collect()
}

/// Soft-constraint variants: Default with the global ordinality loss, and
/// Slerp with each single loss at each step preset.
pub fn soft_constraint_variants(seeds: &[u64], lambda: f64) -> Vec<VariantSpec> {
    let reg = |ord: bool, step: usize| RegularizerConfig {
        step,
        lambda_ord: if ord { lambda } else { 0.0 },
        lambda_mono: if ord { 0.0 } else { lambda },
        ..Default::default()
    };
    let mut out = Vec::new();
    let mut v = VariantSpec::new("default+ord-global", scheme_spec(InitScheme::Default), seeds);
    v.reg = reg(true, GLOBAL_STEP);
    out.push(v);
    for (name, ord, step) in [
        ("slerp+ord-local", true, LOCAL_STEP),
        ("slerp+ord-global", true, GLOBAL_STEP),
        ("slerp+mono-local", false, LOCAL_STEP),
        ("slerp+mono-global", false, GLOBAL_STEP),
    ] {
        let mut v = VariantSpec::new(name, scheme_spec(InitScheme::Slerp), seeds);
        v.reg = reg(ord, step);
        out.push(v);
    }
    out
}

impl GridConfig {
    pub fn default_grid() -> Self {
        GridConfig {
            data: DataSpec::default(),
            base: BaseTableSpec::default(),
            variants: table_variants(&[0, 1, 2]),
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::config("grid has no variants"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for v in &self.variants {
            v.validate()?;
            if !ids.insert(&v.id) {
                return Err(Error::config(format!("duplicate variant id '{}'", v.id)));
            }
        }
        Ok(())
    }

    /// Apply one training configuration to every variant, keeping their
    /// regularizer settings.
    pub fn with_train(mut self, train: &TrainConfig) -> Self {
        for v in &mut self.variants {
            v.train = train.clone();
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

/// Outcome of one (variant, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub seed: u64,
    #[serde(flatten)]
    pub status: CellStatus,
    /// Final-checkpoint evaluation.
    pub eval: Option<EvalReport>,
    /// Geometry at step 0 and at each evaluation.
    pub geometry: Vec<(usize, GeometryReport)>,
    /// `(step, eval accuracy)` at each evaluation.
    pub accuracy_curve: Vec<(usize, f64)>,
    /// Mean training CE over the 50 steps ending at step 500.
    pub ce_at_500: Option<f64>,
    /// Not written to result files, which must be reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.eval.as_ref().map(|e| e.accuracy)
    }

    pub fn final_geometry(&self) -> Option<&GeometryReport> {
        self.geometry.last().map(|(_, g)| g)
    }
}

/// Shared, read-only inputs of every cell.
pub struct GridContext {
    pub data: Dataset,
    pub base_rows: Vec<f64>,
    pub dim: usize,
}

impl GridContext {
    pub fn new(grid: &GridConfig, context: usize, dim: usize) -> Result<Self> {
        Ok(GridContext {
            data: grid.data.build(context)?,
            base_rows: standin_base_table(grid.base.rows, dim, grid.base.seed),
            dim,
        })
    }
}

fn model_config(v: &VariantSpec, vocab: &TokenVocab) -> ModelConfig {
    let mut cfg = v
        .model
        .clone()
        .unwrap_or_else(|| ModelConfig::for_ts_tokens(vocab.n_tokens));
    cfg.vocab = Specials::COUNT + vocab.n_tokens;
    cfg
}

/// Everything produced by one successful cell.
pub struct CellArtifacts {
    pub model: Model<f32>,
    pub log: Vec<crate::model::LogRow>,
}

/// Train one cell. Errors are returned, not recorded.
pub fn run_cell(ctx: &GridContext, v: &VariantSpec, seed: u64) -> Result<(RunResult, CellArtifacts)> {
    let start = Instant::now();
    let vocab = &ctx.data.vocab;
    let cfg = model_config(v, vocab);
    if cfg.dim != ctx.dim {
        return Err(Error::config(format!(
            "variant {} uses dim {}, grid context was built for {}",
            v.id, cfg.dim, ctx.dim
        )));
    }
    let stats = base_stats_from_rows(&ctx.base_rows, ctx.dim)?;
    let mut init = v.init.clone();
    init.seed = rng::derive(seed, "init");
    let ts = init_ts_block(vocab.n_tokens, &stats, &init)?;
    let emb = EmbeddingMatrix::with_ts_block(&ctx.base_rows[..Specials::COUNT * ctx.dim], ctx.dim, ts)?;
    let mut model = Model::<f32>::init(&cfg, &emb, stats.avg_radius, rng::derive(seed, "model"))?;
    let mut tc = v.train.clone();
    tc.reg = v.reg.clone();
    let outcome = train(
        &mut model,
        emb.ts_range.clone(),
        &ctx.data.train,
        &ctx.data.eval,
        &tc,
        rng::derive(seed, "order"),
        |_| {},
    )?;
    let result = RunResult {
        variant: v.id.clone(),
        seed,
        status: CellStatus::Ok,
        eval: Some(outcome.final_checkpoint().eval.clone()),
        geometry: outcome.geometry.clone(),
        accuracy_curve: outcome
            .checkpoints
            .iter()
            .map(|c| (c.step, c.eval.accuracy))
            .collect(),
        ce_at_500: outcome.mean_ce_before(500, 50).filter(|_| tc.steps >= 500),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((
        result,
        CellArtifacts {
            model,
            log: outcome.log,
        },
    ))
}

fn write_cell(dir: &Path, result: &RunResult, art: &CellArtifacts, vocab: &TokenVocab) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let log_path = dir.join("log.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&log_path)?;
    w.write_record(LOG_HEADER)?;
    for row in &art.log {
        w.write_record(row.csv_fields())?;
    }
    w.flush().map_err(|e| Error::io(&log_path, e))?;
    let header = CheckpointHeader {
        model: art.model.cfg.clone(),
        ts_start: Specials::COUNT,
        ts_end: Specials::COUNT + vocab.n_tokens,
        epsilon: vocab.epsilon,
        step: art.log.last().map_or(0, |r| r.step),
    };
    save_checkpoint(&dir.join("checkpoint"), &art.model, &header)?;
    let geo = dir.join("geometry.json");
    fs::write(&geo, serde_json::to_string_pretty(&result.geometry)?).map_err(|e| Error::io(&geo, e))
}

/// Train every (variant, seed) cell. Failed cells are recorded, not fatal.
/// With `out`, per-cell logs, checkpoints and geometry are written under
/// `out/<variant>/seed<k>/`.
pub fn run_grid(
    grid: &GridConfig,
    out: Option<&Path>,
    mut progress: impl FnMut(&RunResult) + Send,
) -> Result<Vec<RunResult>> {
    grid.validate()?;
    let probe = model_config(&grid.variants[0], &build_vocab(grid.data.epsilon, Specials::COUNT)?);
    let ctx = GridContext::new(grid, probe.context, probe.dim)?;
    let cells: Vec<(&VariantSpec, u64)> = grid
        .variants
        .iter()
        .flat_map(|v| v.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let run = |&(v, seed): &(&VariantSpec, u64)| -> RunResult {
        let start = Instant::now();
        let outcome = run_cell(&ctx, v, seed).and_then(|(res, art)| {
            if let Some(dir) = out {
                write_cell(&dir.join(&v.id).join(format!("seed{seed}")), &res, &art, &ctx.data.vocab)?;
            }
            Ok(res)
        });
        outcome.unwrap_or_else(|e| RunResult {
            variant: v.id.clone(),
            seed,
            status: CellStatus::Failed { error: e.to_string() },
            eval: None,
            geometry: Vec::new(),
            accuracy_curve: Vec::new(),
            ce_at_500: None,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        })
    };
    let results: Vec<RunResult> = if grid.parallel {
        // Callbacks arrive in completion order; results keep grid order.
        let progress = Mutex::new(progress);
        cells
            .par_iter()
            .map(|c| {
                let r = run(c);
                (progress.lock().unwrap_or_else(|e| e.into_inner()))(&r);
                r
            })
            .collect()
    } else {
        cells
            .iter()
            .map(|c| {
                let r = run(c);
                progress(&r);
                r
            })
            .collect()
    };
    if let Some(dir) = out {
        write_results(dir, &results, &grid.data.tasks)?;
    }
    Ok(results)
}

/// Per-variant means over successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub n_ok: usize,
    pub accuracy: f64,
    pub geometry: GeometryReport,
}

pub fn summarize(results: &[RunResult]) -> Vec<VariantSummary> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.is_ok()) {
        if !groups.contains_key(r.variant.as_str()) {
            order.push(&r.variant);
        }
        groups.entry(&r.variant).or_default().push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let rs = &groups[id];
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&GeometryReport) -> f64| {
                rs.iter().filter_map(|r| r.final_geometry()).map(f).sum::<f64>() / n
            };
            VariantSummary {
                variant: id.to_string(),
                n_ok: rs.len(),
                accuracy: rs.iter().filter_map(|r| r.accuracy()).sum::<f64>() / n,
                geometry: GeometryReport {
                    r_ord_local: mean(&|g| g.r_ord_local),
                    r_ord_global: mean(&|g| g.r_ord_global),
                    r_mono_local: mean(&|g| g.r_mono_local),
                    r_mono_global: mean(&|g| g.r_mono_global),
                    l_ord: mean(&|g| g.l_ord),
                    l_mono: mean(&|g| g.l_mono),
                },
            }
        })
        .collect()
}

/// Regression of mean accuracy on `−log(R + δ)` for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFit {
    pub metric: String,
    pub n: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Pearson r; `None` when either variable has zero variance.
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub delta: f64,
    pub variants: Vec<VariantSummary>,
    pub fits: Vec<MetricFit>,
}

pub const LOG_DELTA: f64 = 1e-8;

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit accuracy against `−log(R + 1e−8)` for each of the four metrics,
/// one point per variant (seed means of final checkpoints).
pub fn correlate(results: &[RunResult]) -> RegressionReport {
    let variants = summarize(results);
    let y: Vec<f64> = variants.iter().map(|v| v.accuracy).collect();
    let metrics: [(&str, fn(&GeometryReport) -> f64); 4] = [
        ("r_ord_local", |g| g.r_ord_local),
        ("r_ord_global", |g| g.r_ord_global),
        ("r_mono_local", |g| g.r_mono_local),
        ("r_mono_global", |g| g.r_mono_global),
    ];
    let fits = metrics
        .iter()
        .map(|(name, f)| {
            let x: Vec<f64> = variants.iter().map(|v| -(f(&v.geometry) + LOG_DELTA).ln()).collect();
            let line = ols(&x, &y);
            MetricFit {
                metric: name.to_string(),
                n: x.len(),
                slope: line.map(|l| l.0),
                intercept: line.map(|l| l.1),
                r: pearson(&x, &y),
            }
        })
        .collect();
    RegressionReport {
        delta: LOG_DELTA,
        variants,
        fits,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// `results.csv`, `results.json` and `regression.json` under `dir`.
pub fn write_results(dir: &Path, results: &[RunResult], tasks: &[TaskKind]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("results.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)?;
    let mut header: Vec<String> = ["variant", "seed", "status", "accuracy", "ce_at_500"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for t in tasks {
        header.push(format!("acc_{t}"));
        header.push(format!("f1_{t}"));
    }
    header.extend(
        ["r_ord_local", "r_ord_global", "r_mono_local", "r_mono_global"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in results {
        let mut rec = vec![
            r.variant.clone(),
            r.seed.to_string(),
            match &r.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::Failed { .. } => "failed".to_string(),
            },
            fmt_opt(r.accuracy()),
            fmt_opt(r.ce_at_500),
        ];
        for t in tasks {
            let score = r.eval.as_ref().and_then(|e| e.per_task.get(t.name()));
            rec.push(fmt_opt(score.map(|s| s.accuracy)));
            rec.push(fmt_opt(score.map(|s| s.macro_f1)));
        }
        let g = r.final_geometry();
        rec.push(fmt_opt(g.map(|g| g.r_ord_local)));
        rec.push(fmt_opt(g.map(|g| g.r_ord_global)));
        rec.push(fmt_opt(g.map(|g| g.r_mono_local)));
        rec.push(fmt_opt(g.map(|g| g.r_mono_global)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let json = dir.join("results.json");
    fs::write(&json, serde_json::to_string_pretty(results)?).map_err(|e| Error::io(&json, e))?;
    let reg = dir.join("regression.json");
    fs::write(&reg, serde_json::to_string_pretty(&correlate(results))?).map_err(|e| Error::io(&reg, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(pearson(&x, &x), Some(1.0));
        assert_eq!(ols(&x, &x), Some((1.0, 0.0)));
    }

    #[test]
    fn constant_y_is_undefined() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[5.0; 3]), None);
    }

    #[test]
    fn default_grid_has_nine_variants() {
        let g = GridConfig::default_grid();
        assert_eq!(g.variants.len(), 9);
        assert!(g.validate().is_ok());
        let ids: Vec<&str> = g.variants.iter().map(|v| v.id.as_str()).collect();
        assert!(ids.contains(&"slerp-shuffled") && ids.contains(&"helix-4"));
    }

    #[test]
    fn split_counts_are_even() {
        assert_eq!(split_counts(3000, 2), vec![1500, 1500]);
        assert_eq!(split_counts(7, 3), vec![3, 2, 2]);
    }
}
