//! `tstok`: command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data, geometry
//! or training error. Results go to files or stdout; diagnostics to stderr.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tstok_core::container;
use tstok_core::embed::{base_stats_from_rows, init_ts_block, standin_base_table, InitScheme, InitSpec};
use tstok_core::experiment::{correlate, run_grid, GridConfig, RunResult};
use tstok_core::export::export_pca;
use tstok_core::model::train::{encode_dataset, evaluate, load_checkpoint};
use tstok_core::model::TrainConfig;
use tstok_core::regularizers::{measure_steps, RegularizerConfig, GLOBAL_STEP, LOCAL_STEP};
use tstok_core::synth::{generate, Specials, SyntheticSample, TaskKind};
use tstok_core::ts_processor::{build_vocab, render_series_block, tokenize, encode_ids, RawSeries};
use tstok_core::{EmbeddingMatrix, Error};

#[derive(Parser)]
#[command(name = "tstok", version, about = "Time-series tokens, embedding geometry and micro-LM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the TS-token vocabulary for a precision.
    Vocab {
        #[arg(long)]
        epsilon: f64,
    },
    /// Tokenize JSONL series ({channels, meta}) into {ids, scale, text}.
    Tokenize {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Initialize a TS-token embedding block and write a container.
    Init(InitArgs),
    /// Geometry report of a container's TS block, as JSON on stdout.
    Geometry {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long, default_value_t = LOCAL_STEP)]
        k_local: usize,
        #[arg(long, default_value_t = GLOBAL_STEP)]
        k_global: usize,
    },
    /// Generate labeled synthetic series as JSONL.
    GenData {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a variant grid.
    Train {
        /// Grid JSON; the built-in nine-variant grid when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the step count of every variant (eval interval follows).
        #[arg(long)]
        steps: Option<usize>,
        /// Run cells concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate a checkpoint on a JSONL dataset; EvalReport JSON on stdout.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Accuracy-versus-geometry regression from a grid's results.json.
    Correlate {
        #[arg(long)]
        results: PathBuf,
        /// Restrict to these variant ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export TS embeddings projected to 2-D and 3-D as CSV.
    ExportPca {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    scheme: InitScheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    noise_scale: f64,
    #[arg(long, default_value_t = 1)]
    turns: u32,
    #[arg(long, default_value_t = 50.0)]
    concentration: f64,
    #[arg(long, default_value_t = 0.05)]
    margin_frac: f64,
    #[arg(long)]
    shuffled: bool,
    /// Rows of the seeded stand-in base table.
    #[arg(long, default_value_t = 1024)]
    base_rows: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 1,
        _ => 2,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("TSTOK_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Error::Config(format!("TSTOK_THREADS must be a non-negative integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Vocab { epsilon } => vocab(epsilon),
        Command::Tokenize { epsilon, input, output } => tokenize_file(epsilon, &input, &output),
        Command::Init(args) => init(&args),
        Command::Geometry { emb, k_local, k_global } => geometry(&emb, k_local, k_global),
        Command::GenData { task, count, seed, out } => gen_data(task, count, seed, &out),
        Command::Train { config, out, steps, parallel } => train(config.as_deref(), &out, steps, parallel),
        Command::Eval { checkpoint, data } => eval(&checkpoint, &data),
        Command::Correlate { results, variants, out } => correlate_cmd(&results, &variants, out.as_deref()),
        Command::ExportPca { emb, out } => {
            let (header, m) = container::load(&emb)?;
            let n = export_pca(&m, header.epsilon, &out)?;
            eprintln!("wrote {n} rows to {}", out.display());
            Ok(())
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn vocab(epsilon: f64) -> Result<()> {
    let v = build_vocab(epsilon, Specials::COUNT)?;
    #[derive(Serialize)]
    struct Report {
        epsilon: f64,
        n_tokens: usize,
        first_id: usize,
        last_id: usize,
        first: String,
        last: String,
    }
    print_json(&Report {
        epsilon,
        n_tokens: v.n_tokens,
        first_id: v.base_offset,
        last_id: v.base_offset + v.n_tokens - 1,
        first: v.token_text(0),
        last: v.token_text(v.n_tokens - 1),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn tokenize_file(epsilon: f64, input: &Path, output: &Path) -> Result<()> {
    let vocab = build_vocab(epsilon, Specials::COUNT)?;
    let series: Vec<RawSeries> = read_jsonl(input)?;
    #[derive(Serialize)]
    struct Line {
        ids: Vec<usize>,
        scale: f64,
        text: String,
    }
    let mut w = create(output)?;
    for (n, s) in series.iter().enumerate() {
        let q = tokenize(s, &vocab).with_context(|| format!("record {}", n + 1))?;
        let line = Line {
            ids: encode_ids(&q, &vocab, Specials::default().sep),
            scale: q.scale,
            text: render_series_block(s, &vocab)?,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    eprintln!("tokenized {} series", series.len());
    Ok(())
}

fn init(a: &InitArgs) -> Result<()> {
    let vocab = build_vocab(a.epsilon, Specials::COUNT)?;
    let spec = InitSpec {
        noise_scale: a.noise_scale,
        num_turns: a.turns,
        concentration: a.concentration,
        margin_frac: a.margin_frac,
        shuffled: a.shuffled,
        ..InitSpec::new(a.scheme, a.seed)
    };
    spec.validate()?;
    if a.base_rows < Specials::COUNT.max(4) {
        return Err(Error::Config(format!("--base-rows must be at least {}", Specials::COUNT)).into());
    }
    let base = standin_base_table(a.base_rows, a.dim, a.base_seed);
    let stats = base_stats_from_rows(&base, a.dim)?;
    let ts = init_ts_block(vocab.n_tokens, &stats, &spec)?;
    let emb = EmbeddingMatrix::with_ts_block(&base[..Specials::COUNT * a.dim], a.dim, ts)?;
    container::save(&a.out, &emb, &spec.label(), a.seed, a.epsilon)?;
    eprintln!("wrote {} rows × {} to {}", emb.rows, emb.dim, a.out.display());
    Ok(())
}

fn geometry(emb: &Path, k_local: usize, k_global: usize) -> Result<()> {
    let (_, m) = container::load(emb)?;
    let report = measure_steps(m.ts_block(), m.dim, k_local, k_global, &RegularizerConfig::default())?;
    print_json(&report)
}

fn gen_data(task: TaskKind, count: usize, seed: u64, out: &Path) -> Result<()> {
    let samples = generate(task, count, seed)?;
    let mut w = create(out)?;
    for s in &samples {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    w.flush()?;
    eprintln!("wrote {count} {task} samples to {}", out.display());
    Ok(())
}

fn train(config: Option<&Path>, out: &Path, steps: Option<usize>, parallel: bool) -> Result<()> {
    let mut grid = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GridConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GridConfig::default_grid(),
    };
    if let Some(steps) = steps {
        for v in &mut grid.variants {
            v.train = TrainConfig {
                steps,
                eval_interval: v.train.eval_interval.min(steps),
                ..v.train.clone()
            };
        }
    }
    grid.parallel |= parallel;
    let results = run_grid(&grid, Some(out), |r| match &r.status {
        tstok_core::experiment::CellStatus::Ok => eprintln!(
            "{} seed {}: accuracy {:.4} ({:.1}s)",
            r.variant,
            r.seed,
            r.accuracy().unwrap_or(f64::NAN),
            r.wall_clock_secs
        ),
        tstok_core::experiment::CellStatus::Failed { error } => {
            eprintln!("{} seed {}: FAILED: {error}", r.variant, r.seed)
        }
    })?;
    let failed = results.iter().filter(|r| !r.is_ok()).count();
    eprintln!(
        "{} cells, {failed} failed; results in {}",
        results.len(),
        out.join("results.csv").display()
    );
    Ok(())
}

fn eval(checkpoint: &Path, data: &Path) -> Result<()> {
    let (header, model) = load_checkpoint(checkpoint)?;
    let vocab = build_vocab(header.epsilon, header.ts_start)?;
    let samples: Vec<SyntheticSample> = read_jsonl(data)?;
    let specials = Specials::default();
    let examples = encode_dataset(&samples, &vocab, &specials, model.cfg.context)?;
    print_json(&evaluate(&model, &examples, &specials)?)
}

fn correlate_cmd(results: &Path, variants: &[String], out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(results).map_err(|e| Error::io(results, e))?;
    let mut rs: Vec<RunResult> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", results.display())))?;
    if !variants.is_empty() {
        rs.retain(|r| variants.contains(&r.variant));
    }
    let report = correlate(&rs);
    match out {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            Ok(())
        }
        None => print_json(&report),
    }
}
