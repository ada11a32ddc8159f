//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 6-9 share one training grid (14 variants × 3 seeds). Its
//! results are cached under the cargo target temp dir, keyed by a hash of
//! this executable and the grid JSON, so rebuilding after any code change
//! retrains from scratch. Set `TSTOK_ACCEPTANCE_FRESH=1` to ignore the cache.
//!
//! Exit status is nonzero only when a correctness criterion (1-5, 10) fails.

use std::collections::BTreeMap;
use std::fs;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use tstok_core::embed::{base_stats_from_rows, init_ts_block, standin_base_table, BaseStats, InitScheme, InitSpec};
use tstok_core::experiment::{correlate, run_grid, soft_constraint_variants, table_variants, GridConfig, RunResult};
use tstok_core::linalg::{dot, gaussian_vec, norm};
use tstok_core::model::{ce_from_logits, Confusion, Model, ModelConfig};
use tstok_core::regularizers::{fit_projection, loss_mono, loss_ord, measure, GeometryContext};
use tstok_core::rng::seeded;
use tstok_core::synth::Specials;
use tstok_core::ts_processor::{build_vocab, detokenize, tokenize, RawSeries};
use tstok_core::EmbeddingMatrix;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn tstok(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tstok"))
        .args(args)
        .output()
        .expect("tstok binary runs")
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

// 1 ------------------------------------------------------------------------

fn vocabulary_law() -> Verdict {
    let t = Instant::now();
    let out = tstok(&["vocab", "--epsilon", "0.001"]);
    let elapsed = secs(t);
    let n = serde_json::from_slice::<serde_json::Value>(&out.stdout)
        .ok()
        .and_then(|v| v["n_tokens"].as_u64());
    verdict(
        out.status.success() && n == Some(2001) && elapsed < 1.0,
        format!("n_tokens = {n:?} in {elapsed:.3}s"),
    )
}

// 2 ------------------------------------------------------------------------

fn ulp(x: f64) -> f64 {
    f64::from_bits(x.abs().to_bits() + 1) - x.abs()
}

fn round_trip_bound() -> Verdict {
    let t = Instant::now();
    let mut violations = 0usize;
    let mut checked = 0usize;
    for (k, eps) in [0.5, 0.01, 0.001].into_iter().enumerate() {
        let vocab = build_vocab(eps, 0).unwrap();
        let mut rng = seeded(1000 + k as u64);
        for _ in 0..100_000 {
            let n_ch = 1 + (gaussian_vec(&mut rng, 1)[0].abs() as usize % 3);
            let mag = 10f64.powf(gaussian_vec(&mut rng, 1)[0] * 2.0);
            let channels: Vec<Vec<f64>> = (0..n_ch)
                .map(|_| {
                    let len = 1 + (gaussian_vec(&mut rng, 1)[0].abs() * 6.0) as usize % 16;
                    gaussian_vec(&mut rng, len).into_iter().map(|v| v * mag).collect()
                })
                .collect();
            let raw = RawSeries { channels };
            let q = tokenize(&raw, &vocab).unwrap();
            let back = detokenize(&q, &vocab).unwrap();
            let bound = eps / 2.0 * q.scale + 4.0 * ulp(q.scale);
            for (a, b) in raw.channels.iter().flatten().zip(back.channels.iter().flatten()) {
                checked += 1;
                if (a - b).abs() > bound {
                    violations += 1;
                }
            }
        }
    }
    let elapsed = secs(t);
    verdict(
        violations == 0 && elapsed < 10.0,
        format!("3 × 10^5 series, {checked} values, {violations} violations, {elapsed:.2}s"),
    )
}

// 3 ------------------------------------------------------------------------

fn base() -> BaseStats {
    base_stats_from_rows(&standin_base_table(1024, 64, 0), 64).unwrap()
}

fn manifold_invariants() -> Verdict {
    let t = Instant::now();
    let s = base();
    let mut worst_sphere = 0.0f64;
    for spec in [
        InitSpec::new(InitScheme::Slerp, 7).noiseless(),
        InitSpec::new(InitScheme::Helix, 7).noiseless(),
        InitSpec {
            num_turns: 4,
            ..InitSpec::new(InitScheme::Helix, 7).noiseless()
        },
    ] {
        let block = init_ts_block(2001, &s, &spec).unwrap();
        for r in block.chunks_exact(64) {
            let c: Vec<f64> = r.iter().zip(&s.mean_embed).map(|(a, b)| a - b).collect();
            worst_sphere = worst_sphere.max((norm(&c) - s.avg_radius).abs() / s.avg_radius);
        }
    }
    let line = init_ts_block(2001, &s, &InitSpec::new(InitScheme::PcaMain, 7).noiseless()).unwrap();
    let m = measure(&line, 64).unwrap();
    let worst_line = [m.r_ord_local, m.r_ord_global, m.r_mono_local, m.r_mono_global]
        .into_iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    let shuffled = init_ts_block(
        2001,
        &s,
        &InitSpec {
            shuffled: true,
            ..InitSpec::new(InitScheme::PcaMain, 42)
        },
    )
    .unwrap();
    let sh = measure(&shuffled, 64).unwrap().r_ord_global;
    let elapsed = secs(t);
    verdict(
        worst_sphere <= 1e-9 && worst_line <= 1e-9 && sh > 0.0 && elapsed < 5.0,
        format!(
            "sphere rel err {worst_sphere:.1e}, PCA-Main max R {worst_line:.1e}, shuffled r_ord_global {sh:.4}, {elapsed:.2}s"
        ),
    )
}

// 4 ------------------------------------------------------------------------

type Loss = fn(&GeometryContext, &[f64], usize, f64) -> tstok_core::Result<(f64, Vec<f64>)>;

fn regularizer_fd_error(loss: Loss, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let pick = |rng: &mut _, lo: usize, hi: usize| lo + (gaussian_vec(rng, 1)[0].abs() * 1e6) as usize % (hi - lo + 1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = pick(&mut rng, 3, 8);
        let n = pick(&mut rng, 5, 12);
        let k = pick(&mut rng, 1, (n - 1) / 2);
        let margin = gaussian_vec(&mut rng, 1)[0] * 0.2;
        let mut block = gaussian_vec(&mut rng, n * d);
        let ctx = fit_projection(&block, d).unwrap();
        let (_, grad) = loss(&ctx, &block, k, margin).unwrap();
        let h = 1e-5;
        for i in 0..block.len() {
            let orig = block[i];
            block[i] = orig + h;
            let up = loss(&ctx, &block, k, margin).unwrap().0;
            block[i] = orig - h;
            let down = loss(&ctx, &block, k, margin).unwrap().0;
            block[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-5));
        }
    }
    worst
}

fn model_fd_error() -> f64 {
    let cfg = ModelConfig {
        dim: 8,
        layers: 2,
        heads: 2,
        ff_dim: 16,
        context: 16,
        vocab: 32,
        init_std: 0.02,
        pos_scale: 1.0,
    };
    let mut rng = seeded(21);
    let emb = EmbeddingMatrix::new(32, 8, gaussian_vec(&mut rng, 32 * 8), Specials::COUNT..32).unwrap();
    let mut m = Model::<f64>::init(&cfg, &emb, 2.0, 3).unwrap();
    let noise = gaussian_vec(&mut rng, m.params.len());
    m.params.iter_mut().zip(noise).for_each(|(p, z)| *p += 0.3 * z);
    let batch: Vec<(Vec<usize>, usize)> = vec![
        (vec![0, 4, 1, 14, 20, 25, 13, 1, 2], 9),
        (vec![0, 6, 1, 31, 12, 17, 1, 2, 3, 3], 10),
    ];
    let loss = |m: &Model<f64>| {
        batch
            .iter()
            .map(|(ids, t)| ce_from_logits(&m.forward(ids).unwrap(), *t))
            .sum::<f64>()
            / 2.0
    };
    let mut grad = vec![0.0; m.params.len()];
    for (ids, t) in &batch {
        m.loss_and_grad(ids, *t, 0.5, &mut grad).unwrap();
    }
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..m.params.len() {
        let orig = m.params[i];
        m.params[i] = orig + h;
        let up = loss(&m);
        m.params[i] = orig - h;
        let down = loss(&m);
        m.params[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }
    worst
}

fn gradient_correctness() -> Verdict {
    let t = Instant::now();
    let ord = regularizer_fd_error(loss_ord, 401);
    let mono = regularizer_fd_error(loss_mono, 402);
    let model = model_fd_error();
    let elapsed = secs(t);
    verdict(
        ord <= 1e-4 && mono <= 1e-4 && model <= 1e-3 && elapsed < 60.0,
        format!("max rel err: ord {ord:.1e}, mono {mono:.1e}, micro model {model:.1e}, {elapsed:.2}s"),
    )
}

// 5 ------------------------------------------------------------------------

fn projected(ctx: &GeometryContext, row: &[f64]) -> Vec<f64> {
    ctx.axes.iter().map(|a| dot(a, row)).collect()
}

fn naive_losses(ctx: &GeometryContext, block: &[f64], d: usize, k: usize, m: f64) -> (f64, f64) {
    let n = block.len() / d;
    let y: Vec<Vec<f64>> = (0..n).map(|i| projected(ctx, &block[i * d..(i + 1) * d])).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (mut ord, mut mono) = (0.0, 0.0);
    for i in 0..n {
        if i >= 2 * k {
            ord += (dist(&y[i], &y[i - k]) - dist(&y[i], &y[i - 2 * k]) - m).max(0.0);
        }
        if i >= k && i + k < n {
            let a: Vec<f64> = (0..3).map(|c| y[i][c] - y[i - k][c]).collect();
            let b: Vec<f64> = (0..3).map(|c| y[i + k][c] - y[i][c]).collect();
            mono += (-dot(&a, &b) / (norm(&a) * norm(&b)) - m).max(0.0);
        }
    }
    let count = (n - 2 * k) as f64;
    (ord / count, mono / count)
}

fn brute_force_equivalence() -> Verdict {
    let t = Instant::now();
    let mut rng = seeded(55);
    let mut worst = 0.0f64;
    for n in 5..=10 {
        for k in 1..=(n - 1) / 2 {
            for d in [3, 5, 8] {
                let block = gaussian_vec(&mut rng, n * d);
                let ctx = fit_projection(&block, d).unwrap();
                let m = 0.1 * gaussian_vec(&mut rng, 1)[0];
                let (no, nm) = naive_losses(&ctx, &block, d, k, m);
                worst = worst
                    .max((loss_ord(&ctx, &block, k, m).unwrap().0 - no).abs())
                    .max((loss_mono(&ctx, &block, k, m).unwrap().0 - nm).abs());
            }
        }
    }
    // TP = (5, 0, 5), FP = (5, 0, 0), FN = (0, 5, 0): F1 = (2/3, 0, 1).
    let mut c = Confusion::new(3);
    for _ in 0..5 {
        c.add(0, 0);
        c.add(2, 2);
        c.add(1, 0);
    }
    let f1_ok = c.f1_per_class() == vec![2.0 / 3.0, 0.0, 1.0] && c.macro_f1() == (2.0 / 3.0 + 0.0 + 1.0) / 3.0;
    let elapsed = secs(t);
    verdict(
        worst <= 1e-12 && f1_ok && elapsed < 5.0,
        format!("max |slice − naive| {worst:.1e}, macro-F1 hand example {}, {elapsed:.2}s", if f1_ok { "exact" } else { "WRONG" }),
    )
}

// 6-9 ----------------------------------------------------------------------

fn acceptance_grid() -> GridConfig {
    let mut g = GridConfig::default_grid();
    g.variants = table_variants(&SEEDS);
    g.variants.extend(soft_constraint_variants(&SEEDS, 0.1));
    g.parallel = true;
    g
}

fn exe_hash(grid_json: &str) -> String {
    let mut h = DefaultHasher::new();
    fs::read(std::env::current_exe().unwrap()).unwrap().hash(&mut h);
    grid_json.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Results and wall seconds of the run that produced them; true if cached.
fn grid_results() -> (Vec<RunResult>, f64, bool) {
    let grid = acceptance_grid();
    let json = serde_json::to_string_pretty(&grid).unwrap();
    let dir: PathBuf = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-grid");
    let key = exe_hash(&json);
    let fresh = std::env::var("TSTOK_ACCEPTANCE_FRESH").is_ok_and(|v| v == "1");
    if !fresh && fs::read_to_string(dir.join("cache_key")).ok().as_deref() == Some(key.as_str()) {
        if let (Ok(r), Ok(t)) = (
            fs::read_to_string(dir.join("results.json")),
            fs::read_to_string(dir.join("timing.json")),
        ) {
            let results: Vec<RunResult> = serde_json::from_str(&r).unwrap();
            let wall: f64 = serde_json::from_str(&t).unwrap();
            return (results, wall, true);
        }
    }
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("grid.json"), &json).unwrap();
    eprintln!("training acceptance grid ({} cells) into {}", grid.variants.len() * SEEDS.len(), dir.display());
    let t = Instant::now();
    let results = run_grid(&grid, Some(&dir), |r| {
        eprintln!("  {} seed {}: {:?} ({:.0}s)", r.variant, r.seed, r.accuracy(), r.wall_clock_secs)
    })
    .unwrap();
    let wall = secs(t);
    fs::write(dir.join("timing.json"), serde_json::to_string(&wall).unwrap()).unwrap();
    fs::write(dir.join("cache_key"), &key).unwrap();
    (results, wall, false)
}

fn mean_acc(rs: &[RunResult]) -> BTreeMap<String, f64> {
    correlate(rs).variants.into_iter().map(|v| (v.variant, v.accuracy)).collect()
}

fn stratification(acc: &BTreeMap<String, f64>, table_core_secs: f64) -> Verdict {
    let get = |k: &str| acc.get(k).copied().unwrap_or(f64::NAN);
    let d = get("default");
    let gains = [get("slerp") - d, get("pca-main") - d];
    let shuffled = [get("slerp-shuffled") - d, get("pca-main-shuffled") - d];
    let projected = table_core_secs / 8.0;
    let pass = gains.iter().all(|g| *g >= 0.10) && shuffled.iter().all(|g| g.abs() <= 0.05) && projected <= 1800.0;
    verdict(
        pass,
        format!(
            "default {:.1}%, slerp {:+.1}, pca-main {:+.1}, slerp* {:+.1}, pca-main* {:+.1} points; 27 cells = {:.0} core-s, ≈{:.0}s on 8 cores",
            100.0 * d,
            100.0 * gains[0],
            100.0 * gains[1],
            100.0 * shuffled[0],
            100.0 * shuffled[1],
            table_core_secs,
            projected
        ),
    )
}

fn convergence(rs: &[RunResult]) -> Verdict {
    let ce = |v: &str, s: u64| {
        rs.iter()
            .find(|r| r.variant == v && r.seed == s)
            .and_then(|r| r.ce_at_500)
    };
    let pairs: Vec<(Option<f64>, Option<f64>)> = SEEDS.iter().map(|&s| (ce("slerp", s), ce("default", s))).collect();
    let wins = pairs
        .iter()
        .filter(|(a, b)| matches!((a, b), (Some(a), Some(b)) if a <= b))
        .count();
    let shown: Vec<String> = pairs
        .iter()
        .map(|(a, b)| format!("{:.3}/{:.3}", a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN)))
        .collect();
    verdict(wins >= 2, format!("slerp/default CE at step 500: {}; slerp ≤ default in {wins}/3", shown.join(", ")))
}

fn soft_constraints(acc: &BTreeMap<String, f64>) -> Verdict {
    let get = |k: &str| acc.get(k).copied().unwrap_or(f64::NAN);
    let gain = get("default+ord-global") - get("default");
    let slerp = get("slerp");
    let deltas: Vec<(&str, f64)> = ["slerp+ord-local", "slerp+ord-global", "slerp+mono-local", "slerp+mono-global"]
        .into_iter()
        .map(|k| (k, get(k) - slerp))
        .collect();
    let pass = gain >= 0.03 && deltas.iter().all(|(_, d)| d.abs() <= 0.03);
    let shown: Vec<String> = deltas.iter().map(|(k, d)| format!("{k} {:+.1}", 100.0 * d)).collect();
    verdict(
        pass,
        format!("default+ord-global {:+.1} points; {}", 100.0 * gain, shown.join(", ")),
    )
}

fn correlation(rs: &[RunResult]) -> Verdict {
    let table: Vec<String> = table_variants(&SEEDS).into_iter().map(|v| v.id).collect();
    let subset: Vec<RunResult> = rs.iter().filter(|r| table.contains(&r.variant)).cloned().collect();
    let rep = correlate(&subset);
    let fit = rep.fits.iter().find(|f| f.metric == "r_ord_global").unwrap();
    let r = fit.r;
    let others: Vec<String> = rep
        .fits
        .iter()
        .map(|f| format!("{} {}", f.metric, f.r.map_or("undefined".into(), |r| format!("{r:.3}"))))
        .collect();
    verdict(
        rep.variants.len() >= 8 && r.is_some_and(|r| r >= 0.5),
        format!("{} variants; r by metric: {}", rep.variants.len(), others.join(", ")),
    )
}

// 10 -----------------------------------------------------------------------

const TINY_GRID: &str = r#"{
  "data": {"tasks": ["trend", "volatility"], "train_count": 30, "eval_count": 15, "seed": 11, "epsilon": 0.01},
  "variants": [
    {"id": "slerp", "init": {"scheme": "slerp"}, "seeds": [0],
     "model": {"dim": 16, "layers": 1, "heads": 2, "ff_dim": 32},
     "train": {"steps": 20, "batch_size": 4, "eval_interval": 10}},
    {"id": "default-reg", "init": {"scheme": "default"}, "seeds": [0],
     "reg": {"step": 100, "lambda_ord": 0.1},
     "model": {"dim": 16, "layers": 1, "heads": 2, "ff_dim": 32},
     "train": {"steps": 20, "batch_size": 4, "eval_interval": 10}}
  ]
}"#;

fn collect_files(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect_files(&p, out, root);
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
}

/// Run every subcommand into `root`; returns all produced bytes.
fn cli_session(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::create_dir_all(root).unwrap();
    let s = |p: &str| root.join(p).to_str().unwrap().to_string();
    let grid = root.join("grid.json");
    fs::write(&grid, TINY_GRID).unwrap();
    let calls: Vec<Vec<String>> = vec![
        vec!["vocab".into(), "--epsilon".into(), "0.001".into()],
        vec!["gen-data".into(), "--task".into(), "outliers".into(), "--count".into(), "30".into(), "--seed".into(), "4".into(), "--out".into(), s("data.jsonl")],
        vec!["tokenize".into(), "--epsilon".into(), "0.001".into(), "--input".into(), s("data.jsonl"), "--output".into(), s("tok.jsonl")],
        vec!["init".into(), "--scheme".into(), "vmf".into(), "--seed".into(), "42".into(), "--out".into(), s("emb/vmf")],
        vec!["init".into(), "--scheme".into(), "helix".into(), "--turns".into(), "2".into(), "--shuffled".into(), "--out".into(), s("emb/helix")],
        vec!["geometry".into(), "--emb".into(), s("emb/vmf")],
        vec!["export-pca".into(), "--emb".into(), s("emb/helix"), "--out".into(), s("pca.csv")],
        vec!["train".into(), "--config".into(), s("grid.json"), "--out".into(), s("runs")],
        vec!["eval".into(), "--checkpoint".into(), s("runs/slerp/seed0/checkpoint"), "--data".into(), s("data.jsonl")],
        vec!["correlate".into(), "--results".into(), s("runs/results.json"), "--out".into(), s("regression.json")],
    ];
    let mut files = BTreeMap::new();
    for (i, args) in calls.iter().enumerate() {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = tstok(&refs);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        files.insert(PathBuf::from(format!("stdout-{i}")), o.stdout);
    }
    collect_files(root, &mut files, root);
    files
}

fn determinism() -> Verdict {
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let a = cli_session(&tmp.path().join("a"));
    let b = cli_session(&tmp.path().join("b"));
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    verdict(
        differing.is_empty() && a.len() == b.len(),
        format!(
            "{} outputs from 10 subcommand invocations compared, {} differ{}, {:.1}s",
            a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) },
            secs(t)
        ),
    )
}

fn main() -> ExitCode {
    let mut verdicts: Vec<(u32, &str, Verdict)> = vec![
        (1, "vocabulary law", vocabulary_law()),
        (2, "round-trip bound", round_trip_bound()),
        (3, "manifold invariants", manifold_invariants()),
        (4, "gradient correctness", gradient_correctness()),
        (5, "brute-force oracle equivalence", brute_force_equivalence()),
    ];
    for (n, name, v) in &verdicts {
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let (results, wall, cached) = grid_results();
    let threads = rayon::current_num_threads();
    eprintln!(
        "grid: {} cells, {} failed, {wall:.0}s wall on {threads} thread(s){}",
        results.len(),
        results.iter().filter(|r| !r.is_ok()).count(),
        if cached { " (cached)" } else { "" }
    );
    // Cells are independent: scale busy core-seconds to 8 cores and to the
    // 27 table cells. Per-cell clocks are not summed because nested
    // work-stealing can run one cell inside another's window.
    let table_core_secs = wall * threads as f64 * 27.0 / results.len() as f64;
    let acc = mean_acc(&results);
    let late: Vec<(u32, &str, Verdict)> = vec![
        (6, "stratification", stratification(&acc, table_core_secs)),
        (7, "convergence ordering", convergence(&results)),
        (8, "soft-constraint gain", soft_constraints(&acc)),
        (9, "geometry-performance correlation", correlation(&results)),
        (10, "determinism", determinism()),
    ];
    for (n, name, v) in &late {
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    verdicts.extend(late);
    let failed = verdicts.iter().filter(|(_, _, v)| !v.pass).count();
    println!("acceptance: {} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    // 6-9 are empirical outcomes of training; a red line there is reported,
    // not treated as a defect. Any other red line fails the run.
    let defects = verdicts.iter().filter(|(n, _, v)| !v.pass && !(6..=9).contains(n)).count();
    if defects == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
