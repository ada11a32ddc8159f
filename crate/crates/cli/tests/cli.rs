use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tstok(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tstok")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn vocab_reports_2001_tokens() {
    let o = tstok(&["vocab", "--epsilon", "0.001"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_tokens"], 2001);
    assert_eq!(v["first"], "<-1.000>");
}

#[test]
fn usage_errors_exit_1() {
    let o = tstok(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(tstok(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tstok(&["vocab", "--epsilon", "0"]).status.code(), Some(1));
    assert_eq!(tstok(&["vocab", "--epsilon", "abc"]).status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_tstok"))
        .args(["vocab", "--epsilon", "0.5"])
        .env("TSTOK_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(tstok(&["--help"]).status.success());
}

#[test]
fn init_geometry_and_export_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let stem = dir.path().join(run).join("emb");
        let o = tstok(&["init", "--scheme", "pca-main", "--seed", "42", "--dim", "16", "--epsilon", "0.01", "--out", p(&stem)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let g = tstok(&["geometry", "--emb", p(&stem), "--k-global", "50"]);
        assert!(g.status.success(), "{}", stderr(&g));
        let csv = dir.path().join(run).join("pca.csv");
        let e = tstok(&["export-pca", "--emb", p(&stem), "--out", p(&csv)]);
        assert!(e.status.success(), "{}", stderr(&e));
        outputs.push((
            fs::read(stem.with_extension("json")).unwrap(),
            fs::read(stem.with_extension("bin")).unwrap(),
            g.stdout,
            fs::read(csv).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let header: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(header["ts_start"], 12);
    assert_eq!(header["ts_end"], 12 + 201);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0].2).unwrap();
    assert!(report["r_ord_global"].as_f64().unwrap() < 1e-9);
    assert_eq!(String::from_utf8_lossy(&outputs[0].3).lines().count(), 202);
}

#[test]
fn truncated_container_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("emb");
    assert!(tstok(&["init", "--scheme", "slerp", "--dim", "8", "--epsilon", "0.01", "--out", p(&stem)]).status.success());
    let bin = stem.with_extension("bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() / 2]).unwrap();
    let o = tstok(&["geometry", "--emb", p(&stem)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("size"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_input_exits_2() {
    let o = tstok(&["geometry", "--emb", "/nonexistent/emb"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_data_and_tokenize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("trend.jsonl");
    let o = tstok(&["gen-data", "--task", "trend", "--count", "9", "--seed", "1", "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 9);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["task"], "trend");
    assert_eq!(first["label"], 0);

    let tok = dir.path().join("tok.jsonl");
    let o = tstok(&["tokenize", "--epsilon", "0.001", "--input", p(&data), "--output", p(&tok)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line: serde_json::Value = serde_json::from_str(fs::read_to_string(&tok).unwrap().lines().next().unwrap()).unwrap();
    let ids = line["ids"].as_array().unwrap();
    let n = first["channels"][0].as_array().unwrap().len();
    assert_eq!(ids.len(), n);
    assert!(ids.iter().all(|v| (12..12 + 2001).contains(&v.as_u64().unwrap())));
    assert!(line["text"].as_str().unwrap().contains("Time series 1 is: |<"));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"channels\": [[1.0, \"x\"]]}\n").unwrap();
    let o = tstok(&["tokenize", "--epsilon", "0.001", "--input", p(&bad), "--output", p(&tok)]);
    assert_eq!(o.status.code(), Some(2));
}

const TINY_GRID: &str = r#"{
  "data": {"tasks": ["trend", "volatility"], "train_count": 24, "eval_count": 12, "seed": 3, "epsilon": 0.01},
  "variants": [
    {"id": "slerp", "init": {"scheme": "slerp"}, "seeds": [0, 1],
     "model": {"dim": 16, "layers": 1, "heads": 2, "ff_dim": 32, "context": 288},
     "train": {"steps": 10, "batch_size": 4, "eval_interval": 5}},
    {"id": "default", "init": {"scheme": "default"}, "seeds": [0],
     "model": {"dim": 16, "layers": 1, "heads": 2, "ff_dim": 32, "context": 288},
     "train": {"steps": 10, "batch_size": 4, "eval_interval": 5}}
  ]
}"#;

#[test]
fn train_eval_and_correlate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    fs::write(&cfg, TINY_GRID).unwrap();
    let mut snapshots = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = tstok(&["train", "--config", p(&cfg), "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let files = ["results.csv", "results.json", "regression.json", "slerp/seed1/log.csv", "slerp/seed1/checkpoint.bin"];
        snapshots.push(files.map(|f| fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(snapshots[0], snapshots[1]);

    let out = dir.path().join("r1");
    let data = dir.path().join("vol.jsonl");
    assert!(tstok(&["gen-data", "--task", "volatility", "--count", "6", "--seed", "9", "--out", p(&data)]).status.success());
    let ckpt = out.join("slerp/seed0/checkpoint");
    let a = tstok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data)]);
    assert!(a.status.success(), "{}", stderr(&a));
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(a.stdout, tstok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data)]).stdout);

    let c = tstok(&["correlate", "--results", p(&out.join("results.json"))]);
    assert!(c.status.success(), "{}", stderr(&c));
    let reg: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert_eq!(reg["fits"].as_array().unwrap().len(), 4);
    assert_eq!(reg["variants"].as_array().unwrap().len(), 2);
    let filtered = tstok(&["correlate", "--results", p(&out.join("results.json")), "--variants", "slerp"]);
    let reg: serde_json::Value = serde_json::from_slice(&filtered.stdout).unwrap();
    assert_eq!(reg["variants"].as_array().unwrap().len(), 1);
    assert!(reg["fits"][0]["r"].is_null());
}

#[test]
fn invalid_grid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    fs::write(&cfg, r#"{"variants": [{"id": "x", "init": {"scheme": "slerp"}, "seeds": []}]}"#).unwrap();
    let o = tstok(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
