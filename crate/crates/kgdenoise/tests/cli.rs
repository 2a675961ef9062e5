use std::path::Path;
use std::process::{Command, Output};

fn kgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgdenoise")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small planted benchmark on disk.
fn synthetic(dir: &Path) {
    let o = kgd(&["gen-synthetic", "--out-dir", p(dir), "--drugs", "4", "--targets", "2", "--genes", "6", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["triples.tsv", "types.tsv", "smoothing.tsv", "links.tsv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

fn data_args(dir: &Path) -> Vec<String> {
    ["triples", "types", "smoothing", "links"]
        .iter()
        .flat_map(|f| [format!("--{f}"), dir.join(format!("{f}.tsv")).display().to_string()])
        .collect()
}

const QUICK: [&str; 10] =
    ["--set", "epochs=3", "--set", "folds=3", "--set", "pretrain.epochs=5", "--set", "pretrain.dim=4", "--set", "hidden_dim=8"];

#[test]
fn gradcheck_prints_error_and_worst_parameter() {
    let o = kgd(&["gradcheck", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("max relative error "), "{text}");
    let err: f64 = text.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(err < 1e-4);
    assert!(text.contains(" at "), "{text}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(kgd(&["train"]).status.code(), Some(1));
    assert_eq!(kgd(&["train", "--links", "x.tsv"]).status.code(), Some(1));
    assert_eq!(kgd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(kgd(&["gradcheck", "--bogus"]).status.code(), Some(1));
    assert_eq!(kgd(&["noise-eval", "--triples", "t", "--links", "l", "--kind", "cosmic"]).status.code(), Some(1));
    assert_eq!(kgd(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let mut args = vec!["train".to_string()];
    args.extend(data_args(dir.path()));
    args.extend(["--set".into(), "warp=9".into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = kgd(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warp"));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = kgd(&["train", "--triples", p(&missing), "--links", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));
}

fn train(dir: &Path, out: &Path) -> Output {
    let mut args = vec!["train".to_string()];
    args.extend(data_args(dir));
    args.extend(QUICK.iter().map(|s| s.to_string()));
    args.extend(["--out-dir".into(), out.display().to_string(), "--jobs".into(), "2".into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    kgd(&args)
}

#[test]
fn train_writes_reports_and_checkpoints_then_eval_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let out = dir.path().join("run");
    let o = train(dir.path(), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,noise_kind,ratio,fold,auc_roc,auc_pr,micro_f1,micro_recall,degradation");
    assert_eq!(lines.len(), 1 + 3 + 2);
    assert!(lines[4].starts_with("full,none,0,mean,"));
    let jsonl = std::fs::read_to_string(out.join("report.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    assert_eq!(records[3]["record"], "summary");
    assert!(records[0]["config"].as_array().unwrap().iter().any(|kv| kv[0] == "seed"));

    let ck = out.join("fold0.ckpt");
    assert!(std::fs::read(&ck).unwrap().starts_with(b"DLPCKPT1\n"));
    let mut args = vec!["eval".to_string(), "--checkpoint".into(), ck.display().to_string()];
    args.extend(data_args(dir.path()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let first = kgd(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    let auc = report["metrics"]["auc_roc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(stdout(&kgd(&args)), stdout(&first));

    // a model with a different width cannot load these parameters
    let mut bad = args.clone();
    bad.extend(["--set", "hidden_dim=5"]);
    assert_eq!(kgd(&bad).status.code(), Some(2));
}

#[test]
fn train_twice_gives_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(train(dir.path(), &a).status.code(), Some(0));
    assert_eq!(train(dir.path(), &b).status.code(), Some(0));
    for f in ["summary.csv", "report.jsonl", "fold1.ckpt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn noise_eval_writes_one_row_per_variant_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let out = dir.path().join("noise");
    let mut args = vec!["noise-eval".to_string()];
    args.extend(data_args(dir.path()));
    args.extend(QUICK.iter().map(|s| s.to_string()));
    for a in ["--ratios", "0,0.25,0.5,0.75", "--kind", "structural", "--variants", "full,wo_srl", "--seeds", "0"] {
        args.push(a.into());
    }
    args.extend(["--out-dir".into(), out.display().to_string()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let before = std::fs::read(dir.path().join("links.tsv")).unwrap();
    let o = kgd(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(dir.path().join("links.tsv")).unwrap(), before);
    let csv = std::fs::read_to_string(out.join("noise_summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    let variants: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(variants, ["full"; 4].into_iter().chain(["wo_srl"; 4]).collect::<Vec<_>>());
    let ratios: Vec<&str> = rows.iter().take(4).map(|r| r[2]).collect();
    assert_eq!(ratios, ["0", "0.25", "0.5", "0.75"]);
    for r in &rows {
        assert_eq!(r[1], "structural");
        assert_eq!(r[3], "mean");
        assert!(!r[8].is_empty());
    }
    assert_eq!(rows[0][8], "0");
}

#[test]
fn extract_describes_both_subgraphs() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let out = dir.path().join("sub.json");
    let d = dir.path();
    let o = kgd(&[
        "extract",
        "--triples",
        p(&d.join("triples.tsv")),
        "--types",
        p(&d.join("types.tsv")),
        "--smoothing",
        p(&d.join("smoothing.tsv")),
        "--pair",
        "drug_c0_0,target_c0_0",
        "--k",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(j["k"], 2);
    assert_eq!(j["local"]["nodes"][0], "drug_c0_0");
    assert_eq!(j["local"]["nodes"][1], "target_c0_0");
    assert_eq!(j["semantic"]["nodes"][0], "drug_c0_0");
    assert!(!j["semantic"]["metapaths"].as_array().unwrap().is_empty());
    let bad = kgd(&["extract", "--triples", p(&d.join("triples.tsv")), "--pair", "drug_c0_0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn pretrain_writes_an_embedding_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let out = dir.path().join("table.ckpt");
    let o = kgd(&["pretrain", "--triples", p(&dir.path().join("triples.tsv")), "--dim", "4", "--epochs", "10", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = kgdenoise::checkpoint::Checkpoint::load(&out).unwrap();
    let table = ck.to_table().unwrap();
    assert_eq!(table.dim, 4);
    assert!(table.max_modulus_error() < 1e-6);
    assert_eq!(ck.meta["epoch_loss"].as_array().unwrap().len(), 10);
}
