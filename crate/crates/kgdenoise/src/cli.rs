//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on a usage error, 2 on a runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kgdenoise_core::harness::synthetic::{generate, SyntheticConfig};
use kgdenoise_core::harness::{
    assemble_sweep, evaluate_params, extract_subgraphs, extract_views, gradient_check, prepare_views, resolve_metapaths,
    run_cell, splits, sweep_cells, train_fold, CvReport, Dataset, HarnessError, NoiseKind, TrainConfig, Variant,
};
use kgdenoise_core::kg::{smooth_relations, Label, LinkExample};
use kgdenoise_core::model::Features;
use kgdenoise_core::pretrain::pretrain;
use kgdenoise_core::tensor::{Tensor, FD_STEP};

use crate::checkpoint::Checkpoint;
use crate::config::{apply_file, apply_flags, build_config, render, RunConfigError};
use crate::dataset::{load_dataset, load_graph, DataPaths};
use crate::jobs::run_jobs;
use crate::report::{cv_csv, json_lines, sweep_csv};
use crate::tsv;

#[derive(Parser, Debug)]
#[command(name = "kgdenoise", version, about = "Denoised link prediction over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain rotation embeddings and write them as a checkpoint.
    Pretrain(PretrainArgs),
    /// Cross-validate the model on a link task.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint on a link file.
    Eval(EvalArgs),
    /// Contaminate the graph at several ratios and compare variants.
    NoiseEval(NoiseArgs),
    /// Dump both subgraphs around one entity pair as JSON.
    Extract(ExtractArgs),
    /// Finite-difference check of the training gradients on a planted graph.
    Gradcheck(GradcheckArgs),
    /// Write the planted benchmark as TSV files.
    GenSynthetic(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable. Takes precedence over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// head<TAB>relation<TAB>tail
    #[arg(long)]
    triples: PathBuf,
    /// entity<TAB>type
    #[arg(long)]
    types: Option<PathBuf>,
    /// relation<TAB>{positive|interaction|negative}
    #[arg(long)]
    smoothing: Option<PathBuf>,
    /// head_type<TAB>r1;r2<TAB>tail_type
    #[arg(long)]
    metapaths: Option<PathBuf>,
}

impl GraphArgs {
    fn paths(&self, links: Option<&Path>) -> DataPaths {
        DataPaths {
            triples: self.triples.clone(),
            types: self.types.clone(),
            smoothing: self.smoothing.clone(),
            metapaths: self.metapaths.clone(),
            links: links.map(Path::to_path_buf),
        }
    }
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// head<TAB>tail<TAB>label
    #[arg(long)]
    links: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    links: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Also write eval.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    links: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75")]
    ratios: Vec<f64>,
    #[arg(long, value_parser = parse_kind, default_value = "structural")]
    kind: NoiseKind,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, default_value = "full,wo_srl,wo_ssp,wo_mi")]
    variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Sweep cells run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Entity names `head,tail`.
    #[arg(long)]
    pair: String,
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Written to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    communities: Option<usize>,
    #[arg(long)]
    drugs: Option<usize>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    genes: Option<usize>,
    /// Chance that a planted edge crosses communities.
    #[arg(long)]
    cross_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_kind(s: &str) -> Result<NoiseKind, String> {
    NoiseKind::parse(s).ok_or_else(|| format!("expected structural or semantic, found {s:?}"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("expected one of full, wo_srl, wo_ssp, wo_mi, found {s:?}"))
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<RunConfigError> for Failure {
    fn from(e: RunConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Parse `argv` (program name first) and run the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::NoiseEval(a) => cmd_noise(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::GenSynthetic(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn config(args: &ConfigArgs) -> Result<TrainConfig, Failure> {
    Ok(build_config(args.config.as_deref(), &args.set)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load(paths: &DataPaths, cfg: &TrainConfig, classes: Option<&[String]>) -> anyhow::Result<Dataset> {
    let mut data = load_dataset(paths, cfg, classes)?;
    let added = data.complete_negatives(cfg)?;
    if added > 0 {
        eprintln!("sampled {added} negative links");
    }
    data.validate()?;
    Ok(data)
}

fn cmd_pretrain(a: PretrainArgs) -> Outcome {
    let mut cfg = config(&a.cfg)?;
    let mut flags = Vec::new();
    if let Some(d) = a.dim {
        flags.push(format!("pretrain.dim={d}"));
    }
    if let Some(e) = a.epochs {
        flags.push(format!("pretrain.epochs={e}"));
    }
    apply_flags(&mut cfg, &flags)?;
    let kg = load_graph(&DataPaths { triples: a.triples, ..DataPaths::default() }).map_err(anyhow::Error::from)?;
    let start = Instant::now();
    let (table, history) = pretrain(&kg, &cfg.pretrain).map_err(anyhow::Error::from)?;
    eprintln!("pretrained {} entities in {:.1?}", kg.num_entities(), start.elapsed());
    let meta = json!({
        "kind": "embeddings",
        "entities": kg.entities().names(),
        "relations": kg.relations().names(),
        "config": cfg.entries(),
        "epoch_loss": history.epoch_loss,
    });
    Checkpoint::from_table(&table, meta).save(&a.out).map_err(anyhow::Error::from)?;
    if let Some(last) = history.epoch_loss.last() {
        println!("final loss {last}");
    }
    Ok(())
}

fn model_meta(cfg: &TrainConfig, data: &Dataset, fold: usize) -> serde_json::Value {
    json!({
        "kind": "model",
        "fold": fold,
        "variant": Variant::describe(cfg.model.ablate),
        "task": data.task.name(),
        "num_classes": data.num_classes,
        "class_names": data.class_names,
        "config": cfg.entries(),
    })
}

fn cmd_train(a: TrainArgs) -> Outcome {
    let cfg = config(&a.cfg)?;
    let data = load(&a.graph.paths(Some(&a.links)), &cfg, None)?;
    let start = Instant::now();
    let (views, history) = prepare_views(&data, &data.kg, &cfg).map_err(anyhow::Error::from)?;
    let folds = splits(&data, &cfg).map_err(anyhow::Error::from)?;
    let outcomes = run_jobs(&folds, a.jobs, |s| train_fold(&views, s, data.task, data.num_classes, &cfg));
    let mut reports = Vec::new();
    for (i, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => {
                let ck = Checkpoint::from_params(&o.params, cfg.precision, model_meta(&cfg, &data, i));
                let mut buf = Vec::new();
                ck.write_to(&mut buf).map_err(anyhow::Error::from)?;
                write_file(&a.out_dir.join(format!("fold{i}.ckpt")), &buf)?;
                reports.push(o.report);
            }
            Err(HarnessError::NonFinite { fold, epoch, batch, loss, last_good }) => {
                let path = a.out_dir.join(format!("fold{fold}.last_good.ckpt"));
                let mut buf = Vec::new();
                Checkpoint::from_params(&last_good, cfg.precision, model_meta(&cfg, &data, fold))
                    .write_to(&mut buf)
                    .map_err(anyhow::Error::from)?;
                write_file(&path, &buf)?;
                return Err(anyhow!(
                    "non-finite loss {loss} in fold {fold}, epoch {epoch}, batch {batch}; last good parameters in {}",
                    path.display()
                )
                .into());
            }
            Err(e) => return Err(anyhow::Error::from(e).into()),
        }
    }
    eprintln!("trained {} folds in {:.1?}", reports.len(), start.elapsed());
    let report = CvReport::assemble(&cfg, history, reports);
    let mut records: Vec<serde_json::Value> = report
        .folds
        .iter()
        .map(|f| json!({"record": "fold", "variant": report.variant, "seed": cfg.seed, "config": cfg.entries(), "fold": f}))
        .collect();
    records.push(json!({
        "record": "summary",
        "variant": report.variant,
        "seed": cfg.seed,
        "config": report.config,
        "pretrain_loss": report.pretrain_loss,
        "mean": report.mean,
        "std": report.std,
    }));
    write_file(&a.out_dir.join("report.jsonl"), &json_lines(&records).map_err(anyhow::Error::from)?)?;
    write_file(&a.out_dir.join("summary.csv"), &cv_csv(&report).map_err(anyhow::Error::from)?)?;
    write_file(&a.out_dir.join("config.txt"), render(&cfg).as_bytes())?;
    println!(
        "{} auc_roc {:.4} ± {:.4} auc_pr {:.4} ± {:.4} micro_f1 {:.4} micro_recall {:.4}",
        report.variant,
        report.mean.auc_roc,
        report.std.auc_roc,
        report.mean.auc_pr,
        report.std.auc_pr,
        report.mean.micro_f1,
        report.mean.micro_recall
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    let ck = Checkpoint::load(&a.checkpoint).map_err(anyhow::Error::from)?;
    if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("model") {
        return Err(anyhow!("{} is not a model checkpoint", a.checkpoint.display()).into());
    }
    // the checkpoint's own config, then the usual file and flag overrides
    let mut cfg = TrainConfig::default();
    let saved: Vec<(String, String)> =
        serde_json::from_value(ck.meta["config"].clone()).context("checkpoint config").map_err(Failure::Runtime)?;
    for (k, v) in &saved {
        cfg.set(k, v).with_context(|| format!("checkpoint config key {k}")).map_err(Failure::Runtime)?;
    }
    if let Some(file) = &a.cfg.config {
        apply_file(&mut cfg, file)?;
    }
    apply_flags(&mut cfg, &a.cfg.set)?;
    let classes: Vec<String> = serde_json::from_value(ck.meta["class_names"].clone()).unwrap_or_default();
    let data = load(&a.graph.paths(Some(&a.links)), &cfg, Some(&classes))?;
    let params = ck.to_params().map_err(anyhow::Error::from)?;
    let entity = ck.get("embed.entity").map_err(anyhow::Error::from)?.value.clone();
    let smoothed = smooth_relations(&data.kg, &data.smoothing).map_err(anyhow::Error::from)?;
    let relation = match ck.get("embed.relation") {
        Ok(t) => t.value.clone(),
        Err(_) => Tensor::zeros(smoothed.num_relations(), entity.shape().get(1).copied().unwrap_or(0)),
    };
    let views = extract_views(&data, &data.kg, Features { entity, relation }, &cfg).map_err(anyhow::Error::from)?;
    let metrics = evaluate_params(&params, &views, &data.examples, data.task, data.num_classes, &cfg)
        .map_err(anyhow::Error::from)?;
    let out = json!({
        "checkpoint": a.checkpoint.display().to_string(),
        "examples": data.examples.len(),
        "config": cfg.entries(),
        "metrics": metrics,
    });
    let text = serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?;
    println!("{text}");
    if let Some(dir) = &a.out_dir {
        write_file(&dir.join("eval.json"), text.as_bytes())?;
    }
    Ok(())
}

fn cmd_noise(a: NoiseArgs) -> Outcome {
    let cfg = config(&a.cfg)?;
    if a.variants.is_empty() || a.ratios.is_empty() || a.seeds.is_empty() {
        return Err(Failure::Usage("--ratios, --variants and --seeds must be non-empty".into()));
    }
    if let Some(r) = a.ratios.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(Failure::Usage(format!("noise ratio {r} must be a nonnegative number")));
    }
    let data = load(&a.graph.paths(Some(&a.links)), &cfg, None)?;
    let cells = sweep_cells(a.kind, &a.ratios, &a.seeds).map_err(anyhow::Error::from)?;
    let start = Instant::now();
    let results = run_jobs(&cells, a.jobs, |c| run_cell(&data, c, &a.variants, &cfg));
    let mut flat = Vec::new();
    for r in results {
        flat.extend(r.map_err(anyhow::Error::from)?);
    }
    eprintln!("ran {} cells in {:.1?}", cells.len(), start.elapsed());
    let rows = assemble_sweep(&a.variants, &flat);
    let mut records: Vec<serde_json::Value> = flat
        .iter()
        .map(|c| json!({"record": "cell", "config": cfg.entries(), "cell": c}))
        .collect();
    records.push(json!({"record": "summary", "config": cfg.entries(), "seeds": a.seeds, "rows": rows}));
    write_file(&a.out_dir.join("noise_report.jsonl"), &json_lines(&records).map_err(anyhow::Error::from)?)?;
    let csv = sweep_csv(&rows).map_err(anyhow::Error::from)?;
    write_file(&a.out_dir.join("noise_summary.csv"), &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Outcome {
    let mut cfg = config(&a.cfg)?;
    if let Some(k) = a.k {
        apply_flags(&mut cfg, &[format!("k={k}")])?;
    }
    let Some((h, t)) = a.pair.split_once(',') else {
        return Err(Failure::Usage(format!("--pair expects head,tail, found {:?}", a.pair)));
    };
    let mut data = load_dataset(&a.graph.paths(None), &cfg, None).map_err(anyhow::Error::from)?;
    let entity = |name: &str| data.kg.entity_id(name.trim()).ok_or_else(|| anyhow!("unknown entity {name:?}"));
    let (head, tail) = (entity(h)?, entity(t)?);
    data.examples = vec![LinkExample::new(head, tail, Label::Binary(true))];
    let (smoothed, pairs) = extract_subgraphs(&data, &data.kg, &cfg).map_err(anyhow::Error::from)?;
    let metapaths = resolve_metapaths(&data, &smoothed, cfg.metapath_max_len).map_err(anyhow::Error::from)?;
    let paths = &metapaths[&(smoothed.entity_type(head), smoothed.entity_type(tail))];
    let pair = &pairs[&(head, tail)];
    let (local, sem) = (&pair.local, &pair.semantic);
    let names = |kg: &kgdenoise_core::kg::KnowledgeGraph, ids: &[kgdenoise_core::kg::EntityId]| -> Vec<String> {
        ids.iter().map(|&e| kg.entity_name(e).to_string()).collect()
    };
    let out = json!({
        "head": data.kg.entity_name(head),
        "tail": data.kg.entity_name(tail),
        "k": cfg.hops,
        "v_max": cfg.v_max,
        "local": {
            "nodes": names(&data.kg, &local.nodes),
            "observed_edges": local.observed_edges,
            "candidate_pairs": local.candidate_pairs.len(),
        },
        "semantic": {
            "nodes": names(&smoothed, &sem.nodes),
            "node_types": sem.node_types.iter().map(|t| t.map(|t| smoothed.type_name(t).to_string())).collect::<Vec<_>>(),
            "edges": sem.edges.iter().map(|&(i, r, j)| json!([i, smoothed.relation_name(r), j])).collect::<Vec<_>>(),
            "metapaths": paths.iter().map(|m| m.describe(&smoothed)).collect::<Vec<_>>(),
            "matched": sem.matched.iter().map(|&i| paths[i].describe(&smoothed)).collect::<Vec<_>>(),
        },
    });
    let text = serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?;
    match &a.out {
        Some(p) => write_file(p, text.as_bytes())?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Outcome {
    let start = Instant::now();
    let r = gradient_check(a.seed).map_err(anyhow::Error::from)?;
    println!(
        "max relative error {:e} at {}[{}] (analytic {:e}, numeric {:e}); {} entries, step {:e}",
        r.max_rel_error, r.worst_param, r.worst_index, r.analytic, r.numeric, r.checked, FD_STEP
    );
    eprintln!("gradcheck took {:.1?}", start.elapsed());
    if r.max_rel_error >= 1e-4 {
        return Err(anyhow!("relative error {:e} exceeds 1e-4", r.max_rel_error).into());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Outcome {
    let mut sc = SyntheticConfig { seed: a.seed, ..SyntheticConfig::default() };
    if let Some(v) = a.communities {
        sc.communities = v;
    }
    if let Some(v) = a.drugs {
        sc.drugs = v;
    }
    if let Some(v) = a.targets {
        sc.targets = v;
    }
    if let Some(v) = a.genes {
        sc.genes = v;
    }
    if let Some(v) = a.cross_rate {
        if !(0.0..=1.0).contains(&v) {
            return Err(Failure::Usage(format!("--cross-rate {v} outside [0, 1]")));
        }
        sc.cross_rate = v;
    }
    let b = generate(&sc).map_err(anyhow::Error::from)?;
    let dir = &a.out_dir;
    write_file(&dir.join("triples.tsv"), tsv::format_triples(&b.kg).as_bytes())?;
    write_file(&dir.join("types.tsv"), tsv::format_types(&b.kg).as_bytes())?;
    write_file(&dir.join("smoothing.tsv"), tsv::format_smoothing(&b.smoothing).as_bytes())?;
    write_file(&dir.join("links.tsv"), tsv::format_links(&b.kg, &b.examples, &[]).as_bytes())?;
    println!(
        "{} entities, {} triples, {} links written to {}",
        b.kg.num_entities(),
        b.kg.num_triples(),
        b.examples.len(),
        dir.display()
    );
    Ok(())
}
