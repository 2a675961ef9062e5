//! Training, evaluation, cross-validation and the noise-robustness sweep.

mod config;
pub mod metrics;
mod sweep;
pub mod synthetic;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use config::{ConfigError, TrainConfig};
pub use metrics::{auc_pr, auc_roc, mean_std, micro_f1, micro_recall, MetricError, MicroCounts};
pub use sweep::{assemble_sweep, run_cell, sweep_cells, CellResult, NoiseKind, SweepCell, SweepRow};

use crate::kg::{
    kfold_split, sample_negatives, smooth_relations, DatasetSplit, EntityId, KgError, KnowledgeGraph, Label,
    LinkExample, SmoothingMap, TaskMode,
};
use crate::model::{Ablation, Features, Mode, Model, ModelError};
use crate::pretrain::{pretrain, PretrainError};
use crate::rng;
use crate::subgraph::{
    default_metapaths, extract_local, extract_semantic, LinkQuery, Metapath, SubgraphError, SubgraphPair,
};
use crate::tensor::{grad_check, FD_STEP, Adam, AdamConfig, GradCheckReport, ParamStore, Precision, Real, Tape, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
    #[error(transparent)]
    Subgraph(#[from] SubgraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite loss {loss} in fold {fold}, epoch {epoch}, batch {batch}")]
    NonFinite { fold: usize, epoch: usize, batch: usize, loss: f64, last_good: Box<ParamStore<f64>> },
    #[error("{0}")]
    Invalid(String),
}

/// Ablation variants compared by the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WoSrl,
    WoSsp,
    WoMi,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::WoSrl, Variant::WoSsp, Variant::WoMi];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoSrl => "wo_srl",
            Variant::WoSsp => "wo_ssp",
            Variant::WoMi => "wo_mi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn ablation(self) -> Ablation {
        match self {
            Variant::Full => Ablation::default(),
            Variant::WoSrl => Ablation { srl: true, ..Ablation::default() },
            Variant::WoSsp => Ablation { ssp: true, ..Ablation::default() },
            Variant::WoMi => Ablation { mi: true, ..Ablation::default() },
        }
    }

    /// Name of an arbitrary ablation setting: a variant name when it is one.
    pub fn describe(a: Ablation) -> String {
        match Variant::ALL.into_iter().find(|v| v.ablation() == a) {
            Some(v) => v.name().to_string(),
            None => {
                let mut parts = vec!["wo"];
                if a.srl {
                    parts.push("srl");
                }
                if a.ssp {
                    parts.push("ssp");
                }
                if a.mi {
                    parts.push("mi");
                }
                parts.join("_")
            }
        }
    }
}

/// A labelled link task over a knowledge graph.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub kg: KnowledgeGraph,
    pub smoothing: SmoothingMap,
    pub examples: Vec<LinkExample>,
    pub task: TaskMode,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    /// Explicit metapaths as `(head_type, steps, tail_type)` over smoothed
    /// relation names; `None` enumerates them from the graph schema.
    pub metapaths: Option<Vec<(String, String, String)>>,
}

impl Dataset {
    /// Append sampled negatives when a binary or multi-label task lists
    /// positives only.
    pub fn complete_negatives(&mut self, cfg: &TrainConfig) -> Result<usize, HarnessError> {
        if self.task == TaskMode::MultiClass || self.examples.iter().any(|e| !e.label.is_positive()) {
            return Ok(0);
        }
        let negs = sample_negatives(&self.examples, &self.kg, cfg.negatives, cfg.seed)?;
        let n = negs.len();
        self.examples.extend(negs);
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.examples.is_empty() {
            return Err(HarnessError::Invalid("no link examples".into()));
        }
        for ex in &self.examples {
            ex.label.check(self.task, self.num_classes)?;
            for e in [ex.head, ex.tail] {
                if !self.kg.contains_entity(e) {
                    return Err(KgError::UnknownEntity(format!("#{}", e.0)).into());
                }
            }
        }
        Ok(())
    }
}

/// Subgraphs keyed by `(head, tail)`.
pub type PairMap = BTreeMap<(EntityId, EntityId), SubgraphPair>;

/// Everything the model reads for one state of the graph.
#[derive(Clone, Debug)]
pub struct Views {
    pub smoothed: KnowledgeGraph,
    pub features: Features,
    pub pairs: PairMap,
}

impl Views {
    pub fn pair(&self, ex: &LinkExample) -> Result<&SubgraphPair, HarnessError> {
        self.pairs
            .get(&(ex.head, ex.tail))
            .ok_or_else(|| HarnessError::Invalid(format!("no subgraph for pair ({}, {})", ex.head.0, ex.tail.0)))
    }
}

/// Pretrain rotation embeddings on `kg` and derive model features.
pub fn pretrain_features(data: &Dataset, kg: &KnowledgeGraph, cfg: &TrainConfig) -> Result<(Features, Vec<f64>), HarnessError> {
    let (table, history) = pretrain(kg, &cfg.pretrain)?;
    let smoothed = smooth_relations(kg, &data.smoothing)?;
    let features = Features::from_table(&table, kg, &smoothed, &data.smoothing)?;
    Ok((features, history.epoch_loss))
}

/// Metapaths keyed by the `(head type, tail type)` they connect.
pub type MetapathTable = BTreeMap<(Option<crate::kg::TypeId>, Option<crate::kg::TypeId>), Vec<Metapath>>;

/// Metapaths per `(head type, tail type)` of the example pairs: the explicit
/// list when the dataset has one, otherwise every schema path up to `max_len`.
pub fn resolve_metapaths(
    data: &Dataset,
    smoothed: &KnowledgeGraph,
    max_len: usize,
) -> Result<MetapathTable, HarnessError> {
    let mut out = BTreeMap::new();
    if let Some(specs) = &data.metapaths {
        let mut all = Vec::new();
        for (h, steps, t) in specs {
            all.push(Metapath::parse(smoothed, h, steps, t)?);
        }
        // extract_semantic skips metapaths whose endpoint types do not match
        for ex in &data.examples {
            let key = (smoothed.entity_type(ex.head), smoothed.entity_type(ex.tail));
            out.entry(key).or_insert_with(|| all.clone());
        }
        return Ok(out);
    }
    for ex in &data.examples {
        let key = (smoothed.entity_type(ex.head), smoothed.entity_type(ex.tail));
        if out.contains_key(&key) {
            continue;
        }
        let paths = match key {
            (Some(h), Some(t)) => {
                default_metapaths(smoothed, smoothed.type_name(h), smoothed.type_name(t), max_len)?
            }
            _ => Vec::new(),
        };
        out.insert(key, paths);
    }
    Ok(out)
}

/// Smooth `kg` and extract both subgraphs around every example pair.
pub fn extract_views(data: &Dataset, kg: &KnowledgeGraph, features: Features, cfg: &TrainConfig) -> Result<Views, HarnessError> {
    let (smoothed, pairs) = extract_subgraphs(data, kg, cfg)?;
    Ok(Views { smoothed, features, pairs })
}

/// The smoothed graph and both subgraphs of every distinct example pair.
pub fn extract_subgraphs(data: &Dataset, kg: &KnowledgeGraph, cfg: &TrainConfig) -> Result<(KnowledgeGraph, PairMap), HarnessError> {
    let smoothed = smooth_relations(kg, &data.smoothing)?;
    let (raw_ex, smooth_ex) = match &cfg.exclude_relation {
        Some(name) => {
            let raw = kg.relation_id(name).ok_or_else(|| KgError::UnknownRelation(name.clone()))?;
            let class = data.smoothing.class_of(name).map(|c| c.name().to_string()).unwrap_or_else(|| name.clone());
            (Some(raw), smoothed.relation_id(&class))
        }
        None => (None, None),
    };
    let metapaths = resolve_metapaths(data, &smoothed, cfg.metapath_max_len)?;
    let mut pairs = BTreeMap::new();
    for ex in &data.examples {
        if pairs.contains_key(&(ex.head, ex.tail)) {
            continue;
        }
        let mut q = LinkQuery::new(ex.head, ex.tail);
        q.exclude = raw_ex;
        let local = extract_local(kg, &q, cfg.hops, cfg.v_max, cfg.seed)?;
        let mut sq = LinkQuery::new(ex.head, ex.tail);
        sq.exclude = smooth_ex;
        let key = (smoothed.entity_type(ex.head), smoothed.entity_type(ex.tail));
        let semantic = extract_semantic(&smoothed, &sq, &metapaths[&key])?;
        pairs.insert((ex.head, ex.tail), SubgraphPair { local, semantic });
    }
    Ok((smoothed, pairs))
}

/// Pretraining followed by extraction.
pub fn prepare_views(data: &Dataset, kg: &KnowledgeGraph, cfg: &TrainConfig) -> Result<(Views, Vec<f64>), HarnessError> {
    let (features, history) = pretrain_features(data, kg, cfg)?;
    Ok((extract_views(data, kg, features, cfg)?, history))
}

/// Test-set quality numbers; all lie in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub micro_f1: f64,
    pub micro_recall: f64,
}

impl Metrics {
    fn map(list: &[Metrics], f: impl Fn(&[f64]) -> f64) -> Metrics {
        let col = |g: fn(&Metrics) -> f64| f(&list.iter().map(g).collect::<Vec<_>>());
        Metrics {
            auc_roc: col(|m| m.auc_roc),
            auc_pr: col(|m| m.auc_pr),
            micro_f1: col(|m| m.micro_f1),
            micro_recall: col(|m| m.micro_recall),
        }
    }

    pub fn mean(list: &[Metrics]) -> Metrics {
        Self::map(list, |v| mean_std(v).0)
    }

    /// Population standard deviation per metric.
    pub fn std(list: &[Metrics]) -> Metrics {
        Self::map(list, |v| mean_std(v).1)
    }
}

/// Metrics of predicted probabilities against labels.
///
/// AUC-ROC and AUC-PR score every `(example, class)` entry as one binary
/// instance. Binary predictions threshold at 0.5 and multi-class ones take
/// the arg-max, so micro-F1 and micro-recall both equal accuracy there;
/// multi-label predictions keep every class at or above 0.5.
pub fn metrics_from_predictions(task: TaskMode, probs: &[Vec<f64>], labels: &[&Label]) -> Result<Metrics, HarnessError> {
    if probs.len() != labels.len() {
        return Err(MetricError::Length(probs.len(), labels.len()).into());
    }
    if probs.is_empty() {
        return Err(MetricError::Empty.into());
    }
    let width = probs[0].len();
    let mut scores = Vec::with_capacity(probs.len() * width);
    let mut flags = Vec::with_capacity(probs.len() * width);
    let mut pred_sets = Vec::with_capacity(probs.len());
    let mut true_sets = Vec::with_capacity(probs.len());
    for (p, l) in probs.iter().zip(labels) {
        if p.len() != width {
            return Err(HarnessError::Invalid("ragged prediction rows".into()));
        }
        let target = l.indicator(width);
        scores.extend_from_slice(p);
        flags.extend(target.iter().map(|&t| t > 0.5));
        match task {
            TaskMode::Binary => {
                pred_sets.push(vec![(p[0] >= 0.5) as u32]);
                true_sets.push(vec![(target[0] > 0.5) as u32]);
            }
            TaskMode::MultiClass => {
                let mut best = 0;
                for c in 1..width {
                    if p[c] > p[best] {
                        best = c;
                    }
                }
                pred_sets.push(vec![best as u32]);
                true_sets.push((0..width as u32).filter(|&c| target[c as usize] > 0.5).collect());
            }
            TaskMode::MultiLabel => {
                pred_sets.push((0..width as u32).filter(|&c| p[c as usize] >= 0.5).collect());
                true_sets.push((0..width as u32).filter(|&c| target[c as usize] > 0.5).collect());
            }
        }
    }
    let counts = MicroCounts::from_sets(&pred_sets, &true_sets)?;
    Ok(Metrics {
        auc_roc: auc_roc(&scores, &flags)?,
        auc_pr: auc_pr(&scores, &flags)?,
        micro_f1: counts.f1(),
        micro_recall: counts.recall(),
    })
}

fn predict_all<T: Real>(model: &Model<T>, views: &Views, examples: &[LinkExample], batch: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch.max(1)) {
        let pairs = chunk.iter().map(|e| views.pair(e)).collect::<Result<Vec<_>, _>>()?;
        out.extend(model.predict(&pairs)?);
    }
    Ok(out)
}

/// Eval-mode mean task loss over `examples`.
pub fn mean_task_loss<T: Real>(model: &Model<T>, views: &Views, examples: &[LinkExample], batch: usize) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for chunk in examples.chunks(batch.max(1)) {
        let pairs = chunk.iter().map(|e| views.pair(e)).collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<&Label> = chunk.iter().map(|e| &e.label).collect();
        let mut tape = Tape::new();
        let enc = model.forward(&mut tape, &pairs, Mode::Eval)?;
        let parts = model.loss(&mut tape, &enc, &labels)?;
        total += tape.scalar_value(parts.task).as_f64() * chunk.len() as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

pub fn evaluate_model<T: Real>(model: &Model<T>, views: &Views, examples: &[LinkExample], batch: usize) -> Result<Metrics, HarnessError> {
    let probs = predict_all(model, views, examples, batch)?;
    let labels: Vec<&Label> = examples.iter().map(|e| &e.label).collect();
    metrics_from_predictions(model.task, &probs, &labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation AUC-ROC, or minus the validation loss when the validation
    /// set holds a single class.
    pub valid_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub metrics: Metrics,
    /// Epoch of the selected parameters (0 = initialisation).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub curve: Vec<EpochLog>,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub report: FoldReport,
    /// Selected parameters, widened to 64-bit.
    pub params: ParamStore<f64>,
}

fn model_seed(cfg: &TrainConfig, fold: usize) -> u64 {
    rng::mix(cfg.seed, fold as u64)
}

pub fn build_model<T: Real>(
    features: &Features,
    cfg: &TrainConfig,
    task: TaskMode,
    num_classes: usize,
    seed: u64,
) -> Result<Model<T>, HarnessError> {
    Ok(Model::new(cfg.model.clone(), task, num_classes, features, seed)?)
}

fn selection_score<T: Real>(model: &Model<T>, views: &Views, valid: &[LinkExample], batch: usize) -> Result<f64, HarnessError> {
    match evaluate_model(model, views, valid, batch) {
        Ok(m) => Ok(m.auc_roc),
        Err(HarnessError::Metric(MetricError::SingleClass { .. })) => Ok(-mean_task_loss(model, views, valid, batch)?),
        Err(e) => Err(e),
    }
}

fn train_typed<T: Real>(
    views: &Views,
    split: &DatasetSplit,
    task: TaskMode,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<FoldOutcome, HarnessError> {
    if split.train.is_empty() && cfg.epochs > 0 {
        return Err(HarnessError::Invalid(format!("fold {} has no training examples", split.fold)));
    }
    let seed = model_seed(cfg, split.fold);
    let mut model = build_model::<T>(&views.features, cfg, task, num_classes, seed)?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, model.params());
    let mut order_rng = rng::stream(seed, rng::purpose::BATCH_ORDER);
    let mut noise_rng = rng::stream(seed, rng::purpose::RELAX_NOISE);

    let has_valid = !split.valid.is_empty();
    let mut best_score = if has_valid { Some(selection_score(&model, views, &split.valid, cfg.batch_size)?) } else { None };
    let mut best = model.params().clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut curve = Vec::new();
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let exs: Vec<&LinkExample> = chunk.iter().map(|&i| &split.train[i]).collect();
            let pairs = exs.iter().map(|e| views.pair(e)).collect::<Result<Vec<_>, _>>()?;
            let labels: Vec<&Label> = exs.iter().map(|e| &e.label).collect();
            let eps = model.sample_noise(&pairs, &mut noise_rng);
            let mut tape = Tape::new();
            let enc = model.forward(&mut tape, &pairs, Mode::Train(&eps))?;
            let parts = model.loss(&mut tape, &enc, &labels)?;
            let loss = tape.scalar_value(parts.total).as_f64();
            if !loss.is_finite() {
                return Err(HarnessError::NonFinite {
                    fold: split.fold,
                    epoch,
                    batch: bi,
                    loss,
                    last_good: Box::new(best.cast()),
                });
            }
            tape.backward(parts.total, model.params_mut())?;
            adam.step(model.params_mut());
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / split.train.len() as f64;
        let valid_score = if has_valid { Some(selection_score(&model, views, &split.valid, cfg.batch_size)?) } else { None };
        curve.push(EpochLog { epoch, train_loss, valid_score });
        match (valid_score, best_score) {
            (Some(s), Some(b)) if s > b => {
                best_score = Some(s);
                best = model.params().clone();
                best_epoch = epoch;
                since_best = 0;
            }
            (Some(_), _) => {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    break;
                }
            }
            (None, _) => {
                best = model.params().clone();
                best_epoch = epoch;
            }
        }
    }
    let epochs_run = curve.len();
    model.params_mut().load_values(&best)?;
    let metrics = evaluate_model(&model, views, &split.test, cfg.batch_size)?;
    Ok(FoldOutcome {
        report: FoldReport {
            fold: split.fold,
            metrics,
            best_epoch,
            epochs_run,
            curve,
            train_size: split.train.len(),
            valid_size: split.valid.len(),
            test_size: split.test.len(),
        },
        params: best.cast(),
    })
}

/// Train on one split, select by validation score, report test metrics.
pub fn train_fold(
    views: &Views,
    split: &DatasetSplit,
    task: TaskMode,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<FoldOutcome, HarnessError> {
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(views, split, task, num_classes, cfg),
        Precision::F64 => train_typed::<f64>(views, split, task, num_classes, cfg),
    }
}

/// Metrics of stored parameters on `examples`. Shapes must match `cfg`.
pub fn evaluate_params(
    params: &ParamStore<f64>,
    views: &Views,
    examples: &[LinkExample],
    task: TaskMode,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<Metrics, HarnessError> {
    fn run<T: Real>(
        params: &ParamStore<f64>,
        views: &Views,
        examples: &[LinkExample],
        task: TaskMode,
        num_classes: usize,
        cfg: &TrainConfig,
    ) -> Result<Metrics, HarnessError> {
        let mut model = build_model::<T>(&views.features, cfg, task, num_classes, 0)?;
        model.params_mut().load_values(&params.cast())?;
        evaluate_model(&model, views, examples, cfg.batch_size)
    }
    match cfg.precision {
        Precision::F32 => run::<f32>(params, views, examples, task, num_classes, cfg),
        Precision::F64 => run::<f64>(params, views, examples, task, num_classes, cfg),
    }
}

/// Cross-validation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: String,
    pub config: Vec<(String, String)>,
    pub pretrain_loss: Vec<f64>,
    pub folds: Vec<FoldReport>,
    pub mean: Metrics,
    pub std: Metrics,
}

impl CvReport {
    pub fn assemble(cfg: &TrainConfig, pretrain_loss: Vec<f64>, mut folds: Vec<FoldReport>) -> CvReport {
        folds.sort_by_key(|f| f.fold);
        let ms: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
        CvReport {
            variant: Variant::describe(cfg.model.ablate),
            config: cfg.entries(),
            pretrain_loss,
            mean: Metrics::mean(&ms),
            std: Metrics::std(&ms),
            folds,
        }
    }
}

pub fn splits(data: &Dataset, cfg: &TrainConfig) -> Result<Vec<DatasetSplit>, HarnessError> {
    Ok(kfold_split(&data.examples, cfg.folds, cfg.seed, cfg.stratify)?)
}

/// Sequential k-fold run. Returns the report and each fold's parameters.
pub fn cross_validate(data: &Dataset, cfg: &TrainConfig) -> Result<(CvReport, Vec<ParamStore<f64>>), HarnessError> {
    data.validate()?;
    let (views, history) = prepare_views(data, &data.kg, cfg)?;
    let mut reports = Vec::new();
    let mut params = Vec::new();
    for split in splits(data, cfg)? {
        let out = train_fold(&views, &split, data.task, data.num_classes, cfg)?;
        reports.push(out.report);
        params.push(out.params);
    }
    Ok((CvReport::assemble(cfg, history, reports), params))
}

/// Finite-difference check of the full training loss on a small planted
/// graph: two links, fixed relaxation noise, 64-bit.
pub fn gradient_check(seed: u64) -> Result<GradCheckReport, HarnessError> {
    let bench = synthetic::generate(&synthetic::SyntheticConfig {
        communities: 2,
        drugs: 4,
        targets: 2,
        genes: 6,
        seed,
        ..Default::default()
    })?;
    let data = Dataset {
        kg: bench.kg.clone(),
        smoothing: bench.smoothing,
        num_classes: 1,
        class_names: Vec::new(),
        task: bench.task,
        metapaths: None,
        examples: vec![bench.examples[0].clone(), bench.examples[bench.examples.len() - 1].clone()],
    };
    let mut cfg = TrainConfig { seed, precision: Precision::F64, ..TrainConfig::default() };
    cfg.pretrain.dim = 4;
    cfg.pretrain.epochs = 5;
    cfg.pretrain.seed = seed;
    cfg.model.hidden_dim = 8;
    let (views, _) = prepare_views(&data, &data.kg, &cfg)?;
    let mut model = build_model::<f64>(&views.features, &cfg, data.task, 1, seed)?;
    // zero biases would put isolated nodes exactly on relu kinks, where the
    // one-sided derivative and the central difference disagree
    let mut rng = rng::stream(seed, rng::purpose::MODEL_INIT + 100);
    for p in model.params_mut().iter_mut() {
        if p.name.ends_with(".bias") {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    let pairs = data.examples.iter().map(|e| views.pair(e)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<&Label> = data.examples.iter().map(|e| &e.label).collect();
    let eps = model.sample_noise(&pairs, &mut rng::stream(seed, rng::purpose::RELAX_NOISE));
    let mut store = model.params().clone();
    let mut work = model.clone();
    grad_check(&mut store, FD_STEP, |s: &ParamStore<f64>, tape: &mut Tape<f64>| -> Result<_, HarnessError> {
        work.params_mut().clone_from(s);
        let enc = work.forward(tape, &pairs, Mode::Train(&eps))?;
        Ok(work.loss(tape, &enc, &labels)?.total)
    })
}
