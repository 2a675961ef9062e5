//! The link classifier: a denoised local view, a relational semantic view,
//! a contrastive term tying the two, and a linear head.

pub mod ops;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it when std is linked
use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use ops::{Activation, EstimatorKind};

use crate::kg::{KnowledgeGraph, Label, SmoothingMap, TaskMode};
use crate::pretrain::EmbeddingTable;
use crate::rng::{self, Rng};
use crate::subgraph::SubgraphPair;
use crate::tensor::{ParamId, ParamStore, Real, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("edge uses unknown relation id {0}")]
    UnknownRelation(u32),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Label(String),
}

/// Components switched off for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Use the observed local edges with unit weight instead of learned reliability.
    pub srl: bool,
    /// Drop the semantic branch (and with it the contrastive term).
    pub ssp: bool,
    /// Skip the contrastive term.
    pub mi: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub estimator: EstimatorKind,
    pub temperature: f64,
    pub gcn_layers: usize,
    pub rgnn_layers: usize,
    pub self_term: bool,
    pub tau: f64,
    pub lambda: f64,
    pub ablate: Ablation,
    pub fine_tune: bool,
    pub projection_activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            estimator: EstimatorKind::Attention,
            temperature: 1.0,
            gcn_layers: 2,
            rgnn_layers: 2,
            self_term: true,
            tau: 0.5,
            lambda: 0.1,
            ablate: Ablation::default(),
            fine_tune: false,
            projection_activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("srl.temperature must be positive, got {}", self.temperature));
        }
        if !(self.tau > 0.0) {
            return bad(format!("mi.tau must be positive, got {}", self.tau));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("mi.lambda must be non-negative, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn uses_semantic(&self) -> bool {
        !self.ablate.ssp
    }

    pub fn uses_mi(&self) -> bool {
        !self.ablate.ssp && !self.ablate.mi
    }
}

/// Pretrained inputs: one feature row per entity and per semantic relation.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub entity: Tensor<f64>,
    pub relation: Tensor<f64>,
}

impl Features {
    /// Entity rows straight from the table; each semantic relation gets the
    /// mean unit vector of the raw relations folded into it (zero if none).
    pub fn from_table(
        table: &EmbeddingTable,
        raw: &KnowledgeGraph,
        smoothed: &KnowledgeGraph,
        map: &SmoothingMap,
    ) -> Result<Features, ModelError> {
        let w = 2 * table.dim;
        let mut sums = vec![vec![0.0; w]; smoothed.num_relations()];
        let mut counts = vec![0usize; smoothed.num_relations()];
        for (i, name) in raw.relations().names().iter().enumerate() {
            let target = match map.class_of(name) {
                Some(c) => smoothed.relation_id(c.name()),
                None => smoothed.relation_id(name),
            };
            let Some(target) = target else { continue };
            let unit = table
                .relation_unit(crate::kg::RelationId(i as u32))
                .map_err(|e| ModelError::Config(format!("{e}")))?;
            for (s, u) in sums[target.index()].iter_mut().zip(unit) {
                *s += u;
            }
            counts[target.index()] += 1;
        }
        let rows: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| if c == 0 { s } else { s.into_iter().map(|v| v / c as f64).collect() })
            .collect();
        let relation = if rows.is_empty() { Tensor::zeros(0, w) } else { Tensor::from_rows(&rows)? };
        Ok(Features { entity: table.entity_tensor(), relation })
    }
}

#[derive(Clone, Debug)]
struct RgnnIds {
    relation: Vec<ParamId>,
    gate: ParamId,
    self_term: Option<ParamId>,
    relation_update: ParamId,
}

#[derive(Clone, Debug)]
struct Ids {
    entity: ParamId,
    relation: Option<ParamId>,
    projection: Option<[(ParamId, ParamId); 2]>,
    estimator: Option<ParamId>,
    gcn: Vec<ParamId>,
    sub_readout: (ParamId, ParamId),
    rgnn: Vec<RgnnIds>,
    sem_readout: Option<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

/// Forward-pass randomness.
#[derive(Clone, Copy, Debug)]
pub enum Mode<'a> {
    /// Deterministic: edge weight equals `π`.
    Eval,
    /// Relaxed Bernoulli weights with one `ε` per candidate pair per example.
    Train(&'a [Vec<f64>]),
}

/// Per-batch forward results.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// `[B, d_h]`.
    pub h_sub: Var,
    /// `[B, d_h]`, absent when the semantic branch is ablated.
    pub h_sem: Option<Var>,
    /// `[B, width]` classifier logits.
    pub logits: Var,
    /// Reliability per candidate pair, per example (empty under `ablate.srl`).
    pub pi: Vec<Vec<f64>>,
    /// Weights actually used for each candidate pair (0 when dropped).
    pub weights: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub task: Var,
    pub mi: Option<Var>,
    pub total: Var,
}

/// Trainable network plus its configuration.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub task: TaskMode,
    pub num_classes: usize,
    params: ParamStore<T>,
    ids: Ids,
    input_dim: usize,
}

struct Init {
    rng: Rng,
}

impl Init {
    fn glorot<T: Real>(&mut self, rows: usize, cols: usize) -> Tensor<T> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::from_f64(self.rng.gen_range(-a..a))).collect();
        Tensor::new(vec![rows, cols], data).expect("shape matches data")
    }
}

impl<T: Real> Model<T> {
    pub fn new(
        config: ModelConfig,
        task: TaskMode,
        num_classes: usize,
        features: &Features,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let out = task.output_width(num_classes);
        if out == 0 || (task == TaskMode::MultiClass && num_classes < 2) {
            return Err(ModelError::Config(format!("{} task needs more classes, got {}", task.name(), num_classes)));
        }
        let (_, input_dim) = features.entity.dims("model")?;
        let d = config.hidden_dim;
        let mut init = Init { rng: rng::stream(seed, rng::purpose::MODEL_INIT) };
        let mut ps = ParamStore::<T>::new();
        let add = |ps: &mut ParamStore<T>, name: &str, t: Tensor<T>| ps.add(name, t);

        let entity = if config.fine_tune {
            ps.add("embed.entity", features.entity.cast())?
        } else {
            ps.add_frozen("embed.entity", features.entity.cast())?
        };

        let srl_on = !config.ablate.srl;
        let projection = if srl_on && config.estimator.uses_projection() {
            let w0 = add(&mut ps, "model.srl.mlp.0.weight", init.glorot(input_dim, d))?;
            let b0 = add(&mut ps, "model.srl.mlp.0.bias", Tensor::zeros(1, d))?;
            let w1 = add(&mut ps, "model.srl.mlp.1.weight", init.glorot(d, d))?;
            let b1 = add(&mut ps, "model.srl.mlp.1.bias", Tensor::zeros(1, d))?;
            Some([(w0, b0), (w1, b1)])
        } else {
            None
        };
        let estimator = match (srl_on, config.estimator) {
            (true, EstimatorKind::Attention) => Some(add(&mut ps, "model.srl.attention", init.glorot(2 * d, 1))?),
            (true, EstimatorKind::WeightedCosine) => {
                Some(add(&mut ps, "model.srl.cosine_weight", Tensor::full(1, d, T::one()))?)
            }
            _ => None,
        };

        let mut gcn = Vec::new();
        let mut width = input_dim;
        for l in 0..config.gcn_layers {
            gcn.push(add(&mut ps, &format!("model.gcn.{l}.weight"), init.glorot(width, d))?);
            width = d;
        }
        let sub_readout = (
            add(&mut ps, "model.sub.readout.weight", init.glorot(width, d))?,
            add(&mut ps, "model.sub.readout.bias", Tensor::zeros(1, d))?,
        );

        let mut relation = None;
        let mut rgnn = Vec::new();
        let mut sem_readout = None;
        if config.uses_semantic() {
            let (num_rel, rel_width) = features.relation.dims("model")?;
            if rel_width != input_dim {
                return Err(ModelError::Config(format!(
                    "relation features have width {rel_width}, entity features {input_dim}"
                )));
            }
            relation = Some(if config.fine_tune {
                ps.add("embed.relation", features.relation.cast())?
            } else {
                ps.add_frozen("embed.relation", features.relation.cast())?
            });
            let mut width = input_dim;
            for l in 0..config.rgnn_layers {
                let rel = (0..num_rel)
                    .map(|r| add(&mut ps, &format!("model.rgnn.{l}.relation.{r}.weight"), init.glorot(width, d)))
                    .collect::<Result<Vec<_>, _>>()?;
                let gate = add(&mut ps, &format!("model.rgnn.{l}.gate.weight"), init.glorot(3 * width, 1))?;
                let self_term = if config.self_term {
                    Some(add(&mut ps, &format!("model.rgnn.{l}.self.weight"), init.glorot(width, d))?)
                } else {
                    None
                };
                let relation_update =
                    add(&mut ps, &format!("model.rgnn.{l}.relation_update.weight"), init.glorot(width, d))?;
                rgnn.push(RgnnIds { relation: rel, gate, self_term, relation_update });
                width = d;
            }
            sem_readout = Some((
                add(&mut ps, "model.sem.readout.weight", init.glorot(width, d))?,
                add(&mut ps, "model.sem.readout.bias", Tensor::zeros(1, d))?,
            ));
        }

        let head_in = if config.uses_semantic() { 2 * d } else { d };
        let head = (
            add(&mut ps, "model.head.weight", init.glorot(head_in, out))?,
            add(&mut ps, "model.head.bias", Tensor::zeros(1, out))?,
        );

        let ids = Ids { entity, relation, projection, estimator, gcn, sub_readout, rgnn, sem_readout, head };
        Ok(Model { config, task, num_classes, params: ps, ids, input_dim })
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_width(&self) -> usize {
        self.task.output_width(self.num_classes)
    }

    /// Rows of the entity features for `nodes`, on the tape.
    fn node_features(&self, tape: &mut Tape<T>, nodes: &[crate::kg::EntityId]) -> Result<Var, ModelError> {
        let rows: Vec<usize> = nodes.iter().map(|n| n.index()).collect();
        let table = self.params.value(self.ids.entity);
        if let Some(&bad) = rows.iter().find(|&&r| r >= table.shape()[0]) {
            return Err(ModelError::Config(format!("entity {bad} has no feature row")));
        }
        if self.config.fine_tune {
            let all = tape.param(&self.params, self.ids.entity);
            Ok(tape.gather(all, &rows)?)
        } else {
            let w = table.shape()[1];
            let mut data = Vec::with_capacity(rows.len() * w);
            for &r in &rows {
                data.extend_from_slice(table.row_slice(r));
            }
            Ok(tape.constant(Tensor::new(vec![rows.len(), w], data)?))
        }
    }

    fn relation_features(&self, tape: &mut Tape<T>) -> Option<Var> {
        let id = self.ids.relation?;
        Some(if self.config.fine_tune {
            tape.param(&self.params, id)
        } else {
            tape.constant(self.params.value(id).clone())
        })
    }

    /// Row-wise two-layer projection `Z = act(X W_0 + b_0) W_1 + b_1`.
    pub fn project_nodes(&self, tape: &mut Tape<T>, x: Var) -> Result<Var, ModelError> {
        let [(w0, b0), (w1, b1)] =
            self.ids.projection.ok_or_else(|| ModelError::Config("model has no projection".into()))?;
        let (w0, b0, w1, b1) = (
            tape.param(&self.params, w0),
            tape.param(&self.params, b0),
            tape.param(&self.params, w1),
            tape.param(&self.params, b1),
        );
        let h = ops::linear(tape, x, w0, Some(b0))?;
        let h = ops::activate(tape, h, self.config.projection_activation)?;
        ops::linear(tape, h, w1, Some(b1))
    }

    /// Structural view of one example: `(h_sub row, π values, used weights)`.
    fn encode_local(
        &self,
        tape: &mut Tape<T>,
        pair: &SubgraphPair,
        eps: Option<&[f64]>,
    ) -> Result<(Var, Vec<f64>, Vec<f64>), ModelError> {
        let local = &pair.local;
        let n = local.nodes.len();
        let x = self.node_features(tape, &local.nodes)?;
        let (a_hat, pi_vals, used) = if self.config.ablate.srl || local.candidate_pairs.is_empty() {
            let ones = tape.constant(Tensor::full(local.observed_edges.len(), 1, T::one()));
            let a = ops::normalized_adjacency(tape, n, &local.observed_edges, Some(ones))?;
            let used = local
                .candidate_pairs
                .iter()
                .map(|p| if local.observed_edges.binary_search(p).is_ok() { 1.0 } else { 0.0 })
                .collect();
            (a, Vec::new(), used)
        } else {
            let z = if self.config.estimator.uses_projection() { Some(self.project_nodes(tape, x)?) } else { None };
            let est = self.ids.estimator.map(|id| tape.param(&self.params, id));
            let pi = ops::reliability(tape, self.config.estimator, z, x, est, &local.candidate_pairs)?;
            let pi_vals = tape.value(pi).to_f64_vec();
            let w = match eps {
                Some(eps) => ops::concrete_relax(tape, pi, eps, self.config.temperature)?,
                None => pi,
            };
            let w_vals = tape.value(w).to_f64_vec();
            let kept = ops::kept_indices(&w_vals);
            let mut used = vec![0.0; w_vals.len()];
            for &k in &kept {
                used[k] = w_vals[k];
            }
            let kept_pairs: Vec<(usize, usize)> = kept.iter().map(|&k| local.candidate_pairs[k]).collect();
            let kw = if kept.is_empty() { None } else { Some(tape.gather(w, &kept)?) };
            (ops::normalized_adjacency(tape, n, &kept_pairs, kw)?, pi_vals, used)
        };
        let layers: Vec<Var> = self.ids.gcn.iter().map(|&id| tape.param(&self.params, id)).collect();
        let readout = (tape.param(&self.params, self.ids.sub_readout.0), tape.param(&self.params, self.ids.sub_readout.1));
        let h = ops::gcn_readout(tape, a_hat, x, &layers, readout)?;
        Ok((h, pi_vals, used))
    }

    fn encode_semantic(&self, tape: &mut Tape<T>, pair: &SubgraphPair) -> Result<Var, ModelError> {
        let sem = &pair.semantic;
        let x = self.node_features(tape, &sem.nodes)?;
        let e = self.relation_features(tape).ok_or_else(|| ModelError::Config("semantic branch disabled".into()))?;
        let layers: Vec<ops::RgnnLayer> = self
            .ids
            .rgnn
            .iter()
            .map(|l| ops::RgnnLayer {
                relation: l.relation.iter().map(|&id| tape.param(&self.params, id)).collect(),
                gate: tape.param(&self.params, l.gate),
                self_term: l.self_term.map(|id| tape.param(&self.params, id)),
                relation_update: tape.param(&self.params, l.relation_update),
            })
            .collect();
        let (rw, rb) = self.ids.sem_readout.expect("semantic readout exists with the branch");
        let readout = (tape.param(&self.params, rw), tape.param(&self.params, rb));
        ops::rgnn_readout(tape, x, e, &sem.edges, &layers, readout)
    }

    /// Encode a batch and produce classifier logits.
    pub fn forward(&self, tape: &mut Tape<T>, batch: &[&SubgraphPair], mode: Mode<'_>) -> Result<Encoded, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        if let Mode::Train(eps) = mode {
            if eps.len() != batch.len() {
                return Err(ModelError::Config(format!("{} noise rows for {} examples", eps.len(), batch.len())));
            }
        }
        let mut subs = Vec::with_capacity(batch.len());
        let mut sems = Vec::with_capacity(batch.len());
        let mut pis = Vec::with_capacity(batch.len());
        let mut weights = Vec::with_capacity(batch.len());
        for (i, pair) in batch.iter().enumerate() {
            let eps = match mode {
                Mode::Eval => None,
                Mode::Train(eps) => Some(eps[i].as_slice()),
            };
            let (h, pi, used) = self.encode_local(tape, pair, eps)?;
            subs.push(h);
            pis.push(pi);
            weights.push(used);
            if self.config.uses_semantic() {
                sems.push(self.encode_semantic(tape, pair)?);
            }
        }
        let h_sub = tape.concat(&subs, 0)?;
        let h_sem = if sems.is_empty() { None } else { Some(tape.concat(&sems, 0)?) };
        let features = match h_sem {
            Some(s) => tape.concat(&[h_sub, s], 1)?,
            None => h_sub,
        };
        let (hw, hb) = (tape.param(&self.params, self.ids.head.0), tape.param(&self.params, self.ids.head.1));
        let logits = ops::linear(tape, features, hw, Some(hb))?;
        Ok(Encoded { h_sub, h_sem, logits, pi: pis, weights })
    }

    /// Task loss (batch mean), contrastive term, and `task + λ·mi`.
    pub fn loss(&self, tape: &mut Tape<T>, enc: &Encoded, labels: &[&Label]) -> Result<LossParts, ModelError> {
        let b = tape.value(enc.logits).shape()[0];
        if labels.len() != b {
            return Err(ModelError::Label(format!("{} labels for {} examples", labels.len(), b)));
        }
        for l in labels {
            l.check(self.task, self.num_classes).map_err(|e| ModelError::Label(format!("{e}")))?;
        }
        let per_example = match self.task {
            TaskMode::MultiClass => {
                let targets: Vec<usize> = labels
                    .iter()
                    .map(|l| match l {
                        Label::Class(c) => *c as usize,
                        _ => unreachable!("checked above"),
                    })
                    .collect();
                tape.softmax_ce(enc.logits, &targets)?
            }
            _ => {
                let targets: Vec<Vec<f64>> = labels.iter().map(|l| l.indicator(self.num_classes)).collect();
                ops::bernoulli_ce(tape, enc.logits, &targets)?
            }
        };
        let task = tape.mean(per_example, None)?;
        let mi = match (self.config.uses_mi(), enc.h_sem) {
            (true, Some(h_sem)) => Some(ops::infonce(tape, enc.h_sub, h_sem, self.config.tau)?),
            _ => None,
        };
        let total = match mi {
            Some(mi) => {
                let weighted = tape.scale(mi, T::from_f64(self.config.lambda))?;
                tape.add(task, weighted)?
            }
            None => task,
        };
        Ok(LossParts { task, mi, total })
    }

    /// Class probabilities for each row of `logits`.
    pub fn probabilities(&self, tape: &Tape<T>, logits: Var) -> Vec<Vec<f64>> {
        let v = tape.value(logits);
        let w = v.shape()[1];
        v.to_f64_vec().chunks(w).map(|row| ops::probabilities(row, self.task == TaskMode::MultiClass)).collect()
    }

    /// Deterministic class probabilities for a batch.
    pub fn predict(&self, batch: &[&SubgraphPair]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut tape = Tape::new();
        let enc = self.forward(&mut tape, batch, Mode::Eval)?;
        Ok(self.probabilities(&tape, enc.logits))
    }

    /// Fresh `ε ~ U(0, 1)` for every candidate pair of every example.
    pub fn sample_noise(&self, batch: &[&SubgraphPair], rng: &mut Rng) -> Vec<Vec<f64>> {
        batch
            .iter()
            .map(|p| (0..p.local.candidate_pairs.len()).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect())
            .collect()
    }
}
