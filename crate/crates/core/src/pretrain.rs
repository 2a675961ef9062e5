//! Rotation embeddings: every relation turns each complex coordinate of the
//! head by a fixed phase, and a triple scores as the distance between the
//! rotated head and the tail.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent methods shadow it when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rng::{self, Rng};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PretrainError {
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("knowledge graph has no triples")]
    EmptyGraph,
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown relation id {0}")]
    UnknownRelation(u32),
    #[error("negative count must be at least 1")]
    NoNegatives,
    #[error("no corruption of ({0}, {1}, {2}) is absent from the graph")]
    CandidatesExhausted(u32, u32, u32),
    #[error("loss became {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Entity vectors as interleaved `(re, im)` pairs and relation phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// `num_entities × 2·dim`.
    pub entity: Vec<f64>,
    /// `num_relations × dim`, each in `(-π, π]`.
    pub phase: Vec<f64>,
}

/// Map an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x % two_pi;
    if y <= -PI {
        y += two_pi;
    } else if y > PI {
        y -= two_pi;
    }
    y
}

impl EmbeddingTable {
    /// Seeded initialization: entity coordinates uniform in `±1/√dim`, phases
    /// uniform in `(-π, π]`.
    pub fn init(num_entities: usize, num_relations: usize, dim: usize, seed: u64) -> Result<Self, PretrainError> {
        if dim == 0 {
            return Err(PretrainError::ZeroDim);
        }
        let mut rng = rng::stream(seed, rng::purpose::PRETRAIN_INIT);
        let s = 1.0 / (dim as f64).sqrt();
        let entity = (0..num_entities * 2 * dim).map(|_| rng.gen_range(-s..s)).collect();
        let phase = (0..num_relations * dim).map(|_| wrap_phase(rng.gen_range(-PI..PI))).collect();
        Ok(EmbeddingTable { dim, entity, phase })
    }

    pub fn num_entities(&self) -> usize {
        self.entity.len() / (2 * self.dim)
    }

    pub fn num_relations(&self) -> usize {
        self.phase.len() / self.dim
    }

    pub fn entity_row(&self, e: EntityId) -> Result<&[f64], PretrainError> {
        let w = 2 * self.dim;
        self.entity.get(e.index() * w..(e.index() + 1) * w).ok_or(PretrainError::UnknownEntity(e.0))
    }

    pub fn phase_row(&self, r: RelationId) -> Result<&[f64], PretrainError> {
        let d = self.dim;
        self.phase.get(r.index() * d..(r.index() + 1) * d).ok_or(PretrainError::UnknownRelation(r.0))
    }

    /// Relation as interleaved unit complex numbers `(cos φ, sin φ)`.
    pub fn relation_unit(&self, r: RelationId) -> Result<Vec<f64>, PretrainError> {
        let ph = self.phase_row(r)?;
        let mut out = Vec::with_capacity(2 * self.dim);
        for &p in ph {
            out.push(p.cos());
            out.push(p.sin());
        }
        Ok(out)
    }

    /// Largest deviation of any relation coordinate's modulus from 1.
    pub fn max_modulus_error(&self) -> f64 {
        self.phase
            .iter()
            .map(|&p| {
                let (c, s) = (p.cos(), p.sin());
                ((c * c + s * s).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.entity.iter().chain(&self.phase).all(|x| x.is_finite())
    }

    pub fn entity_tensor(&self) -> Tensor<f64> {
        Tensor::new(vec![self.num_entities(), 2 * self.dim], self.entity.clone()).expect("consistent table")
    }

    pub fn phase_tensor(&self) -> Tensor<f64> {
        Tensor::new(vec![self.num_relations(), self.dim], self.phase.clone()).expect("consistent table")
    }

    pub fn from_tensors(entity: &Tensor<f64>, phase: &Tensor<f64>) -> Result<Self, PretrainError> {
        let (n, w) = entity.dims("embedding_table")?;
        let (_, d) = phase.dims("embedding_table")?;
        if w != 2 * d || d == 0 {
            return Err(TensorError::Shape {
                op: "embedding_table",
                detail: alloc::format!("entity width {w} is not twice phase width {d}"),
            }
            .into());
        }
        let _ = n;
        Ok(EmbeddingTable { dim: d, entity: entity.data().to_vec(), phase: phase.data().to_vec() })
    }
}

/// `‖x_h ⊙ e_r − x_t‖` over complex coordinates.
pub fn rotate_score(t: &Triple, table: &EmbeddingTable) -> Result<f64, PretrainError> {
    let h = table.entity_row(t.head)?;
    let x = table.entity_row(t.tail)?;
    let ph = table.phase_row(t.relation)?;
    let mut acc = 0.0;
    for k in 0..table.dim {
        let (c, s) = (ph[k].cos(), ph[k].sin());
        let (hr, hi) = (h[2 * k], h[2 * k + 1]);
        let re = hr * c - hi * s - x[2 * k];
        let im = hr * s + hi * c - x[2 * k + 1];
        acc += re * re + im * im;
    }
    Ok(acc.sqrt())
}

/// Accumulate `w · ∂score/∂θ` into the flat gradient buffers and return the score.
fn score_backward(t: &Triple, table: &EmbeddingTable, w: f64, g_ent: &mut [f64], g_ph: &mut [f64]) -> f64 {
    let d = table.dim;
    let (hi_, ti_, ri_) = (t.head.index() * 2 * d, t.tail.index() * 2 * d, t.relation.index() * d);
    let mut res = vec![0.0; 2 * d];
    let mut rot = vec![0.0; 2 * d];
    let mut acc = 0.0;
    for k in 0..d {
        let p = table.phase[ri_ + k];
        let (c, s) = (p.cos(), p.sin());
        let (hr, hi) = (table.entity[hi_ + 2 * k], table.entity[hi_ + 2 * k + 1]);
        rot[2 * k] = hr * c - hi * s;
        rot[2 * k + 1] = hr * s + hi * c;
        res[2 * k] = rot[2 * k] - table.entity[ti_ + 2 * k];
        res[2 * k + 1] = rot[2 * k + 1] - table.entity[ti_ + 2 * k + 1];
        acc += res[2 * k] * res[2 * k] + res[2 * k + 1] * res[2 * k + 1];
    }
    let score = acc.sqrt();
    if score < 1e-12 || w == 0.0 {
        return score;
    }
    let f = w / score;
    for k in 0..d {
        let p = table.phase[ri_ + k];
        let (c, s) = (p.cos(), p.sin());
        let (a, b) = (res[2 * k], res[2 * k + 1]);
        g_ent[hi_ + 2 * k] += f * (a * c + b * s);
        g_ent[hi_ + 2 * k + 1] += f * (-a * s + b * c);
        g_ent[ti_ + 2 * k] -= f * a;
        g_ent[ti_ + 2 * k + 1] -= f * b;
        g_ph[ri_ + k] += f * (-a * rot[2 * k + 1] + b * rot[2 * k]);
    }
    score
}

fn corruption_ok(kg: &KnowledgeGraph, c: &Triple) -> bool {
    (c.head != c.tail || kg.is_reflexive(c.relation)) && !kg.contains(c)
}

fn corrupt_one(kg: &KnowledgeGraph, t: &Triple, rng: &mut Rng) -> Result<Triple, PretrainError> {
    let n = kg.num_entities() as u32;
    let replace_head = rng.gen_bool(0.5);
    let make = |side_head: bool, e: u32| {
        if side_head {
            Triple::new(EntityId(e), t.relation, t.tail)
        } else {
            Triple::new(t.head, t.relation, EntityId(e))
        }
    };
    for _ in 0..32 {
        let c = make(replace_head, rng.gen_range(0..n));
        if corruption_ok(kg, &c) && c != *t {
            return Ok(c);
        }
    }
    // Crowded neighbourhood: enumerate the chosen side, then the other one.
    for side in [replace_head, !replace_head] {
        let valid: Vec<Triple> = (0..n).map(|e| make(side, e)).filter(|c| c != t && corruption_ok(kg, c)).collect();
        if let Some(c) = valid.choose(rng) {
            return Ok(*c);
        }
    }
    Err(PretrainError::CandidatesExhausted(t.head.0, t.relation.0, t.tail.0))
}

/// `n` corruptions of `t`, each replacing the head or the tail (fair coin)
/// with a uniformly drawn entity so that the result is not in `kg`.
pub fn negative_sample(t: &Triple, kg: &KnowledgeGraph, n: usize, seed: u64) -> Result<Vec<Triple>, PretrainError> {
    if n == 0 {
        return Err(PretrainError::NoNegatives);
    }
    for e in [t.head, t.tail] {
        if !kg.contains_entity(e) {
            return Err(PretrainError::UnknownEntity(e.0));
        }
    }
    if t.relation.index() >= kg.num_relations() {
        return Err(PretrainError::UnknownRelation(t.relation.0));
    }
    let mut rng = rng::stream(seed, rng::purpose::CORRUPT);
    (0..n).map(|_| corrupt_one(kg, t, &mut rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub margin: f64,
    pub negatives: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Draw fresh negatives every epoch (otherwise once up front).
    pub resample_negatives: bool,
    /// Self-adversarial temperature; `None` averages negatives uniformly.
    pub adversarial_temperature: Option<f64>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: 32,
            epochs: 100,
            lr: 0.01,
            margin: 1.0,
            negatives: 4,
            batch_size: 256,
            seed: 0,
            resample_negatives: true,
            adversarial_temperature: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainHistory {
    /// Mean margin loss per epoch, measured before each batch's update.
    pub epoch_loss: Vec<f64>,
}

/// Margin ranking loss of one positive against its negatives; adds the
/// gradient scaled by `scale` into the buffers.
fn triple_loss(
    pos: &Triple,
    negs: &[Triple],
    table: &EmbeddingTable,
    cfg: &PretrainConfig,
    scale: f64,
    g_ent: &mut [f64],
    g_ph: &mut [f64],
) -> f64 {
    let s_pos = rotate_score(pos, table).unwrap_or(f64::NAN);
    let s_neg: Vec<f64> = negs.iter().map(|n| rotate_score(n, table).unwrap_or(f64::NAN)).collect();
    let weights: Vec<f64> = match cfg.adversarial_temperature {
        None => vec![1.0 / negs.len() as f64; negs.len()],
        Some(a) => {
            let m = s_neg.iter().fold(f64::INFINITY, |m, &s| m.min(s));
            let ex: Vec<f64> = s_neg.iter().map(|&s| (-a * (s - m)).exp()).collect();
            let z: f64 = ex.iter().sum();
            ex.iter().map(|e| e / z).collect()
        }
    };
    let mut loss = 0.0;
    let mut pos_w = 0.0;
    for (j, n) in negs.iter().enumerate() {
        let l = cfg.margin + s_pos - s_neg[j];
        if l > 0.0 {
            loss += weights[j] * l;
            pos_w += weights[j];
            score_backward(n, table, -scale * weights[j], g_ent, g_ph);
        }
    }
    if pos_w > 0.0 {
        score_backward(pos, table, scale * pos_w, g_ent, g_ph);
    }
    loss
}

/// Train rotation embeddings with Adam on the margin ranking loss.
pub fn pretrain(kg: &KnowledgeGraph, cfg: &PretrainConfig) -> Result<(EmbeddingTable, PretrainHistory), PretrainError> {
    if cfg.dim == 0 {
        return Err(PretrainError::ZeroDim);
    }
    if kg.num_triples() == 0 {
        return Err(PretrainError::EmptyGraph);
    }
    if cfg.negatives == 0 {
        return Err(PretrainError::NoNegatives);
    }
    let mut table = EmbeddingTable::init(kg.num_entities(), kg.num_relations(), cfg.dim, cfg.seed)?;
    let mut history = PretrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((table, history));
    }

    let mut store = ParamStore::<f64>::new();
    let ent_id = store.add("embed.entity", table.entity_tensor())?;
    let ph_id = store.add("embed.relation_phase", table.phase_tensor())?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &store);

    let mut order_rng = rng::stream(cfg.seed, rng::purpose::PRETRAIN_SAMPLE);
    let mut neg_rng = rng::stream(cfg.seed, rng::purpose::CORRUPT);
    let triples = kg.triples();
    let draw = |rng: &mut Rng| -> Result<Vec<Vec<Triple>>, PretrainError> {
        triples
            .iter()
            .map(|t| (0..cfg.negatives).map(|_| corrupt_one(kg, t, rng)).collect())
            .collect()
    };
    let mut negatives = draw(&mut neg_rng)?;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        if epoch > 0 && cfg.resample_negatives {
            negatives = draw(&mut neg_rng)?;
        }
        order.shuffle(&mut order_rng);
        let mut epoch_total = 0.0;
        for (bi, chunk) in order.chunks(batch).enumerate() {
            let mut g_ent = vec![0.0; table.entity.len()];
            let mut g_ph = vec![0.0; table.phase.len()];
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += triple_loss(&triples[i], &negatives[i], &table, cfg, scale, &mut g_ent, &mut g_ph);
            }
            if !batch_loss.is_finite() {
                return Err(PretrainError::NonFinite { epoch, batch: bi, loss: batch_loss });
            }
            epoch_total += batch_loss;
            store.get_mut(ent_id).grad.data_mut().copy_from_slice(&g_ent);
            store.get_mut(ph_id).grad.data_mut().copy_from_slice(&g_ph);
            adam.step(&mut store);
            table.entity.copy_from_slice(store.value(ent_id).data());
            for (dst, &src) in table.phase.iter_mut().zip(store.value(ph_id).data()) {
                *dst = wrap_phase(src);
            }
            store.get_mut(ph_id).value.data_mut().copy_from_slice(&table.phase);
        }
        history.epoch_loss.push(epoch_total / triples.len() as f64);
    }
    Ok((table, history))
}

#[cfg(test)]
mod tests;
