//! Building blocks of the network as free functions over a [`Tape`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::kg::RelationId;
use crate::tensor::{Real, Tape, Tensor, Var};

/// Reliability values are clamped into `[PI_CLAMP, 1 - PI_CLAMP]` before a logit.
pub const PI_CLAMP: f64 = 1e-6;
/// Probabilities are clamped below by this before a log.
pub const LOG_CLAMP: f64 = 1e-12;
/// Relaxed weights at or above this survive refinement.
pub const KEEP_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// `sigmoid(aᵀ[Z_i ⊕ Z_j])`.
    #[default]
    Attention,
    /// `sigmoid(Z_i · Z_j)`.
    Mlp,
    /// `(1 + cos(w ⊙ Z_i, w ⊙ Z_j)) / 2`.
    WeightedCosine,
    /// `(1 + cos(X_i, X_j)) / 2` on the raw features; no parameters.
    Cosine,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Attention => "attention",
            EstimatorKind::Mlp => "mlp",
            EstimatorKind::WeightedCosine => "weighted_cosine",
            EstimatorKind::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "attention" => Some(EstimatorKind::Attention),
            "mlp" => Some(EstimatorKind::Mlp),
            "weighted_cosine" => Some(EstimatorKind::WeightedCosine),
            "cosine" => Some(EstimatorKind::Cosine),
            _ => None,
        }
    }

    /// Whether the projection perceptron feeds this estimator.
    pub fn uses_projection(self) -> bool {
        self != EstimatorKind::Cosine
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

pub fn activate<T: Real>(tape: &mut Tape<T>, x: Var, act: Activation) -> Result<Var, ModelError> {
    Ok(match act {
        Activation::Relu => tape.relu(x)?,
        Activation::Identity => x,
    })
}

/// `x W + b` with `b` broadcast over rows.
pub fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var, ModelError> {
    let y = tape.matmul(x, w)?;
    Ok(match b {
        Some(b) => tape.add(y, b)?,
        None => y,
    })
}

fn pair_rows(pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    pairs.iter().copied().unzip()
}

/// Entries `(i, j)` of an `[n, n]` matrix as a `[P, 1]` column.
fn pick_pairs<T: Real>(tape: &mut Tape<T>, m: Var, n: usize, pairs: &[(usize, usize)]) -> Result<Var, ModelError> {
    let flat = tape.reshape(m, n * n, 1)?;
    let idx: Vec<usize> = pairs.iter().map(|&(i, j)| i * n + j).collect();
    Ok(tape.gather(flat, &idx)?)
}

/// Reliability `π` of every candidate pair as a `[P, 1]` column.
///
/// `z` is the projected node matrix (unused by [`EstimatorKind::Cosine`]),
/// `x` the raw features, `param` the estimator's own weight when it has one.
pub fn reliability<T: Real>(
    tape: &mut Tape<T>,
    kind: EstimatorKind,
    z: Option<Var>,
    x: Var,
    param: Option<Var>,
    pairs: &[(usize, usize)],
) -> Result<Var, ModelError> {
    let missing = || ModelError::Config("estimator input missing".into());
    let (is, js) = pair_rows(pairs);
    match kind {
        EstimatorKind::Attention => {
            let z = z.ok_or_else(missing)?;
            let a = param.ok_or_else(missing)?;
            let zi = tape.gather(z, &is)?;
            let zj = tape.gather(z, &js)?;
            let cat = tape.concat(&[zi, zj], 1)?;
            let s = tape.matmul(cat, a)?;
            Ok(tape.sigmoid(s)?)
        }
        EstimatorKind::Mlp => {
            let z = z.ok_or_else(missing)?;
            let zi = tape.gather(z, &is)?;
            let zj = tape.gather(z, &js)?;
            let prod = tape.mul(zi, zj)?;
            let dot = tape.sum(prod, Some(1))?;
            Ok(tape.sigmoid(dot)?)
        }
        EstimatorKind::WeightedCosine | EstimatorKind::Cosine => {
            let base = if kind == EstimatorKind::Cosine {
                x
            } else {
                let z = z.ok_or_else(missing)?;
                let w = param.ok_or_else(missing)?;
                tape.mul(z, w)?
            };
            let n = tape.value(base).shape()[0];
            let c = tape.cosine(base, base)?;
            let picked = pick_pairs(tape, c, n, pairs)?;
            let shifted = tape.add_scalar(picked, T::one())?;
            Ok(tape.scale(shifted, T::from_f64(0.5))?)
        }
    }
}

fn logit(p: f64) -> f64 {
    p.ln() - (1.0 - p).ln()
}

/// Scalar form of the relaxed Bernoulli weight.
pub fn relax_value(pi: f64, eps: f64, t: f64) -> f64 {
    let p = pi.clamp(PI_CLAMP, 1.0 - PI_CLAMP);
    let s = (logit(p) + logit(eps)) / t;
    1.0 / (1.0 + (-s).exp())
}

/// `sigmoid((logit(π) + logit(ε)) / t)` per row of the `[P, 1]` column `pi`.
pub fn concrete_relax<T: Real>(tape: &mut Tape<T>, pi: Var, eps: &[f64], t: f64) -> Result<Var, ModelError> {
    let p = tape.value(pi).shape()[0];
    if eps.len() != p {
        return Err(ModelError::Config(alloc::format!("{} noise values for {} pairs", eps.len(), p)));
    }
    if !(t > 0.0) {
        return Err(ModelError::Config(alloc::format!("temperature must be positive, got {t}")));
    }
    let c = tape.clamp(pi, T::from_f64(PI_CLAMP), T::from_f64(1.0 - PI_CLAMP))?;
    let log_p = tape.log(c)?;
    let neg = tape.scale(c, -T::one())?;
    let one_minus = tape.add_scalar(neg, T::one())?;
    let log_q = tape.log(one_minus)?;
    let lg = tape.sub(log_p, log_q)?;
    let noise = tape.constant(Tensor::column(eps.iter().map(|&e| T::from_f64(logit(e))).collect()));
    let s = tape.add(lg, noise)?;
    let s = tape.scale(s, T::from_f64(1.0 / t))?;
    Ok(tape.sigmoid(s)?)
}

/// Indices of the weights that survive refinement.
pub fn kept_indices(weights: &[f64]) -> Vec<usize> {
    weights.iter().enumerate().filter(|(_, &w)| w >= KEEP_THRESHOLD).map(|(i, _)| i).collect()
}

/// `D^{-1/2} (A + I) D^{-1/2}` for the symmetric weighted edges `pairs` whose
/// weights are the rows of the `[K, 1]` column `weights`.
pub fn normalized_adjacency<T: Real>(
    tape: &mut Tape<T>,
    n: usize,
    pairs: &[(usize, usize)],
    weights: Option<Var>,
) -> Result<Var, ModelError> {
    let eye = tape.constant(Tensor::identity(n));
    let a = match weights {
        Some(w) if !pairs.is_empty() => {
            let both = tape.concat(&[w, w], 0)?;
            let mut idx: Vec<usize> = pairs.iter().map(|&(i, j)| i * n + j).collect();
            idx.extend(pairs.iter().map(|&(i, j)| j * n + i));
            let flat = tape.scatter_add(both, &idx, n * n)?;
            let sq = tape.reshape(flat, n, n)?;
            tape.add(sq, eye)?
        }
        _ => eye,
    };
    let deg = tape.sum(a, Some(1))?;
    let dinv = tape.pow(deg, T::from_f64(-0.5))?;
    let left = tape.mul(a, dinv)?;
    let dinv_t = tape.transpose(dinv)?;
    Ok(tape.mul(left, dinv_t)?)
}

/// `L` propagation steps `h ← Â h W` (rectifier between steps, none after the
/// last), then `mean_rows(relu(h W_f + b_f))` as a `[1, d]` row.
pub fn gcn_readout<T: Real>(
    tape: &mut Tape<T>,
    a_hat: Var,
    x: Var,
    layers: &[Var],
    readout: (Var, Var),
) -> Result<Var, ModelError> {
    let mut h = x;
    for (l, &w) in layers.iter().enumerate() {
        let hw = tape.matmul(h, w)?;
        h = tape.matmul(a_hat, hw)?;
        if l + 1 < layers.len() {
            h = tape.relu(h)?;
        }
    }
    let f = linear(tape, h, readout.0, Some(readout.1))?;
    let f = tape.relu(f)?;
    Ok(tape.mean(f, Some(0))?)
}

/// Weights of one relational layer.
#[derive(Clone, Debug)]
pub struct RgnnLayer {
    /// One `[d_in, d_out]` transform per relation.
    pub relation: Vec<Var>,
    /// `[3·d_in, 1]` gate over `x_i ⊕ x_j ⊕ e_r`.
    pub gate: Var,
    pub self_term: Option<Var>,
    /// `[d_in, d_out]` relation-embedding update.
    pub relation_update: Var,
}

/// One relational message-passing step over directed `(head, relation, tail)`
/// edges; messages flow from head to tail. Returns the new node and relation
/// matrices.
pub fn rgnn_layer<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    e: Var,
    edges: &[(usize, RelationId, usize)],
    p: &RgnnLayer,
) -> Result<(Var, Var), ModelError> {
    let n = tape.value(x).shape()[0];
    let d_out = tape.value(p.relation_update).shape()[1];
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &(h, r, t) in edges {
        if r.index() >= p.relation.len() {
            return Err(ModelError::UnknownRelation(r.0));
        }
        let g = groups.entry(r.index()).or_default();
        g.0.push(h);
        g.1.push(t);
    }
    let mut acc: Option<Var> = None;
    for (r, (heads, tails)) in &groups {
        let xi = tape.gather(x, tails)?;
        let xj = tape.gather(x, heads)?;
        let er = tape.gather(e, &vec![*r; heads.len()])?;
        let cat = tape.concat(&[xi, xj, er], 1)?;
        let gate = tape.matmul(cat, p.gate)?;
        let alpha = tape.sigmoid(gate)?;
        let diff = tape.sub(xj, er)?;
        let msg = tape.matmul(diff, p.relation[*r])?;
        let msg = tape.mul(msg, alpha)?;
        let agg = tape.scatter_add(msg, tails, n)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, agg)?,
            None => agg,
        });
    }
    if let Some(w0) = p.self_term {
        let s = tape.matmul(x, w0)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    let out = match acc {
        Some(a) => a,
        None => tape.constant(Tensor::zeros(n, d_out)),
    };
    let e_next = tape.matmul(e, p.relation_update)?;
    Ok((out, e_next))
}

/// Stack of relational layers followed by `mean_rows(relu(x W_f + b_f))`.
pub fn rgnn_readout<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    e: Var,
    edges: &[(usize, RelationId, usize)],
    layers: &[RgnnLayer],
    readout: (Var, Var),
) -> Result<Var, ModelError> {
    let (mut x, mut e) = (x, e);
    for layer in layers {
        let (nx, ne) = rgnn_layer(tape, x, e, edges, layer)?;
        x = nx;
        e = ne;
    }
    let f = linear(tape, x, readout.0, Some(readout.1))?;
    let f = tape.relu(f)?;
    Ok(tape.mean(f, Some(0))?)
}

/// In-batch contrastive loss between matching rows of `h_sub` and `h_sem`
/// (`[B, d]` each), averaged over anchors.
pub fn infonce<T: Real>(tape: &mut Tape<T>, h_sub: Var, h_sem: Var, tau: f64) -> Result<Var, ModelError> {
    if !(tau > 0.0) {
        return Err(ModelError::Config(alloc::format!("temperature must be positive, got {tau}")));
    }
    let sim = tape.cosine(h_sub, h_sem)?;
    let b = tape.value(sim).shape()[0];
    let logits = tape.scale(sim, T::from_f64(1.0 / tau))?;
    let targets: Vec<usize> = (0..b).collect();
    let ce = tape.softmax_ce(logits, &targets)?;
    Ok(tape.mean(ce, None)?)
}

/// Bernoulli cross-entropy summed over columns, one row per example.
///
/// `targets` holds 0/1 indicators with the same shape as `logits`.
pub fn bernoulli_ce<T: Real>(tape: &mut Tape<T>, logits: Var, targets: &[Vec<f64>]) -> Result<Var, ModelError> {
    let (b, c) = {
        let s = tape.value(logits).shape();
        (s[0], s[1])
    };
    if targets.len() != b || targets.iter().any(|t| t.len() != c) {
        return Err(ModelError::Config("target shape does not match the classifier output".into()));
    }
    let y: Vec<T> = targets.iter().flatten().map(|&v| T::from_f64(v)).collect();
    let not_y: Vec<T> = targets.iter().flatten().map(|&v| T::from_f64(1.0 - v)).collect();
    let y = tape.constant(Tensor::new(vec![b, c], y)?);
    let not_y = tape.constant(Tensor::new(vec![b, c], not_y)?);
    let lo = T::from_f64(LOG_CLAMP);
    let p = tape.sigmoid(logits)?;
    let p = tape.clamp(p, lo, T::one())?;
    let log_p = tape.log(p)?;
    let neg = tape.scale(logits, -T::one())?;
    let q = tape.sigmoid(neg)?;
    let q = tape.clamp(q, lo, T::one())?;
    let log_q = tape.log(q)?;
    let a = tape.mul(log_p, y)?;
    let b_ = tape.mul(log_q, not_y)?;
    let s = tape.add(a, b_)?;
    let s = tape.sum(s, Some(1))?;
    Ok(tape.scale(s, -T::one())?)
}

/// Numerically stable probabilities from classifier logits.
pub fn probabilities(logits: &[f64], softmax: bool) -> Vec<f64> {
    if softmax {
        let m = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let ex: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
        let z: f64 = ex.iter().sum();
        ex.into_iter().map(|e| e / z).collect()
    } else {
        logits
            .iter()
            .map(|&x| if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) })
            .collect()
    }
}
