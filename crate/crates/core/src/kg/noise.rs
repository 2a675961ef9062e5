use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EntityId, KgError, KnowledgeGraph, RelationId, Triple, TypeId};
use crate::rng;

/// Observed `(head type, relation, tail type)` combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scheme {
    pub head_type: Option<TypeId>,
    pub relation: RelationId,
    pub tail_type: Option<TypeId>,
}

impl Scheme {
    pub fn of(kg: &KnowledgeGraph, t: &Triple) -> Scheme {
        Scheme { head_type: kg.entity_type(t.head), relation: t.relation, tail_type: kg.entity_type(t.tail) }
    }

    /// All schemes instantiated by at least one triple.
    pub fn observed(kg: &KnowledgeGraph) -> BTreeSet<Scheme> {
        kg.triples().iter().map(|t| Scheme::of(kg, t)).collect()
    }
}

/// A rectangle of candidate triples `heads × {relation} × tails`.
struct Block {
    heads: Vec<EntityId>,
    relation: RelationId,
    tails: Vec<EntityId>,
    allow_self: bool,
}

impl Block {
    fn raw_size(&self) -> u128 {
        self.heads.len() as u128 * self.tails.len() as u128
    }

    /// Number of valid triples (self-loops removed when disallowed).
    fn size(&self) -> u128 {
        if self.allow_self {
            return self.raw_size();
        }
        let tails: BTreeSet<EntityId> = self.tails.iter().copied().collect();
        let loops = self.heads.iter().filter(|h| tails.contains(h)).count() as u128;
        self.raw_size() - loops
    }
}

fn added_count(kg: &KnowledgeGraph, ratio: f64) -> Result<usize, KgError> {
    if !ratio.is_finite() || ratio < 0.0 {
        return Err(KgError::InvalidRatio(ratio));
    }
    // truncation is floor for non-negative values
    Ok((ratio * kg.num_triples() as f64) as usize)
}

fn sample_from_blocks(kg: &KnowledgeGraph, blocks: &[Block], m: usize, seed: u64) -> Result<KnowledgeGraph, KgError> {
    if m == 0 {
        return Ok(kg.clone());
    }
    let total: u128 = blocks.iter().map(Block::size).sum();
    let existing = blocks
        .iter()
        .map(|b| {
            let hs: BTreeSet<EntityId> = b.heads.iter().copied().collect();
            let ts: BTreeSet<EntityId> = b.tails.iter().copied().collect();
            kg.by_relation(b.relation)
                .iter()
                .map(|&i| kg.triples()[i as usize])
                .filter(|t| hs.contains(&t.head) && ts.contains(&t.tail))
                .count() as u128
        })
        .sum::<u128>();
    let available = total - existing;
    if (m as u128) > available {
        return Err(KgError::CandidatesExhausted { requested: m, available });
    }

    let mut rng = rng::stream(seed, rng::purpose::NOISE);
    let mut added: Vec<Triple> = Vec::with_capacity(m);
    if (m as u128) * 2 <= available {
        // Sparse regime: rejection sampling, each draw uniform over all raw cells.
        let raw: Vec<u128> = blocks.iter().map(Block::raw_size).collect();
        let raw_total: u128 = raw.iter().sum();
        let mut seen: BTreeSet<Triple> = BTreeSet::new();
        while added.len() < m {
            let mut x = rng.gen_range(0..raw_total);
            let mut bi = 0;
            while x >= raw[bi] {
                x -= raw[bi];
                bi += 1;
            }
            let b = &blocks[bi];
            let n_t = b.tails.len() as u128;
            let h = b.heads[(x / n_t) as usize];
            let t = b.tails[(x % n_t) as usize];
            if h == t && !b.allow_self {
                continue;
            }
            let tr = Triple::new(h, b.relation, t);
            if kg.contains(&tr) || !seen.insert(tr) {
                continue;
            }
            added.push(tr);
        }
    } else {
        // Dense regime: fewer than 2m free cells, so enumerating them is cheap.
        let mut free: Vec<Triple> = Vec::with_capacity(available as usize);
        for b in blocks {
            for &h in &b.heads {
                for &t in &b.tails {
                    if h == t && !b.allow_self {
                        continue;
                    }
                    let tr = Triple::new(h, b.relation, t);
                    if !kg.contains(&tr) {
                        free.push(tr);
                    }
                }
            }
        }
        for i in 0..m {
            let j = rng.gen_range(i..free.len());
            free.swap(i, j);
        }
        free.truncate(m);
        added = free;
    }
    Ok(kg.with_triples(kg.triples().iter().copied().chain(added)))
}

/// Add `floor(ratio * |triples|)` triples drawn uniformly from every unknown
/// `(head, relation, tail)` combination.
pub fn inject_structural_noise(kg: &KnowledgeGraph, ratio: f64, seed: u64) -> Result<KnowledgeGraph, KgError> {
    let m = added_count(kg, ratio)?;
    let all: Vec<EntityId> = kg.entity_ids().collect();
    let blocks: Vec<Block> = (0..kg.num_relations() as u32)
        .map(RelationId)
        .map(|r| Block { heads: all.clone(), relation: r, tails: all.clone(), allow_self: kg.is_reflexive(r) })
        .collect();
    sample_from_blocks(kg, &blocks, m, seed)
}

/// Like [`inject_structural_noise`], restricted to triples whose typed shape
/// matches a [`Scheme`] already present in `kg`.
pub fn inject_semantic_noise(kg: &KnowledgeGraph, ratio: f64, seed: u64) -> Result<KnowledgeGraph, KgError> {
    let m = added_count(kg, ratio)?;
    let blocks: Vec<Block> = Scheme::observed(kg)
        .into_iter()
        .map(|s| Block {
            heads: kg.entities_of_type(s.head_type),
            relation: s.relation,
            tails: kg.entities_of_type(s.tail_type),
            allow_self: kg.is_reflexive(s.relation),
        })
        .collect();
    sample_from_blocks(kg, &blocks, m, seed)
}
