use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EntityId, KgError, KnowledgeGraph, LinkExample, TypeId};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Each head receives as many distinct negative tails as it has positives
    /// (falling back to repeats only when its pool is smaller than that).
    #[default]
    BalancedPerHead,
    /// One independently drawn negative per positive, emitted in input order.
    CounterpartPerPositive,
}

/// Corrupt the tail of every positive.
///
/// Candidate tails are entities sharing a type with some positive tail; the
/// head itself and every tail already paired with that head are excluded.
pub fn sample_negatives(
    positives: &[LinkExample],
    kg: &KnowledgeGraph,
    mode: NegativeMode,
    seed: u64,
) -> Result<Vec<LinkExample>, KgError> {
    for ex in positives {
        for e in [ex.head, ex.tail] {
            if !kg.contains_entity(e) {
                return Err(KgError::UnknownEntity(alloc::format!("#{}", e.0)));
            }
        }
    }
    let tail_types: BTreeSet<Option<TypeId>> = positives.iter().map(|ex| kg.entity_type(ex.tail)).collect();
    let candidates: Vec<EntityId> = kg.entity_ids().filter(|&e| tail_types.contains(&kg.entity_type(e))).collect();

    let mut known: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    let mut head_order: Vec<EntityId> = Vec::new();
    for ex in positives {
        let entry = known.entry(ex.head).or_insert_with(|| {
            head_order.push(ex.head);
            BTreeSet::new()
        });
        entry.insert(ex.tail);
    }
    let mut pools: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
    for &h in &head_order {
        let excluded = &known[&h];
        let pool: Vec<EntityId> = candidates.iter().copied().filter(|&t| t != h && !excluded.contains(&t)).collect();
        if pool.is_empty() {
            return Err(KgError::EmptyNegativePool(kg.entity_name(h).to_string()));
        }
        pools.insert(h, pool);
    }

    let mut rng = rng::stream(seed, rng::purpose::NEGATIVES);
    let mut out = Vec::with_capacity(positives.len());
    match mode {
        NegativeMode::CounterpartPerPositive => {
            for ex in positives {
                let pool = &pools[&ex.head];
                let t = pool[rng.gen_range(0..pool.len())];
                out.push(LinkExample::new(ex.head, t, ex.label.negative()?));
            }
        }
        NegativeMode::BalancedPerHead => {
            let mut by_head: BTreeMap<EntityId, Vec<&LinkExample>> = BTreeMap::new();
            for ex in positives {
                by_head.entry(ex.head).or_default().push(ex);
            }
            for h in head_order {
                let pool = &pools[&h];
                let exs = &by_head[&h];
                let need = exs.len();
                let mut chosen: Vec<EntityId> = Vec::with_capacity(need);
                while chosen.len() < need {
                    let take = (need - chosen.len()).min(pool.len());
                    chosen.extend(index::sample(&mut rng, pool.len(), take).into_iter().map(|i| pool[i]));
                }
                for (ex, t) in exs.iter().zip(chosen) {
                    out.push(LinkExample::new(h, t, ex.label.negative()?));
                }
            }
        }
    }
    Ok(out)
}
