use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{KgBuilder, KgError, KnowledgeGraph, Triple};

/// Coarse relation class used by the semantic view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothClass {
    Positive,
    Interaction,
    Negative,
}

impl SmoothClass {
    pub const ALL: [SmoothClass; 3] = [SmoothClass::Positive, SmoothClass::Interaction, SmoothClass::Negative];

    pub fn name(self) -> &'static str {
        match self {
            SmoothClass::Positive => "positive",
            SmoothClass::Interaction => "interaction",
            SmoothClass::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(SmoothClass::Positive),
            "interaction" => Some(SmoothClass::Interaction),
            "negative" => Some(SmoothClass::Negative),
            _ => None,
        }
    }
}

/// What to do with relations the map does not mention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnmappedPolicy {
    /// Keep the relation under its own name.
    Keep,
    /// Drop its triples.
    Drop,
    /// Fail on the first unmapped relation.
    #[default]
    Strict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SmoothingMap {
    pub classes: BTreeMap<String, SmoothClass>,
    pub unmapped: UnmappedPolicy,
}

impl SmoothingMap {
    pub fn new(unmapped: UnmappedPolicy) -> Self {
        SmoothingMap { classes: BTreeMap::new(), unmapped }
    }

    pub fn with(mut self, relation: &str, class: SmoothClass) -> Self {
        self.classes.insert(relation.to_string(), class);
        self
    }

    pub fn insert(&mut self, relation: &str, class: SmoothClass) {
        self.classes.insert(relation.to_string(), class);
    }

    pub fn class_of(&self, relation: &str) -> Option<SmoothClass> {
        self.classes.get(relation).copied()
    }
}

/// Rewrite every triple onto the three smoothed classes.
///
/// The output relation vocabulary starts with `positive`, `interaction`,
/// `negative` (ids 0, 1, 2) followed by kept unmapped relations in their
/// original order. Entities are carried over unchanged; triples that collapse
/// onto the same smoothed triple are merged.
pub fn smooth_relations(kg: &KnowledgeGraph, map: &SmoothingMap) -> Result<KnowledgeGraph, KgError> {
    let mut b = KgBuilder {
        entities: kg.entities.clone(),
        entity_types: kg.entity_types.clone(),
        types: kg.types.clone(),
        ..KgBuilder::default()
    };
    for c in SmoothClass::ALL {
        b.relation(c.name());
    }
    // old relation id -> new relation id (None = dropped)
    let mut remap: Vec<Option<super::RelationId>> = Vec::with_capacity(kg.num_relations());
    for (i, name) in kg.relations.names().iter().enumerate() {
        let target = match map.class_of(name) {
            Some(c) => Some(b.relation(c.name())),
            None => match map.unmapped {
                UnmappedPolicy::Keep => Some(b.relation(name)),
                UnmappedPolicy::Drop => None,
                UnmappedPolicy::Strict => {
                    if kg.by_relation(super::RelationId(i as u32)).is_empty() {
                        None
                    } else {
                        return Err(KgError::UnmappedRelation(name.clone()));
                    }
                }
            },
        };
        if let Some(r) = target {
            if kg.reflexive[i] {
                b.reflexive[r.index()] = true;
            }
        }
        remap.push(target);
    }
    for t in kg.triples() {
        if let Some(r) = remap[t.relation.index()] {
            b.add(Triple::new(t.head, r, t.tail))?;
        }
    }
    Ok(b.build())
}
