//! Knowledge graph storage and dataset bookkeeping.
//!
//! A [`KnowledgeGraph`] is immutable once built. Every operation that changes
//! the triple set (smoothing, noise injection) returns a new graph with its
//! indexes rebuilt from scratch.

mod links;
mod negatives;
mod noise;
mod smooth;
mod split;

pub use links::{Label, LinkExample, TaskMode};
pub use negatives::{sample_negatives, NegativeMode};
pub use noise::{inject_semantic_noise, inject_structural_noise, Scheme};
pub use smooth::{smooth_relations, SmoothClass, SmoothingMap, UnmappedPolicy};
pub use split::{kfold_split, DatasetSplit};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KgError {
    #[error("entity {entity} typed as both {first} and {second}")]
    TypeConflict { entity: String, first: String, second: String },
    #[error("self-loop on {entity} with relation {relation}, which is not declared reflexive")]
    SelfLoop { entity: String, relation: String },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("unknown entity type {0}")]
    UnknownType(String),
    #[error("relation {0} has no smoothing class and the policy is strict")]
    UnmappedRelation(String),
    #[error("k must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("class {class} has {count} examples, fewer than k = {k}")]
    ClassTooSmall { class: String, count: usize, k: usize },
    #[error("no negative candidate for head {0}")]
    EmptyNegativePool(String),
    #[error("cannot sample {requested} new triples: only {available} candidates remain")]
    CandidatesExhausted { requested: usize, available: u128 },
    #[error("noise ratio must be finite and non-negative, got {0}")]
    InvalidRatio(f64),
    #[error("{0}")]
    Label(String),
}

/// Dense string interner; ids are assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        let mut v = Vocab::new();
        for n in names {
            v.intern(&n.into());
        }
        v
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Clone, Debug, Default)]
struct GraphIndex {
    triple_set: BTreeSet<Triple>,
    outgoing: Vec<Vec<u32>>,
    incoming: Vec<Vec<u32>>,
    by_relation: Vec<Vec<u32>>,
    neighbors: Vec<Vec<EntityId>>,
}

impl GraphIndex {
    fn build(num_entities: usize, num_relations: usize, triples: &[Triple]) -> Self {
        let mut idx = GraphIndex {
            triple_set: BTreeSet::new(),
            outgoing: alloc::vec![Vec::new(); num_entities],
            incoming: alloc::vec![Vec::new(); num_entities],
            by_relation: alloc::vec![Vec::new(); num_relations],
            neighbors: alloc::vec![Vec::new(); num_entities],
        };
        for (i, t) in triples.iter().enumerate() {
            let i = i as u32;
            idx.triple_set.insert(*t);
            idx.outgoing[t.head.index()].push(i);
            idx.incoming[t.tail.index()].push(i);
            idx.by_relation[t.relation.index()].push(i);
            if t.head != t.tail {
                idx.neighbors[t.head.index()].push(t.tail);
                idx.neighbors[t.tail.index()].push(t.head);
            }
        }
        for n in &mut idx.neighbors {
            n.sort_unstable();
            n.dedup();
        }
        idx
    }
}

/// Typed multi-relational graph with adjacency and per-relation indexes.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vocab,
    entity_types: Vec<Option<TypeId>>,
    types: Vocab,
    relations: Vocab,
    reflexive: Vec<bool>,
    triples: Vec<Triple>,
    index: GraphIndex,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.entity_types == other.entity_types
            && self.types == other.types
            && self.relations == other.relations
            && self.reflexive == other.reflexive
            && self.triples == other.triples
    }
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        KgBuilder::new().build()
    }
}

impl KnowledgeGraph {
    pub fn builder() -> KgBuilder {
        KgBuilder::new()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn types(&self) -> &Vocab {
        &self.types
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.get(name).map(TypeId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.0)
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        self.relations.name(r.0)
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        self.types.name(t.0)
    }

    pub fn entity_type(&self, e: EntityId) -> Option<TypeId> {
        self.entity_types[e.index()]
    }

    pub fn is_reflexive(&self, r: RelationId) -> bool {
        self.reflexive[r.index()]
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.index.triple_set.contains(t)
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        e.index() < self.entities.len()
    }

    /// Indices into [`triples`](Self::triples) of edges leaving `e`.
    pub fn outgoing(&self, e: EntityId) -> &[u32] {
        &self.index.outgoing[e.index()]
    }

    pub fn incoming(&self, e: EntityId) -> &[u32] {
        &self.index.incoming[e.index()]
    }

    pub fn by_relation(&self, r: RelationId) -> &[u32] {
        &self.index.by_relation[r.index()]
    }

    /// Distinct neighbours of `e` ignoring direction and relation, sorted by id.
    pub fn neighbors(&self, e: EntityId) -> &[EntityId] {
        &self.index.neighbors[e.index()]
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    /// Entities carrying type `t` (or untyped entities for `None`).
    pub fn entities_of_type(&self, t: Option<TypeId>) -> Vec<EntityId> {
        self.entity_ids().filter(|&e| self.entity_type(e) == t).collect()
    }

    /// Same vocabularies and types with a different triple set.
    ///
    /// Duplicates are dropped; first occurrence wins.
    pub fn with_triples(&self, triples: impl IntoIterator<Item = Triple>) -> KnowledgeGraph {
        let mut seen = BTreeSet::new();
        let triples: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
        let index = GraphIndex::build(self.entities.len(), self.relations.len(), &triples);
        KnowledgeGraph {
            entities: self.entities.clone(),
            entity_types: self.entity_types.clone(),
            types: self.types.clone(),
            relations: self.relations.clone(),
            reflexive: self.reflexive.clone(),
            triples,
            index,
        }
    }

    /// Graph without the listed triples.
    pub fn without(&self, removed: &BTreeSet<Triple>) -> KnowledgeGraph {
        self.with_triples(self.triples.iter().copied().filter(|t| !removed.contains(t)))
    }

    pub fn to_builder(&self) -> KgBuilder {
        KgBuilder {
            entities: self.entities.clone(),
            entity_types: self.entity_types.clone(),
            types: self.types.clone(),
            relations: self.relations.clone(),
            reflexive: self.reflexive.clone(),
            triples: self.triples.clone(),
            seen: self.index.triple_set.clone(),
        }
    }

    /// Check that every index agrees with a full rescan of the triple list.
    pub fn verify_indexes(&self) -> bool {
        let fresh = GraphIndex::build(self.entities.len(), self.relations.len(), &self.triples);
        fresh.triple_set == self.index.triple_set
            && fresh.triple_set.len() == self.triples.len()
            && fresh.outgoing == self.index.outgoing
            && fresh.incoming == self.index.incoming
            && fresh.by_relation == self.index.by_relation
            && fresh.neighbors == self.index.neighbors
    }
}

/// Incremental constructor for [`KnowledgeGraph`].
#[derive(Clone, Debug, Default)]
pub struct KgBuilder {
    entities: Vocab,
    entity_types: Vec<Option<TypeId>>,
    types: Vocab,
    relations: Vocab,
    reflexive: Vec<bool>,
    triples: Vec<Triple>,
    seen: BTreeSet<Triple>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        let id = self.entities.intern(name);
        if id as usize == self.entity_types.len() {
            self.entity_types.push(None);
        }
        EntityId(id)
    }

    /// Declare (or re-declare) the type of an entity.
    pub fn typed_entity(&mut self, name: &str, type_name: &str) -> Result<EntityId, KgError> {
        let e = self.entity(name);
        let t = TypeId(self.types.intern(type_name));
        match self.entity_types[e.index()] {
            Some(prev) if prev != t => Err(KgError::TypeConflict {
                entity: name.to_string(),
                first: self.types.name(prev.0).to_string(),
                second: type_name.to_string(),
            }),
            _ => {
                self.entity_types[e.index()] = Some(t);
                Ok(e)
            }
        }
    }

    pub fn entity_type_name(&mut self, type_name: &str) -> TypeId {
        TypeId(self.types.intern(type_name))
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        let id = self.relations.intern(name);
        if id as usize == self.reflexive.len() {
            self.reflexive.push(false);
        }
        RelationId(id)
    }

    pub fn declare_reflexive(&mut self, name: &str) -> RelationId {
        let r = self.relation(name);
        self.reflexive[r.index()] = true;
        r
    }

    /// Add a triple by id. Returns `false` when it was already present.
    pub fn add(&mut self, t: Triple) -> Result<bool, KgError> {
        if t.head == t.tail && !self.reflexive[t.relation.index()] {
            return Err(KgError::SelfLoop {
                entity: self.entities.name(t.head.0).to_string(),
                relation: self.relations.name(t.relation.0).to_string(),
            });
        }
        if !self.seen.insert(t) {
            return Ok(false);
        }
        self.triples.push(t);
        Ok(true)
    }

    pub fn add_named(&mut self, head: &str, relation: &str, tail: &str) -> Result<bool, KgError> {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        self.add(Triple::new(h, r, t))
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn build(self) -> KnowledgeGraph {
        let index = GraphIndex::build(self.entities.len(), self.relations.len(), &self.triples);
        KnowledgeGraph {
            entities: self.entities,
            entity_types: self.entity_types,
            types: self.types,
            relations: self.relations,
            reflexive: self.reflexive,
            triples: self.triples,
            index,
        }
    }
}
