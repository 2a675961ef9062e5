//! Local (enclosing) and metapath-guided semantic subgraphs around a link.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple, TypeId};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubgraphError {
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown relation id {0}")]
    UnknownRelation(u32),
    #[error("unknown entity type {0}")]
    UnknownType(String),
    #[error("unknown relation {0}")]
    UnknownRelationName(String),
    #[error("metapath length must be at least 1")]
    InvalidMaxLen,
    #[error("node cap {0} cannot hold both endpoints")]
    InvalidCap(usize),
}

/// The link being classified. Triples `(head, r, tail)` and `(tail, r, head)`
/// with `r = exclude` are hidden from both extractors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkQuery {
    pub head: EntityId,
    pub tail: EntityId,
    pub exclude: Option<RelationId>,
}

impl LinkQuery {
    pub fn new(head: EntityId, tail: EntityId) -> Self {
        LinkQuery { head, tail, exclude: None }
    }

    pub fn excluding(mut self, r: RelationId) -> Self {
        self.exclude = Some(r);
        self
    }

    fn hides(&self, t: &Triple) -> bool {
        Some(t.relation) == self.exclude
            && ((t.head == self.head && t.tail == self.tail) || (t.head == self.tail && t.tail == self.head))
    }

    fn check(&self, kg: &KnowledgeGraph) -> Result<(), SubgraphError> {
        for e in [self.head, self.tail] {
            if !kg.contains_entity(e) {
                return Err(SubgraphError::UnknownEntity(e.0));
            }
        }
        if let Some(r) = self.exclude {
            if r.index() >= kg.num_relations() {
                return Err(SubgraphError::UnknownRelation(r.0));
            }
        }
        Ok(())
    }

    /// Whether the undirected edge `{a, b}` survives once hidden triples are gone.
    fn edge_visible(&self, kg: &KnowledgeGraph, a: EntityId, b: EntityId) -> bool {
        let endpoints = (a == self.head && b == self.tail) || (a == self.tail && b == self.head);
        if self.exclude.is_none() || !endpoints {
            return true;
        }
        let ts = kg.triples();
        kg.outgoing(a).iter().chain(kg.outgoing(b)).any(|&i| {
            let t = &ts[i as usize];
            ((t.head == a && t.tail == b) || (t.head == b && t.tail == a)) && !self.hides(t)
        })
    }
}

/// Hop distances from `source` up to `k`, on the undirected untyped view.
fn bfs(kg: &KnowledgeGraph, source: EntityId, k: usize, q: Option<&LinkQuery>) -> BTreeMap<EntityId, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(source, 0);
    let mut queue = VecDeque::from([source]);
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        if d == k {
            continue;
        }
        for &m in kg.neighbors(n) {
            if dist.contains_key(&m) {
                continue;
            }
            if let Some(q) = q {
                if !q.edge_visible(kg, n, m) {
                    continue;
                }
            }
            dist.insert(m, d + 1);
            queue.push_back(m);
        }
    }
    dist
}

/// Every node within `k` undirected hops of `node`, itself included.
pub fn khop_neighbors(kg: &KnowledgeGraph, node: EntityId, k: usize) -> Result<BTreeSet<EntityId>, SubgraphError> {
    if !kg.contains_entity(node) {
        return Err(SubgraphError::UnknownEntity(node.0));
    }
    Ok(bfs(kg, node, k, None).into_keys().collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSubgraph {
    /// Head first, tail second, then by increasing distance sum.
    pub nodes: Vec<EntityId>,
    /// Local index pairs `(i, j)` with `i < j`.
    pub observed_edges: Vec<(usize, usize)>,
    /// Every local pair `(i, j)` with `i < j`.
    pub candidate_pairs: Vec<(usize, usize)>,
}

impl LocalSubgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Enclosing subgraph: nodes within `k` hops of both endpoints, capped at
/// `v_max` by ascending distance sum with seeded tie-breaking.
pub fn extract_local(
    kg: &KnowledgeGraph,
    q: &LinkQuery,
    k: usize,
    v_max: usize,
    seed: u64,
) -> Result<LocalSubgraph, SubgraphError> {
    q.check(kg)?;
    if v_max < 2 {
        return Err(SubgraphError::InvalidCap(v_max));
    }
    let du = bfs(kg, q.head, k, Some(q));
    let dv = bfs(kg, q.tail, k, Some(q));
    let salt = rng::mix(rng::mix(seed, q.head.0 as u64), q.tail.0 as u64);
    let mut rest: Vec<(usize, u64, EntityId)> = du
        .iter()
        .filter(|(n, _)| **n != q.head && **n != q.tail)
        .filter_map(|(n, a)| dv.get(n).map(|b| (a + b, rng::mix(salt, n.0 as u64), *n)))
        .collect();
    rest.sort_unstable();
    let mut nodes = alloc::vec![q.head];
    if q.tail != q.head {
        nodes.push(q.tail);
    }
    nodes.extend(rest.into_iter().take(v_max - nodes.len()).map(|(_, _, n)| n));

    let pos: BTreeMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut observed = Vec::new();
    for (i, &n) in nodes.iter().enumerate() {
        for m in kg.neighbors(n) {
            if let Some(&j) = pos.get(m) {
                if i < j && q.edge_visible(kg, n, *m) {
                    observed.push((i, j));
                }
            }
        }
    }
    observed.sort_unstable();
    let mut candidates = Vec::with_capacity(nodes.len() * (nodes.len() - 1) / 2);
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            candidates.push((i, j));
        }
    }
    Ok(LocalSubgraph { nodes, observed_edges: observed, candidate_pairs: candidates })
}

/// One metapath step: follow `relation` forwards, or backwards when `inverse`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Step {
    pub relation: RelationId,
    pub inverse: bool,
}

impl Step {
    pub fn forward(relation: RelationId) -> Self {
        Step { relation, inverse: false }
    }

    pub fn backward(relation: RelationId) -> Self {
        Step { relation, inverse: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Metapath {
    pub head_type: TypeId,
    pub steps: Vec<Step>,
    pub tail_type: TypeId,
}

impl Metapath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Relations written as `r1;~r2;r3`, `~` marking a backwards step.
    pub fn describe(&self, kg: &KnowledgeGraph) -> String {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|s| {
                let name = kg.relation_name(s.relation);
                if s.inverse {
                    alloc::format!("~{name}")
                } else {
                    name.to_string()
                }
            })
            .collect();
        parts.join(";")
    }

    /// Inverse of [`Metapath::describe`]: names resolve against `kg`.
    pub fn parse(kg: &KnowledgeGraph, head_type: &str, steps: &str, tail_type: &str) -> Result<Metapath, SubgraphError> {
        let ty = |n: &str| kg.type_id(n).ok_or_else(|| SubgraphError::UnknownType(n.to_string()));
        let (head_type, tail_type) = (ty(head_type)?, ty(tail_type)?);
        let mut out = Vec::new();
        for part in steps.split(';').map(str::trim) {
            let (name, inverse) = match part.strip_prefix('~') {
                Some(rest) => (rest, true),
                None => (part, false),
            };
            let relation = kg.relation_id(name).ok_or_else(|| SubgraphError::UnknownRelationName(name.to_string()))?;
            out.push(Step { relation, inverse });
        }
        Ok(Metapath { head_type, steps: out, tail_type })
    }
}

/// All step sequences of length `1..=max_len` that walk the type-level scheme
/// graph of `kg` from `head_type` to `tail_type`. Ordered by length, then steps.
pub fn default_metapaths(
    kg: &KnowledgeGraph,
    head_type: &str,
    tail_type: &str,
    max_len: usize,
) -> Result<Vec<Metapath>, SubgraphError> {
    if max_len == 0 {
        return Err(SubgraphError::InvalidMaxLen);
    }
    let ht = kg.type_id(head_type).ok_or_else(|| SubgraphError::UnknownType(head_type.to_string()))?;
    let tt = kg.type_id(tail_type).ok_or_else(|| SubgraphError::UnknownType(tail_type.to_string()))?;
    let mut moves: BTreeMap<TypeId, BTreeSet<(Step, TypeId)>> = BTreeMap::new();
    for s in crate::kg::Scheme::observed(kg) {
        if let (Some(a), Some(b)) = (s.head_type, s.tail_type) {
            moves.entry(a).or_default().insert((Step::forward(s.relation), b));
            moves.entry(b).or_default().insert((Step::backward(s.relation), a));
        }
    }
    // Level-by-level expansion of (steps, current type); a set dedups
    // sequences realised through different intermediate types.
    let mut found: BTreeSet<(usize, Vec<Step>)> = BTreeSet::new();
    let mut level: BTreeSet<(Vec<Step>, TypeId)> = BTreeSet::from([(Vec::new(), ht)]);
    for len in 1..=max_len {
        let mut next = BTreeSet::new();
        for (steps, at) in &level {
            for (step, to) in moves.get(at).into_iter().flatten() {
                let mut s = steps.clone();
                s.push(*step);
                if *to == tt {
                    found.insert((len, s.clone()));
                }
                next.insert((s, *to));
            }
        }
        level = next;
    }
    Ok(found.into_iter().map(|(_, steps)| Metapath { head_type: ht, steps, tail_type: tt }).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticSubgraph {
    /// Head first, tail second, then by entity id.
    pub nodes: Vec<EntityId>,
    pub node_types: Vec<Option<TypeId>>,
    /// Directed typed edges `(head, relation, tail)` over local indices, sorted.
    pub edges: Vec<(usize, RelationId, usize)>,
    /// Indices into the metapath list that produced at least one instance.
    pub matched: Vec<usize>,
}

/// Both views of one queried link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphPair {
    pub local: LocalSubgraph,
    pub semantic: SemanticSubgraph,
}

fn step_targets<'a>(kg: &'a KnowledgeGraph, n: EntityId, step: Step) -> impl Iterator<Item = (Triple, EntityId)> + 'a {
    let list = if step.inverse { kg.incoming(n) } else { kg.outgoing(n) };
    list.iter().filter_map(move |&i| {
        let t = kg.triples()[i as usize];
        if t.relation != step.relation {
            None
        } else if step.inverse {
            Some((t, t.head))
        } else {
            Some((t, t.tail))
        }
    })
}

/// Union of every edge lying on some instance of a metapath from the query
/// head to its tail. Metapaths whose endpoint types do not match the query are
/// skipped.
pub fn extract_semantic(
    kg: &KnowledgeGraph,
    q: &LinkQuery,
    metapaths: &[Metapath],
) -> Result<SemanticSubgraph, SubgraphError> {
    q.check(kg)?;
    for mp in metapaths {
        if let Some(s) = mp.steps.iter().find(|s| s.relation.index() >= kg.num_relations()) {
            return Err(SubgraphError::UnknownRelation(s.relation.0));
        }
    }
    let (hu, hv) = (kg.entity_type(q.head), kg.entity_type(q.tail));
    let mut edges: BTreeSet<Triple> = BTreeSet::new();
    let mut matched = Vec::new();
    for (mi, mp) in metapaths.iter().enumerate() {
        if mp.steps.is_empty() || hu != Some(mp.head_type) || hv != Some(mp.tail_type) {
            continue;
        }
        let k = mp.steps.len();
        let mut fwd: Vec<BTreeSet<EntityId>> = alloc::vec![BTreeSet::from([q.head])];
        for step in &mp.steps {
            let mut next = BTreeSet::new();
            for &n in fwd.last().unwrap() {
                for (t, m) in step_targets(kg, n, *step) {
                    if !q.hides(&t) {
                        next.insert(m);
                    }
                }
            }
            fwd.push(next);
        }
        if !fwd[k].contains(&q.tail) {
            continue;
        }
        // Walk back from the tail, keeping only edges whose source was reachable.
        let mut back: BTreeSet<EntityId> = BTreeSet::from([q.tail]);
        let mut found = Vec::new();
        for i in (0..k).rev() {
            let step = mp.steps[i];
            let mut prev = BTreeSet::new();
            for &n in &fwd[i] {
                for (t, m) in step_targets(kg, n, step) {
                    if back.contains(&m) && !q.hides(&t) {
                        found.push(t);
                        prev.insert(n);
                    }
                }
            }
            back = prev;
        }
        edges.extend(found);
        matched.push(mi);
    }

    let mut nodes = alloc::vec![q.head];
    if q.tail != q.head {
        nodes.push(q.tail);
    }
    let inner: BTreeSet<EntityId> =
        edges.iter().flat_map(|t| [t.head, t.tail]).filter(|&n| n != q.head && n != q.tail).collect();
    nodes.extend(inner);
    let pos: BTreeMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut local: Vec<(usize, RelationId, usize)> = edges.iter().map(|t| (pos[&t.head], t.relation, pos[&t.tail])).collect();
    local.sort_unstable();
    let node_types = nodes.iter().map(|&n| kg.entity_type(n)).collect();
    Ok(SemanticSubgraph { nodes, node_types, edges: local, matched })
}
