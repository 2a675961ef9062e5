//! Planted benchmark: drugs, targets and genes split into communities, with
//! drug–target interactions exactly between members of the same community.
//! The interactions themselves are kept out of the graph.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::kg::{
    sample_negatives, EntityId, KgError, KnowledgeGraph, Label, LinkExample, NegativeMode, SmoothClass, SmoothingMap,
    TaskMode, UnmappedPolicy,
};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub communities: usize,
    pub drugs: usize,
    pub targets: usize,
    pub genes: usize,
    /// Genes touched by each drug.
    pub drug_degree: usize,
    /// Genes associated with each target.
    pub target_degree: usize,
    /// Co-expression partners per gene.
    pub gene_degree: usize,
    /// Chance that any planted edge lands in a different community instead.
    pub cross_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            communities: 2,
            drugs: 8,
            targets: 3,
            genes: 8,
            drug_degree: 3,
            target_degree: 3,
            gene_degree: 2,
            cross_rate: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Positive links plus as many negatives.
    pub fn num_links(&self) -> usize {
        2 * self.communities * self.drugs * self.targets
    }

    fn validate(&self) -> Result<(), KgError> {
        let bad = |m: String| Err(KgError::Label(m));
        if self.communities < 2 {
            return bad(format!("need at least 2 communities, got {}", self.communities));
        }
        if self.drugs == 0 || self.targets == 0 || self.genes < 2 {
            return bad("need drugs, targets and at least 2 genes per community".into());
        }
        if self.drug_degree > self.genes || self.target_degree > self.genes || self.gene_degree >= self.genes {
            return bad(format!("degrees exceed the {} genes of a community", self.genes));
        }
        if !(0.0..=1.0).contains(&self.cross_rate) {
            return Err(KgError::InvalidRatio(self.cross_rate));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticBenchmark {
    pub kg: KnowledgeGraph,
    pub smoothing: SmoothingMap,
    pub examples: Vec<LinkExample>,
    pub task: TaskMode,
}

pub const DRUG_TO_GENE: [&str; 3] = ["activates", "inhibits", "binds"];

pub fn smoothing_map() -> SmoothingMap {
    SmoothingMap::new(UnmappedPolicy::Strict)
        .with("activates", SmoothClass::Positive)
        .with("inhibits", SmoothClass::Negative)
        .with("binds", SmoothClass::Interaction)
        .with("associated_with", SmoothClass::Interaction)
        .with("coexpressed_with", SmoothClass::Positive)
        .with("similar_to", SmoothClass::Positive)
}

/// `k` distinct members of community `c`, or of a random other community
/// with probability `cross` per draw.
fn pick(rng: &mut Rng, cfg: &SyntheticConfig, c: usize, k: usize, pool: &[Vec<EntityId>], skip: Option<EntityId>) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    let mut tries = 0;
    while out.len() < k && tries < 64 * (k + 1) {
        tries += 1;
        let comm = if rng.gen_bool(cfg.cross_rate) {
            let other = rng.gen_range(0..cfg.communities - 1);
            if other >= c {
                other + 1
            } else {
                other
            }
        } else {
            c
        };
        let e = *pool[comm].choose(rng).expect("communities are non-empty");
        if Some(e) != skip && !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticBenchmark, KgError> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, rng::purpose::SYNTHETIC);
    let mut b = KnowledgeGraph::builder();
    let mut drugs = Vec::new();
    let mut targets = Vec::new();
    let mut genes = Vec::new();
    for c in 0..cfg.communities {
        drugs.push((0..cfg.drugs).map(|i| b.typed_entity(&format!("drug_c{c}_{i}"), "Drug")).collect::<Result<Vec<_>, _>>()?);
        targets.push(
            (0..cfg.targets).map(|i| b.typed_entity(&format!("target_c{c}_{i}"), "Target")).collect::<Result<Vec<_>, _>>()?,
        );
        genes.push((0..cfg.genes).map(|i| b.typed_entity(&format!("gene_c{c}_{i}"), "Gene")).collect::<Result<Vec<_>, _>>()?);
    }
    let drug_rel: Vec<_> = DRUG_TO_GENE.iter().map(|n| b.relation(n)).collect();
    let assoc = b.relation("associated_with");
    let coexp = b.relation("coexpressed_with");
    let similar = b.relation("similar_to");

    for c in 0..cfg.communities {
        for &d in &drugs[c] {
            for g in pick(&mut rng, cfg, c, cfg.drug_degree, &genes, None) {
                let r = drug_rel[rng.gen_range(0..drug_rel.len())];
                b.add(crate::kg::Triple::new(d, r, g))?;
            }
            if cfg.drugs > 1 {
                for other in pick(&mut rng, cfg, c, 1, &drugs, Some(d)) {
                    b.add(crate::kg::Triple::new(d, similar, other))?;
                }
            }
        }
        for &t in &targets[c] {
            for g in pick(&mut rng, cfg, c, cfg.target_degree, &genes, None) {
                b.add(crate::kg::Triple::new(t, assoc, g))?;
            }
        }
        for &g in &genes[c] {
            for other in pick(&mut rng, cfg, c, cfg.gene_degree, &genes, Some(g)) {
                b.add(crate::kg::Triple::new(g, coexp, other))?;
            }
        }
    }
    let kg = b.build();

    let mut positives = Vec::new();
    for c in 0..cfg.communities {
        for &d in &drugs[c] {
            for &t in &targets[c] {
                positives.push(LinkExample::new(d, t, Label::Binary(true)));
            }
        }
    }
    let negatives = sample_negatives(&positives, &kg, NegativeMode::BalancedPerHead, cfg.seed)?;
    let mut examples = positives;
    examples.extend(negatives);
    Ok(SyntheticBenchmark { kg, smoothing: smoothing_map(), examples, task: TaskMode::Binary })
}
