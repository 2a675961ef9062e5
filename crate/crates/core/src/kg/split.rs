use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EntityId, KgError, LinkExample};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub fold: usize,
    pub train: Vec<LinkExample>,
    pub valid: Vec<LinkExample>,
    pub test: Vec<LinkExample>,
}

/// K-fold cross-validation splits.
///
/// Examples sharing a `(head, tail)` pair always land in the same fold. Fold
/// `i` tests on part `i`, validates on part `i + 1 (mod k)` and trains on the
/// rest; with `k = 2` the validation set is empty. Under stratification every
/// class key must own at least `k` pairs, which puts every class into every
/// part and therefore into every training set.
pub fn kfold_split(
    examples: &[LinkExample],
    k: usize,
    seed: u64,
    stratify_by_class: bool,
) -> Result<Vec<DatasetSplit>, KgError> {
    if k < 2 {
        return Err(KgError::InvalidFoldCount(k));
    }
    let mut group_of: BTreeMap<(EntityId, EntityId), usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let g = *group_of.entry((ex.head, ex.tail)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let mut rng = rng::stream(seed, rng::purpose::SPLIT);
    let mut part_of_group = alloc::vec![0usize; groups.len()];
    if stratify_by_class {
        let mut by_class: BTreeMap<alloc::string::String, Vec<usize>> = BTreeMap::new();
        for (g, members) in groups.iter().enumerate() {
            by_class.entry(examples[members[0]].label.class_key()).or_default().push(g);
        }
        let mut offset = 0;
        for (class, mut gs) in by_class {
            if gs.len() < k {
                return Err(KgError::ClassTooSmall { class, count: gs.len(), k });
            }
            gs.shuffle(&mut rng);
            for (j, g) in gs.iter().enumerate() {
                part_of_group[*g] = (offset + j) % k;
            }
            offset += gs.len();
        }
    } else {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut rng);
        for (j, g) in order.iter().enumerate() {
            part_of_group[*g] = j % k;
        }
    }

    let mut part_of_example = alloc::vec![0usize; examples.len()];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            part_of_example[i] = part_of_group[g];
        }
    }

    Ok((0..k)
        .map(|fold| {
            let valid_part = if k >= 3 { Some((fold + 1) % k) } else { None };
            let mut split = DatasetSplit { fold, train: Vec::new(), valid: Vec::new(), test: Vec::new() };
            for (i, ex) in examples.iter().enumerate() {
                let p = part_of_example[i];
                if p == fold {
                    split.test.push(ex.clone());
                } else if Some(p) == valid_part {
                    split.valid.push(ex.clone());
                } else {
                    split.train.push(ex.clone());
                }
            }
            split
        })
        .collect())
}
