use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{prepare_views, train_fold, Dataset, HarnessError, Metrics, TrainConfig, Variant};
use crate::kg::{inject_semantic_noise, inject_structural_noise, kfold_split, KgError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Structural,
    Semantic,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Structural => "structural",
            NoiseKind::Semantic => "semantic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "structural" => Some(NoiseKind::Structural),
            "semantic" => Some(NoiseKind::Semantic),
            _ => None,
        }
    }
}

/// One contaminated graph: every requested variant trains on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
    pub variant: Variant,
    pub metrics: Metrics,
}

/// Mean over seeds for one `(variant, ratio)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seeds: usize,
    pub metrics: Metrics,
    pub auc_roc_std: f64,
    /// `(AUC_0 - AUC_ratio) / AUC_0`; absent without a ratio-0 row.
    pub degradation: Option<f64>,
}

/// Cells in ratio-major, then seed order.
pub fn sweep_cells(kind: NoiseKind, ratios: &[f64], seeds: &[u64]) -> Result<Vec<SweepCell>, HarnessError> {
    let mut out = Vec::new();
    for &ratio in ratios {
        if !ratio.is_finite() || ratio < 0.0 {
            return Err(KgError::InvalidRatio(ratio).into());
        }
        for &seed in seeds {
            out.push(SweepCell { kind, ratio, seed });
        }
    }
    Ok(out)
}

/// Contaminate the graph, re-pretrain, and train every variant on fold 0 of
/// a seed-specific split. Test examples are never touched by the noise.
pub fn run_cell(
    data: &Dataset,
    cell: &SweepCell,
    variants: &[Variant],
    cfg: &TrainConfig,
) -> Result<Vec<CellResult>, HarnessError> {
    let noisy = match cell.kind {
        NoiseKind::Structural => inject_structural_noise(&data.kg, cell.ratio, cell.seed)?,
        NoiseKind::Semantic => inject_semantic_noise(&data.kg, cell.ratio, cell.seed)?,
    };
    let mut cfg = cfg.clone();
    cfg.seed = cell.seed;
    cfg.pretrain.seed = cell.seed;
    let split = kfold_split(&data.examples, cfg.folds, cell.seed, cfg.stratify)?.swap_remove(0);
    let (views, _) = prepare_views(data, &noisy, &cfg)?;
    let mut out = Vec::new();
    for &variant in variants {
        let mut vc = cfg.clone();
        vc.model.ablate = variant.ablation();
        let fold = train_fold(&views, &split, data.task, data.num_classes, &vc)?;
        out.push(CellResult { kind: cell.kind, ratio: cell.ratio, seed: cell.seed, variant, metrics: fold.report.metrics });
    }
    Ok(out)
}

/// Average over seeds and attach degradation ratios. Rows follow the order
/// of `variants`, then ascending ratio.
pub fn assemble_sweep(variants: &[Variant], results: &[CellResult]) -> Vec<SweepRow> {
    let mut groups: BTreeMap<(Variant, NoiseKind, u64), Vec<Metrics>> = BTreeMap::new();
    for r in results {
        groups.entry((r.variant, r.kind, r.ratio.to_bits())).or_default().push(r.metrics);
    }
    let mut rows = Vec::new();
    for &v in variants {
        let mut mine: Vec<SweepRow> = groups
            .iter()
            .filter(|((gv, _, _), _)| *gv == v)
            .map(|(&(variant, kind, bits), ms)| {
                let aucs: Vec<f64> = ms.iter().map(|m| m.auc_roc).collect();
                SweepRow {
                    variant,
                    kind,
                    ratio: f64::from_bits(bits),
                    seeds: ms.len(),
                    metrics: Metrics::mean(ms),
                    auc_roc_std: super::mean_std(&aucs).1,
                    degradation: None,
                }
            })
            .collect();
        mine.sort_by(|a, b| a.kind.cmp(&b.kind).then(a.ratio.total_cmp(&b.ratio)));
        for i in 0..mine.len() {
            let base = mine.iter().find(|r| r.kind == mine[i].kind && r.ratio == 0.0).map(|r| r.metrics.auc_roc);
            mine[i].degradation = base.map(|b| if b == 0.0 { 0.0 } else { (b - mine[i].metrics.auc_roc) / b });
        }
        rows.extend(mine);
    }
    rows
}
