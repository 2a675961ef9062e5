//! Summary CSVs and JSON-lines records.
//!
//! Nothing time-dependent is written here, so reruns produce identical files.

use std::io::Write;

use kgdenoise_core::harness::{CvReport, Metrics, SweepRow};

pub const CSV_HEADER: [&str; 9] =
    ["variant", "noise_kind", "ratio", "fold", "auc_roc", "auc_pr", "micro_f1", "micro_recall", "degradation"];

fn metric_fields(m: &Metrics) -> [String; 4] {
    [m.auc_roc.to_string(), m.auc_pr.to_string(), m.micro_f1.to_string(), m.micro_recall.to_string()]
}

fn write_csv(rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// One row per fold, then `mean` and `std` rows. The run is on the clean
/// graph, so the noise kind is `none` and the ratio `0`.
pub fn cv_csv(report: &CvReport) -> Result<Vec<u8>, csv::Error> {
    let row = |fold: String, m: &Metrics| {
        let mut r = vec![report.variant.clone(), "none".into(), "0".into(), fold];
        r.extend(metric_fields(m));
        r.push(String::new());
        r
    };
    let mut rows: Vec<Vec<String>> = report.folds.iter().map(|f| row(f.fold.to_string(), &f.metrics)).collect();
    rows.push(row("mean".into(), &report.mean));
    rows.push(row("std".into(), &report.std));
    write_csv(rows)
}

/// One row per `(variant, ratio)` holding the seed mean.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>, csv::Error> {
    write_csv(rows.iter().map(|r| {
        let mut out = vec![r.variant.name().to_string(), r.kind.name().to_string(), r.ratio.to_string(), "mean".into()];
        out.extend(metric_fields(&r.metrics));
        out.push(r.degradation.map(|d| d.to_string()).unwrap_or_default());
        out
    }))
}

/// Serialise each record on its own line.
pub fn json_lines<T: serde::Serialize>(records: &[T]) -> Result<Vec<u8>, serde_json::Error> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").expect("writing to a Vec");
    }
    Ok(out)
}
