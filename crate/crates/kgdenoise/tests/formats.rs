use kgdenoise::checkpoint::{Checkpoint, CheckpointError, MAGIC};
use kgdenoise::config::{build_config, parse_settings, RunConfigError};
use kgdenoise::jobs::run_jobs;
use kgdenoise::report::{cv_csv, json_lines, sweep_csv, CSV_HEADER};
use kgdenoise::tsv::{self, FormatError};
use kgdenoise_core::harness::synthetic::{generate, SyntheticConfig};
use kgdenoise_core::harness::{CvReport, FoldReport, Metrics, NoiseKind, SweepRow, TrainConfig, Variant};
use kgdenoise_core::kg::{KgBuilder, Label, SmoothClass, TaskMode, UnmappedPolicy};
use kgdenoise_core::pretrain::EmbeddingTable;
use kgdenoise_core::tensor::{ParamStore, Precision, Tensor};
use serde_json::json;

fn graph(src: &str) -> kgdenoise_core::kg::KnowledgeGraph {
    let mut b = KgBuilder::new();
    tsv::parse_triples(&mut b, src, "t.tsv").unwrap();
    b.build()
}

#[test]
fn triples_skip_comments_blank_lines_and_duplicates() {
    let mut b = KgBuilder::new();
    let n = tsv::parse_triples(&mut b, "# header\na\tr\tb\r\n\nb\ts\tc\na\tr\tb\n", "t.tsv").unwrap();
    assert_eq!(n, 2);
    let kg = b.build();
    assert_eq!(kg.num_triples(), 2);
    assert_eq!(kg.num_entities(), 3);
    assert_eq!(kg.relation_name(kg.triples()[1].relation), "s");
}

#[test]
fn malformed_lines_report_their_line_number() {
    let mut b = KgBuilder::new();
    let e = tsv::parse_triples(&mut b, "a\tr\tb\n# c\na\tr\n", "t.tsv").unwrap_err();
    match e {
        FormatError::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let e = tsv::parse_triples(&mut KgBuilder::new(), "a\tr\ta\n", "t.tsv").unwrap_err();
    assert!(matches!(e, FormatError::Kg { line: 1, .. }), "self loop: {e:?}");
}

#[test]
fn types_attach_and_conflicts_fail() {
    let mut b = KgBuilder::new();
    tsv::parse_types(&mut b, "a\tDrug\nb\tGene\n", "ty.tsv").unwrap();
    tsv::parse_triples(&mut b, "a\tr\tb\n", "t.tsv").unwrap();
    let kg = b.build();
    let a = kg.entity_id("a").unwrap();
    assert_eq!(kg.type_name(kg.entity_type(a).unwrap()), "Drug");
    let mut b = KgBuilder::new();
    let e = tsv::parse_types(&mut b, "a\tDrug\na\tGene\n", "ty.tsv").unwrap_err();
    assert!(matches!(e, FormatError::Kg { line: 2, .. }));
}

#[test]
fn smoothing_classes_parse() {
    let m = tsv::parse_smoothing("up\tpositive\nbind\tinteraction\ndown\tnegative\n", "s", UnmappedPolicy::Strict).unwrap();
    assert_eq!(m.class_of("up"), Some(SmoothClass::Positive));
    assert_eq!(m.class_of("bind"), Some(SmoothClass::Interaction));
    assert_eq!(m.class_of("down"), Some(SmoothClass::Negative));
    assert!(tsv::parse_smoothing("x\tneutral\n", "s", UnmappedPolicy::Strict).is_err());
}

#[test]
fn binary_links() {
    let kg = graph("a\tr\tb\nb\tr\tc\n");
    let t = tsv::parse_links(&kg, "a\tc\t1\nb\tc\t0\n", "l", TaskMode::Binary, None).unwrap();
    assert_eq!(t.examples[0].label, Label::Binary(true));
    assert_eq!(t.examples[1].label, Label::Binary(false));
    assert!(t.class_names.is_empty());
    assert!(tsv::parse_links(&kg, "a\tc\t2\n", "l", TaskMode::Binary, None).is_err());
    let e = tsv::parse_links(&kg, "a\tzz\t1\n", "l", TaskMode::Binary, None).unwrap_err();
    assert!(matches!(e, FormatError::Kg { line: 1, .. }));
}

#[test]
fn multi_class_indices_follow_sorted_names() {
    let kg = graph("a\tr\tb\nb\tr\tc\n");
    let t = tsv::parse_links(&kg, "a\tc\tzeta\nb\tc\talpha\n", "l", TaskMode::MultiClass, None).unwrap();
    assert_eq!(t.class_names, vec!["alpha", "zeta"]);
    assert_eq!(t.examples[0].label, Label::Class(1));
    assert_eq!(t.examples[1].label, Label::Class(0));
    assert_eq!(t.num_classes(TaskMode::MultiClass), 2);
    assert!(tsv::parse_links(&kg, "a\tc\tx;y\n", "l", TaskMode::MultiClass, None).is_err());
}

#[test]
fn multi_label_sets_and_empty_negatives() {
    let kg = graph("a\tr\tb\nb\tr\tc\n");
    let t = tsv::parse_links(&kg, "a\tc\tnausea;rash;nausea\nb\tc\t\na\tb\n", "l", TaskMode::MultiLabel, None).unwrap();
    assert_eq!(t.class_names, vec!["nausea", "rash"]);
    assert_eq!(t.examples[0].label, Label::Multi(vec![0, 1]));
    assert_eq!(t.examples[1].label, Label::Multi(vec![]));
    assert_eq!(t.examples[2].label, Label::Multi(vec![]));
    let known = vec!["nausea".to_string()];
    assert!(tsv::parse_links(&kg, "a\tc\trash\n", "l", TaskMode::MultiLabel, Some(&known)).is_err());
}

#[test]
fn metapath_lines() {
    let m = tsv::parse_metapaths("# schema\nDrug\tpositive;~interaction\tTarget\n", "m").unwrap();
    assert_eq!(m, vec![("Drug".into(), "positive;~interaction".into(), "Target".into())]);
    assert!(tsv::parse_metapaths("Drug\t\tTarget\n", "m").is_err());
}

#[test]
fn synthetic_benchmark_round_trips_through_tsv() {
    let b = generate(&SyntheticConfig::default()).unwrap();
    let mut kb = KgBuilder::new();
    tsv::parse_types(&mut kb, &tsv::format_types(&b.kg), "types").unwrap();
    tsv::parse_triples(&mut kb, &tsv::format_triples(&b.kg), "triples").unwrap();
    let kg = kb.build();
    assert_eq!(kg.num_triples(), b.kg.num_triples());
    for t in b.kg.triples() {
        let h = kg.entity_id(b.kg.entity_name(t.head)).unwrap();
        let tail = kg.entity_id(b.kg.entity_name(t.tail)).unwrap();
        let r = kg.relation_id(b.kg.relation_name(t.relation)).unwrap();
        assert!(kg.contains(&kgdenoise_core::kg::Triple::new(h, r, tail)));
    }
    let links = tsv::parse_links(&kg, &tsv::format_links(&b.kg, &b.examples, &[]), "links", TaskMode::Binary, None).unwrap();
    assert_eq!(links.examples.len(), b.examples.len());
    for (a, e) in links.examples.iter().zip(&b.examples) {
        assert_eq!(kg.entity_name(a.head), b.kg.entity_name(e.head));
        assert_eq!(a.label, e.label);
    }
    let sm = tsv::parse_smoothing(&tsv::format_smoothing(&b.smoothing), "s", b.smoothing.unmapped).unwrap();
    assert_eq!(sm, b.smoothing);
}

fn sample_checkpoint() -> Checkpoint {
    let mut ck = Checkpoint::new(json!({"kind": "test", "n": 3}));
    ck.push("w", Tensor::new(vec![2, 3], vec![1.0, -2.5, 1e-300, 0.1, 7.0, -0.0]).unwrap(), Precision::F64, false);
    ck.push("b", Tensor::new(vec![1, 2], vec![0.1, 1.0 / 3.0]).unwrap(), Precision::F32, true);
    ck
}

#[test]
fn checkpoint_layout() {
    let mut buf = Vec::new();
    sample_checkpoint().write_to(&mut buf).unwrap();
    assert_eq!(&buf[..9], b"DLPCKPT1\n");
    assert_eq!(MAGIC, b"DLPCKPT1\n");
    let len = u64::from_le_bytes(buf[9..17].try_into().unwrap()) as usize;
    let manifest: serde_json::Value = serde_json::from_slice(&buf[17..17 + len]).unwrap();
    let t = &manifest["tensors"];
    assert_eq!(t[0]["name"], "w");
    assert_eq!(t[0]["shape"], json!([2, 3]));
    assert_eq!(t[0]["precision"], "f64");
    assert_eq!(t[0]["offset"], 0);
    assert_eq!(t[1]["precision"], "f32");
    assert_eq!(t[1]["offset"], 48);
    let data = &buf[17 + len..];
    assert_eq!(data.len(), 48 + 8);
    assert_eq!(f64::from_le_bytes(data[8..16].try_into().unwrap()), -2.5);
    assert_eq!(f32::from_le_bytes(data[48..52].try_into().unwrap()), 0.1f32);
}

#[test]
fn checkpoint_round_trip() {
    let ck = sample_checkpoint();
    let mut buf = Vec::new();
    ck.write_to(&mut buf).unwrap();
    let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(back, ck);
    let w = &back.get("w").unwrap().value;
    assert_eq!(w.data()[2].to_bits(), 1e-300f64.to_bits());
    assert_eq!(w.data()[5].to_bits(), (-0.0f64).to_bits());
    assert_eq!(back.get("b").unwrap().value.data()[0], 0.1f32 as f64);
    assert!(back.get("b").unwrap().frozen);
    assert_eq!(back.meta["n"], 3);
}

#[test]
fn checkpoint_rejects_damage() {
    let mut buf = Vec::new();
    sample_checkpoint().write_to(&mut buf).unwrap();
    let mut bad = buf.clone();
    bad[3] = b'X';
    assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(CheckpointError::BadMagic)));
    let cut = &buf[..buf.len() - 3];
    assert!(matches!(Checkpoint::read_from(&mut &cut[..]), Err(CheckpointError::Truncated { .. })));
    assert!(Checkpoint::read_from(&mut &b"DLPCKPT"[..]).is_err());
    let mut huge = MAGIC.to_vec();
    huge.extend_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(Checkpoint::read_from(&mut huge.as_slice()), Err(CheckpointError::ManifestLength(_))));
}

#[test]
fn params_and_tables_round_trip() {
    let mut ps = ParamStore::<f64>::new();
    ps.add("layer.weight", Tensor::new(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25]).unwrap()).unwrap();
    ps.add_frozen("embed.entity", Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap()).unwrap();
    let ck = Checkpoint::from_params(&ps, Precision::F64, json!({}));
    let back = ck.to_params().unwrap();
    assert_eq!(back, ps);

    let table = EmbeddingTable::init(5, 2, 4, 3).unwrap();
    let ck = Checkpoint::from_table(&table, json!({"kind": "embeddings"}));
    let mut buf = Vec::new();
    ck.write_to(&mut buf).unwrap();
    let t = Checkpoint::read_from(&mut buf.as_slice()).unwrap().to_table().unwrap();
    assert_eq!(t, table);
}

#[test]
fn config_precedence_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# experiment\nepochs = 7\nhidden_dim=16\n\nmi.lambda = 0.5\n").unwrap();
    let cfg = build_config(Some(&path), &["epochs=9".to_string()]).unwrap();
    assert_eq!(cfg.epochs, 9);
    assert_eq!(cfg.model.hidden_dim, 16);
    assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);

    std::fs::write(&path, "epochs = 7\nwarp.speed = 9\n").unwrap();
    match build_config(Some(&path), &[]).unwrap_err() {
        RunConfigError::Key { origin, .. } => assert!(origin.ends_with(":2"), "{origin}"),
        e => panic!("{e:?}"),
    }
    assert!(matches!(build_config(None, &["nonsense".into()]), Err(RunConfigError::Syntax { .. })));
    assert!(matches!(build_config(None, &["epochs=many".into()]), Err(RunConfigError::Key { .. })));
    assert!(parse_settings("just words\n", "f").is_err());
}

#[test]
fn rendered_config_reloads_identically() {
    let mut cfg = TrainConfig::default();
    cfg.set("lr", "0.003").unwrap();
    cfg.set("ablate.srl", "true").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.cfg");
    std::fs::write(&path, kgdenoise::config::render(&cfg)).unwrap();
    assert_eq!(build_config(Some(&path), &[]).unwrap().entries(), cfg.entries());
}

fn metrics(x: f64) -> Metrics {
    Metrics { auc_roc: x, auc_pr: x / 2.0, micro_f1: 0.75, micro_recall: 0.5 }
}

#[test]
fn cv_csv_rows() {
    let fold = |i: usize, x: f64| FoldReport {
        fold: i,
        metrics: metrics(x),
        best_epoch: 1,
        epochs_run: 2,
        curve: vec![],
        train_size: 1,
        valid_size: 1,
        test_size: 1,
    };
    let r = CvReport::assemble(&TrainConfig::default(), vec![], vec![fold(1, 0.5), fold(0, 1.0)]);
    let text = String::from_utf8(cv_csv(&r).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines[1], "full,none,0,0,1,0.5,0.75,0.5,");
    assert_eq!(lines[2], "full,none,0,1,0.5,0.25,0.75,0.5,");
    assert_eq!(lines[3], "full,none,0,mean,0.75,0.375,0.75,0.5,");
    assert_eq!(lines[4], "full,none,0,std,0.25,0.125,0,0,");
}

#[test]
fn sweep_csv_rows() {
    let row = |ratio: f64, d: Option<f64>| SweepRow {
        variant: Variant::WoSrl,
        kind: NoiseKind::Semantic,
        ratio,
        seeds: 3,
        metrics: metrics(0.8),
        auc_roc_std: 0.0,
        degradation: d,
    };
    let text = String::from_utf8(sweep_csv(&[row(0.0, Some(0.0)), row(0.25, None)]).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "wo_srl,semantic,0,mean,0.8,0.4,0.75,0.5,0");
    assert_eq!(lines[2], "wo_srl,semantic,0.25,mean,0.8,0.4,0.75,0.5,");
}

#[test]
fn json_lines_one_record_per_line() {
    let out = String::from_utf8(json_lines(&[json!({"a": 1}), json!({"b": [1, 2]})]).unwrap()).unwrap();
    assert_eq!(out, "{\"a\":1}\n{\"b\":[1,2]}\n");
}

#[test]
fn jobs_keep_input_order() {
    let items: Vec<u64> = (0..23).collect();
    let f = |x: &u64| {
        std::thread::sleep(std::time::Duration::from_millis((x * 7) % 5));
        x * x
    };
    let serial = run_jobs(&items, 1, f);
    assert_eq!(run_jobs(&items, 4, f), serial);
    assert_eq!(serial[5], 25);
    assert!(run_jobs(&Vec::<u64>::new(), 3, f).is_empty());
}
