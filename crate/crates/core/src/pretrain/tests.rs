use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use super::*;
use crate::kg::KgBuilder;

fn one_dim_table(head: (f64, f64), phase: f64, tail: (f64, f64)) -> EmbeddingTable {
    EmbeddingTable { dim: 1, entity: vec![head.0, head.1, tail.0, tail.1], phase: vec![phase] }
}

fn t(h: u32, r: u32, x: u32) -> Triple {
    Triple::new(EntityId(h), RelationId(r), EntityId(x))
}

#[test]
fn score_identity_rotation() {
    let table = one_dim_table((1.0, 0.0), 0.0, (1.0, 0.0));
    assert_eq!(rotate_score(&t(0, 0, 1), &table).unwrap(), 0.0);
}

#[test]
fn score_quarter_turn() {
    let table = one_dim_table((1.0, 0.0), FRAC_PI_2, (0.0, 1.0));
    assert!(rotate_score(&t(0, 0, 1), &table).unwrap() < 1e-15);
}

#[test]
fn score_quarter_turn_mismatch() {
    let table = one_dim_table((1.0, 0.0), FRAC_PI_2, (1.0, 0.0));
    assert!((rotate_score(&t(0, 0, 1), &table).unwrap() - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn score_unknown_ids() {
    let table = one_dim_table((1.0, 0.0), 0.0, (1.0, 0.0));
    assert_eq!(rotate_score(&t(0, 0, 5), &table), Err(PretrainError::UnknownEntity(5)));
    assert_eq!(rotate_score(&t(0, 3, 1), &table), Err(PretrainError::UnknownRelation(3)));
}

#[test]
fn wrap_phase_range() {
    assert_eq!(wrap_phase(PI), PI);
    assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
    assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
    assert!((wrap_phase(2.5 * PI) - 0.5 * PI).abs() < 1e-12);
    assert!((wrap_phase(-2.5 * PI) + 0.5 * PI).abs() < 1e-12);
}

#[test]
fn score_gradient_matches_finite_differences() {
    let table = EmbeddingTable::init(3, 2, 4, 9).unwrap();
    let tr = t(0, 1, 2);
    let mut g_ent = vec![0.0; table.entity.len()];
    let mut g_ph = vec![0.0; table.phase.len()];
    score_backward(&tr, &table, 1.0, &mut g_ent, &mut g_ph);
    let eps = 1e-6;
    for i in 0..table.entity.len() {
        let (mut p, mut m) = (table.clone(), table.clone());
        p.entity[i] += eps;
        m.entity[i] -= eps;
        let fd = (rotate_score(&tr, &p).unwrap() - rotate_score(&tr, &m).unwrap()) / (2.0 * eps);
        assert!((fd - g_ent[i]).abs() < 1e-7, "entity {i}: {fd} vs {}", g_ent[i]);
    }
    for i in 0..table.phase.len() {
        let (mut p, mut m) = (table.clone(), table.clone());
        p.phase[i] += eps;
        m.phase[i] -= eps;
        let fd = (rotate_score(&tr, &p).unwrap() - rotate_score(&tr, &m).unwrap()) / (2.0 * eps);
        assert!((fd - g_ph[i]).abs() < 1e-7, "phase {i}: {fd} vs {}", g_ph[i]);
    }
}

#[test]
fn negative_sample_forced_choice() {
    let mut b = KgBuilder::new();
    b.declare_reflexive("r");
    b.add_named("a", "r", "b").unwrap();
    b.add_named("b", "r", "b").unwrap();
    let kg = b.build();
    // head side: (b, r, b) is known; tail side leaves only (a, r, a)
    let got = negative_sample(&t(0, 0, 1), &kg, 1, 3).unwrap();
    assert_eq!(got, vec![t(0, 0, 0)]);
}

#[test]
fn negative_sample_exhausted() {
    let mut b = KgBuilder::new();
    b.add_named("a", "r", "b").unwrap();
    let kg = b.build();
    assert_eq!(negative_sample(&t(0, 0, 1), &kg, 1, 0), Err(PretrainError::CandidatesExhausted(0, 0, 1)));
    assert_eq!(negative_sample(&t(0, 0, 1), &kg, 0, 0), Err(PretrainError::NoNegatives));
}

fn ring_kg(n: usize, rels: usize) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    for i in 0..n {
        for r in 0..rels {
            b.add_named(&format!("e{i}"), &format!("r{r}"), &format!("e{}", (i + 1 + r) % n)).unwrap();
        }
    }
    b.build()
}

#[test]
fn negative_sample_membership_and_determinism() {
    let kg = ring_kg(12, 2);
    for seed in 0..10 {
        let tr = kg.triples()[seed as usize];
        let negs = negative_sample(&tr, &kg, 50, seed).unwrap();
        assert_eq!(negs, negative_sample(&tr, &kg, 50, seed).unwrap());
        for n in &negs {
            assert!(!kg.contains(n));
            assert_eq!(n.relation, tr.relation);
            assert!(n.head == tr.head || n.tail == tr.tail);
            assert_ne!(n.head, n.tail);
        }
    }
}

#[test]
fn zero_epochs_is_initialization() {
    let kg = ring_kg(5, 1);
    let cfg = PretrainConfig { dim: 6, epochs: 0, seed: 4, ..PretrainConfig::default() };
    let (table, hist) = pretrain(&kg, &cfg).unwrap();
    assert_eq!(table, EmbeddingTable::init(5, 1, 6, 4).unwrap());
    assert!(hist.epoch_loss.is_empty());
}

#[test]
fn pretrain_errors() {
    let kg = KgBuilder::new().build();
    assert_eq!(pretrain(&kg, &PretrainConfig::default()).unwrap_err(), PretrainError::EmptyGraph);
    let kg = ring_kg(4, 1);
    let cfg = PretrainConfig { dim: 0, ..PretrainConfig::default() };
    assert_eq!(pretrain(&kg, &cfg).unwrap_err(), PretrainError::ZeroDim);
}

#[test]
fn cycle_positives_score_below_random_negatives() {
    let mut b = KgBuilder::new();
    for (h, x) in [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")] {
        b.add_named(h, "next", x).unwrap();
    }
    let kg = b.build();
    let cfg = PretrainConfig { dim: 8, epochs: 200, lr: 0.02, seed: 1, ..PretrainConfig::default() };
    let (table, hist) = pretrain(&kg, &cfg).unwrap();
    assert_eq!(hist.epoch_loss.len(), 200);
    let pos: f64 = kg.triples().iter().map(|tr| rotate_score(tr, &table).unwrap()).sum::<f64>() / 4.0;
    let mut rng = rng::stream(99, 0);
    let mut neg = 0.0;
    for _ in 0..100 {
        let tr = kg.triples()[rng.gen_range(0..4)];
        neg += rotate_score(&corrupt_one(&kg, &tr, &mut rng).unwrap(), &table).unwrap();
    }
    neg /= 100.0;
    assert!(pos < neg, "positive {pos} vs negative {neg}");
}

#[test]
fn pretrain_bitwise_deterministic() {
    let kg = ring_kg(10, 2);
    let cfg = PretrainConfig { dim: 4, epochs: 15, batch_size: 7, seed: 5, ..PretrainConfig::default() };
    let a = pretrain(&kg, &cfg).unwrap();
    let b = pretrain(&kg, &cfg).unwrap();
    assert_eq!(a, b);
    let bits = |t: &EmbeddingTable| t.entity.iter().chain(&t.phase).map(|x| x.to_bits()).collect::<Vec<u64>>();
    assert_eq!(bits(&a.0), bits(&b.0));
}

#[test]
fn unit_modulus_after_every_epoch() {
    let kg = ring_kg(8, 3);
    for epochs in 1..=6 {
        let cfg = PretrainConfig { dim: 5, epochs, lr: 0.3, seed: 2, ..PretrainConfig::default() };
        let (table, _) = pretrain(&kg, &cfg).unwrap();
        assert!(table.max_modulus_error() < 1e-6);
        assert!(table.phase.iter().all(|&p| p > -PI && p <= PI));
        assert!(table.all_finite());
    }
}

#[test]
fn full_batch_loss_is_monotone() {
    let kg = ring_kg(6, 2);
    let cfg = PretrainConfig {
        dim: 4,
        epochs: 60,
        lr: 1e-4,
        batch_size: usize::MAX,
        resample_negatives: false,
        seed: 3,
        ..PretrainConfig::default()
    };
    let (_, hist) = pretrain(&kg, &cfg).unwrap();
    for w in hist.epoch_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
    assert!(hist.epoch_loss.last().unwrap() < hist.epoch_loss.first().unwrap());
}

#[test]
fn adversarial_weighting_trains() {
    let kg = ring_kg(6, 1);
    let cfg = PretrainConfig { dim: 4, epochs: 30, adversarial_temperature: Some(1.0), ..PretrainConfig::default() };
    let (table, hist) = pretrain(&kg, &cfg).unwrap();
    assert!(table.all_finite());
    assert!(hist.epoch_loss.iter().all(|l| l.is_finite()));
}

#[test]
fn tensor_round_trip() {
    let table = EmbeddingTable::init(4, 3, 5, 0).unwrap();
    let back = EmbeddingTable::from_tensors(&table.entity_tensor(), &table.phase_tensor()).unwrap();
    assert_eq!(back, table);
}

proptest! {
    #[test]
    fn prop_global_rotation_invariance(seed in any::<u64>(), theta in -PI..PI, dim in 1usize..8) {
        let table = EmbeddingTable::init(4, 2, dim, seed).unwrap();
        let (c, s) = (theta.cos(), theta.sin());
        let mut rotated = table.clone();
        for pair in rotated.entity.chunks_mut(2) {
            let (re, im) = (pair[0], pair[1]);
            pair[0] = re * c - im * s;
            pair[1] = re * s + im * c;
        }
        for h in 0..4 {
            for x in 0..4 {
                for r in 0..2 {
                    let tr = t(h, r, x);
                    let a = rotate_score(&tr, &table).unwrap();
                    let b = rotate_score(&tr, &rotated).unwrap();
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn prop_scores_nonnegative(seed in any::<u64>(), dim in 1usize..6) {
        let table = EmbeddingTable::init(3, 2, dim, seed).unwrap();
        prop_assert!(rotate_score(&t(0, 1, 2), &table).unwrap() >= 0.0);
        prop_assert!(table.max_modulus_error() < 1e-12);
    }
}
