mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rumorsage::corpus::Event;
use rumorsage::experiment::{
    compute_metrics, curve_csv, evidence_distribution, refutes_probability, split_dataset, split_sizes, Metrics,
    EARLY_COUNTS,
};
use rumorsage::synthetic::{planted_dataset, random_event, PlantedConfig};

fn dataset(seed: u64, n: usize) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| random_event(&mut rng, &format!("d{i}"), 3, 3)).collect()
}

/// Per-class precision, recall and F1 from scratch, zero on empty ratios.
fn class_prf(pred: &[usize], gold: &[usize], c: usize) -> (f64, f64, f64) {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
    let pp = pred.iter().filter(|p| **p == c).count() as f64;
    let ap = gold.iter().filter(|g| **g == c).count() as f64;
    let p = if pp > 0.0 { tp / pp } else { 0.0 };
    let r = if ap > 0.0 { tp / ap } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn refutes_and_distribution_match_counting(seed in any::<u64>(), n in 1usize..120) {
        let events = dataset(seed, n);
        let (total, rumors, refuted, refuted_rumors) = common::count_refutes(&events);
        let r = refutes_probability(&events).unwrap();
        prop_assert_eq!((r.n_events, r.n_rumor, r.n_refuted, r.n_refuted_rumor), (total, rumors, refuted, refuted_rumors));
        prop_assert_eq!(r.p_rumor, rumors as f64 / total as f64);
        if refuted == 0 {
            prop_assert!(r.p_rumor_given_refuted.is_none() && r.increment.is_none());
        } else {
            let cond = refuted_rumors as f64 / refuted as f64;
            prop_assert_eq!(r.p_rumor_given_refuted, Some(cond));
            prop_assert_eq!(r.increment, Some(cond - rumors as f64 / total as f64));
        }

        let counts = common::count_relations(&events);
        let with_record: usize = counts.iter().sum();
        match evidence_distribution(&events) {
            Ok(d) => {
                prop_assert_eq!(d.counts, counts);
                prop_assert_eq!(d.total, with_record);
                for (f, c) in d.fractions.iter().zip(counts) {
                    prop_assert_eq!(*f, c as f64 / with_record as f64);
                }
            }
            Err(_) => prop_assert_eq!(with_record, 0),
        }
    }

    #[test]
    fn metrics_match_direct_counting(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..200)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = compute_metrics(&pred, &gold).unwrap();
        let correct = pred.iter().zip(&gold).filter(|(p, g)| p == g).count();
        prop_assert_eq!(m.accuracy, correct as f64 / pred.len() as f64);
        let (c0, c1) = (class_prf(&pred, &gold, 0), class_prf(&pred, &gold, 1));
        prop_assert_eq!((m.rumor_precision, m.rumor_recall, m.rumor_f1), c0);
        prop_assert_eq!(m.precision, (c0.0 + c1.0) / 2.0);
        prop_assert_eq!(m.recall, (c0.1 + c1.1) / 2.0);
        prop_assert_eq!(m.f1, (c0.2 + c1.2) / 2.0);
        prop_assert_eq!(m.n, pred.len());
    }

    #[test]
    fn split_is_a_seeded_partition(n in 0usize..3000, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        let s = split_dataset(&ids, seed).unwrap();
        let (tr, va, te) = split_sizes(n);
        prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (tr, va, te));
        prop_assert!((va as f64 - 0.1 * n as f64).abs() <= 0.5);
        prop_assert!((tr as f64 - 0.75 * (n - va) as f64).abs() <= 1.0);
        let all: BTreeSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(split_dataset(&ids, seed).unwrap(), s);
    }
}

#[test]
fn split_sizes_at_reference_counts() {
    assert_eq!(split_sizes(40), (27, 4, 9));
    assert_eq!(split_sizes(100), (68, 10, 22));
    assert_eq!(split_sizes(5802), (3917, 580, 1305));
}

#[test]
fn planted_refutes_increment_is_exact() {
    for seed in [1, 2] {
        let events = planted_dataset(&PlantedConfig::default(), seed);
        let r = refutes_probability(&events).unwrap();
        assert_eq!(r.p_rumor, 0.5);
        assert_eq!(r.p_rumor_given_refuted, Some(1.0));
        assert_eq!(r.increment, Some(0.5));
    }
}

#[test]
fn curve_csv_has_one_row_per_count() {
    let m = Metrics::from_confusion([[3, 1], [0, 4]]);
    let rows: Vec<(usize, Metrics)> = EARLY_COUNTS.iter().map(|&n| (n, m.clone())).collect();
    let csv = curve_csv("replies", &rows);
    let xs: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs, EARLY_COUNTS);
    assert!(csv.starts_with("replies,"));
}
