mod common;

use proptest::prelude::*;

use rumorsage::corpus::{Event, Post, RumorLabel, WikiCorpus};
use rumorsage::erm::{run_erm, ErmOptions, Query, TfIdfIndex};
use rumorsage::exec::Executor;
use rumorsage::synthetic::retrieval_fixture;

fn check_against_brute_force(n_docs: usize, n_claims: usize, seed: u64, k: usize, k_e: usize) {
    let (docs, claims) = retrieval_fixture(n_docs, n_claims, seed);
    let index = TfIdfIndex::build(&WikiCorpus::new(docs.clone()).unwrap());
    let oracle = common::BruteForce::new(&docs);
    for (claim, _) in &claims {
        let q = Query::new(claim);
        let got = index.retrieve_documents(&q, k);
        let want = oracle.documents(claim, k);
        let got_docs: Vec<(String, f64)> = got.iter().map(|d| (d.title.clone(), d.score)).collect();
        assert_eq!(got_docs, want, "{claim}");

        let titles: Vec<String> = want.iter().map(|d| d.0.clone()).collect();
        let got: Vec<(String, usize, f64)> =
            index.select_sentences(&q, &got, k_e).into_iter().map(|s| (s.title, s.index, s.score)).collect();
        assert_eq!(got, oracle.sentences(claim, &titles, k_e), "{claim}");
    }
}

#[test]
fn thousand_docs_match_exhaustive_scoring() {
    check_against_brute_force(1000, 100, 11, 5, 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn small_corpora_match_exhaustive_scoring(seed in any::<u64>(), n_docs in 1usize..40, k in 0usize..8, k_e in 0usize..8) {
        check_against_brute_force(n_docs, 10, seed, k, k_e);
    }
}

#[test]
fn gold_document_recall_floor() {
    let (docs, claims) = retrieval_fixture(1000, 200, 3);
    let index = TfIdfIndex::build(&WikiCorpus::new(docs).unwrap());
    let hits = claims
        .iter()
        .filter(|(claim, gold)| index.retrieve_documents(&Query::new(claim), 5).iter().any(|d| &d.title == gold))
        .count();
    assert!(hits as f64 / claims.len() as f64 >= 0.9, "{hits}/200");
}

#[test]
fn pipeline_is_independent_of_worker_count() {
    let (docs, claims) = retrieval_fixture(200, 40, 8);
    let index = TfIdfIndex::build(&WikiCorpus::new(docs).unwrap());
    let events: Vec<Event> = claims
        .iter()
        .enumerate()
        .map(|(i, (c, _))| Event {
            event_id: format!("c{i}"),
            source: Post { id: "s".into(), text: c.clone(), timestamp: 0, parent_id: None },
            replies: vec![],
            label: RumorLabel::Rumor,
            evidence: None,
        })
        .collect();
    let opts = ErmOptions::default();
    let a = run_erm(&events, &index, &opts, None, &Executor::sequential()).unwrap();
    let b = run_erm(&events, &index, &opts, None, &Executor::new(4).unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.sentences.len() <= opts.k_evidence));
}
