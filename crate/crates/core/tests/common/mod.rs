//! Independent oracles shared by the integration tests and the acceptance
//! runner. None of them call the code paths they check.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

use rumorsage::corpus::{Event, Relation, RumorLabel, WikiDoc};
use rumorsage::erm::{extract_entities, index_terms};
use rumorsage::model::PreparedEvent;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Term weights keyed by the term string, so iteration is lexicographic.
fn weights(terms: &[String], boosted: &[String], df: &BTreeMap<String, usize>, n_docs: usize) -> BTreeMap<String, f64> {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for t in terms {
        *tf.entry(t.clone()).or_default() += 1;
    }
    tf.into_iter()
        .filter_map(|(t, c)| {
            let d = *df.get(&t)?;
            let boost = if boosted.contains(&t) { 2.0 } else { 1.0 };
            Some((t, c as f64 * (1.0 + n_docs as f64 / (1.0 + d as f64)).ln() * boost))
        })
        .collect()
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let na = a.values().map(|w| w * w).sum::<f64>().sqrt();
    let nb = b.values().map(|w| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(t, w)| b.get(t).map(|v| w * v)).sum();
    dot / (na * nb)
}

/// Exhaustive TF-IDF scorer: every document and every sentence is scored
/// from scratch for each claim.
pub struct BruteForce<'a> {
    docs: &'a [WikiDoc],
    df: BTreeMap<String, usize>,
}

impl<'a> BruteForce<'a> {
    pub fn new(docs: &'a [WikiDoc]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            let mut terms = index_terms(&d.title);
            for s in &d.sentences {
                terms.extend(index_terms(s));
            }
            terms.sort();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        Self { docs, df }
    }

    fn query(&self, claim: &str) -> BTreeMap<String, f64> {
        let boosted: Vec<String> = extract_entities(claim).iter().flat_map(|e| index_terms(e)).collect();
        weights(&index_terms(claim), &boosted, &self.df, self.docs.len())
    }

    fn plain(&self, terms: &[String]) -> BTreeMap<String, f64> {
        weights(terms, &[], &self.df, self.docs.len())
    }

    /// `(title, score)` of the top `k`, by score then title.
    pub fn documents(&self, claim: &str, k: usize) -> Vec<(String, f64)> {
        let q = self.query(claim);
        let mut all: Vec<(String, f64)> = self
            .docs
            .iter()
            .map(|d| {
                let mut terms = index_terms(&d.title);
                for s in &d.sentences {
                    terms.extend(index_terms(s));
                }
                (d.title.clone(), cosine(&q, &self.plain(&terms)))
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    /// `(title, index, score)` of the top `k_e` sentences of `titles`.
    pub fn sentences(&self, claim: &str, titles: &[String], k_e: usize) -> Vec<(String, usize, f64)> {
        let q = self.query(claim);
        let mut all = Vec::new();
        for d in self.docs.iter().filter(|d| titles.contains(&d.title)) {
            for (i, s) in d.sentences.iter().enumerate() {
                all.push((d.title.clone(), i, cosine(&q, &self.plain(&index_terms(s)))));
            }
        }
        all.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)).then_with(|| a.1.cmp(&b.1)));
        all.truncate(k_e);
        all
    }
}

/// Ids of the replies with fewer than `n` replies strictly before them in
/// `(timestamp, id)` order, by pairwise comparison.
pub fn earliest_ids(event: &Event, n: usize) -> Vec<String> {
    let before = |a: &rumorsage::corpus::Post| {
        event
            .replies
            .iter()
            .filter(|b| b.timestamp < a.timestamp || (b.timestamp == a.timestamp && b.id < a.id))
            .count()
    };
    let mut kept: Vec<(usize, String)> = event
        .replies
        .iter()
        .map(|r| (before(r), r.id.clone()))
        .filter(|(rank, _)| *rank < n)
        .collect();
    kept.sort();
    kept.into_iter().map(|(_, id)| id).collect()
}

/// `(events, rumors, refuted, refuted rumors)` by direct counting.
pub fn count_refutes(events: &[Event]) -> (usize, usize, usize, usize) {
    let mut c = (events.len(), 0, 0, 0);
    for e in events {
        let rumor = e.label == RumorLabel::Rumor;
        let refuted = matches!(&e.evidence, Some(r) if r.relation == Relation::Refuted);
        c.1 += rumor as usize;
        c.2 += refuted as usize;
        c.3 += (rumor && refuted) as usize;
    }
    c
}

/// SUPPORTED, REFUTED, NEI counts over events with a record.
pub fn count_relations(events: &[Event]) -> [usize; 3] {
    let mut c = [0; 3];
    for r in events.iter().filter_map(|e| e.evidence.as_ref()) {
        match r.relation {
            Relation::Supported => c[0] += 1,
            Relation::Refuted => c[1] += 1,
            Relation::Nei => c[2] += 1,
        }
    }
    c
}

/// Relabel every non-root node of both graphs at random and shuffle the
/// edge lists. Node 0 is the claim shared by both graphs.
pub fn relabel<R: Rng + ?Sized>(event: &PreparedEvent, rng: &mut R) -> PreparedEvent {
    let n_conv = event.conversation.n_nodes;
    let n_ev = event.n_evidence();

    let mut conv: Vec<usize> = (1..n_conv).collect();
    conv.shuffle(rng);
    let conv_map: Vec<usize> = std::iter::once(0).chain(conv).collect();
    let mut ev: Vec<usize> = (1..=n_ev).collect();
    ev.shuffle(rng);
    let ev_map: Vec<usize> = std::iter::once(0).chain(ev).collect();

    let mut out = event.clone();
    for (old, &new) in conv_map.iter().enumerate().skip(1) {
        out.sentences[new] = event.sentences[old].clone();
    }
    for (old, &new) in ev_map.iter().enumerate().skip(1) {
        out.sentences[n_conv - 1 + new] = event.sentences[n_conv - 1 + old].clone();
    }
    out.conversation.edges = event.conversation.edges.iter().map(|&(a, b)| (conv_map[a], conv_map[b])).collect();
    out.conversation.edges.shuffle(rng);
    out.evidence.edges = event.evidence.edges.iter().map(|&(a, b)| (ev_map[a], ev_map[b])).collect();
    out.evidence.edges.shuffle(rng);
    out
}
