//! Seeded synthetic data: planted-signal rumor datasets, random events for
//! property checks, negation-cue verifier pairs and retrieval corpora.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Event, EvidenceRecord, EvidenceSentence, Post, Relation, RumorLabel, WikiDoc};

/// Token planted in a reply of reply-signalled rumors.
pub const REPLY_CUE: &str = "hoax";
/// Token in every sentence of REFUTED evidence.
pub const REFUTE_CUE: &str = "false";

/// Plain content words `w0 .. w{n-1}`.
pub fn content_words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

fn words<R: Rng + ?Sized>(rng: &mut R, pool: &[String], lo: usize, hi: usize) -> Vec<String> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| pool.choose(rng).expect("non-empty pool").clone()).collect()
}

fn insert_at_random<R: Rng + ?Sized>(rng: &mut R, mut ws: Vec<String>, token: &str) -> String {
    let pos = rng.random_range(0..=ws.len());
    ws.insert(pos, token.to_string());
    ws.join(" ")
}

/// Overwrite one word, keeping the length distribution of cue-free text.
fn replace_at_random<R: Rng + ?Sized>(rng: &mut R, mut ws: Vec<String>, token: &str) -> String {
    let pos = rng.random_range(0..ws.len());
    ws[pos] = token.to_string();
    ws.join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedConfig {
    pub n_events: usize,
    /// Total vocabulary including PAD, UNK and both cue tokens.
    pub vocab_size: usize,
    pub max_replies: usize,
    pub max_evidence: usize,
    /// Probability of flipping each label after generation.
    pub label_noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_events: 400,
            vocab_size: 200,
            max_replies: 6,
            max_evidence: 3,
            label_noise: 0.0,
        }
    }
}

/// Balanced dataset where an event is a rumor iff some reply contains
/// [`REPLY_CUE`] or its evidence is REFUTED (every REFUTED sentence
/// contains [`REFUTE_CUE`]). Non-rumors never contain either cue. Reply and
/// evidence counts are drawn the same way for both classes, so only the
/// cues carry the label.
pub fn planted_dataset(cfg: &PlantedConfig, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = content_words(cfg.vocab_size.saturating_sub(4).max(1));
    let mut labels: Vec<bool> = (0..cfg.n_events).map(|i| i < cfg.n_events / 2).collect();
    labels.shuffle(&mut rng);

    labels
        .iter()
        .enumerate()
        .map(|(i, &rumor)| {
            // 0: reply cue only, 1: refuted evidence only, 2: both.
            let mechanism = if rumor { rng.random_range(0..3) } else { 3 };
            let n_replies = rng.random_range(1..=cfg.max_replies.max(1));
            let mut replies = Vec::with_capacity(n_replies);
            let cue_reply = (mechanism == 0 || mechanism == 2).then(|| rng.random_range(0..n_replies));
            for j in 0..n_replies {
                let parent = if j == 0 || rng.random_bool(0.5) {
                    "s".to_string()
                } else {
                    format!("r{}", rng.random_range(0..j))
                };
                let ws = words(&mut rng, &pool, 2, 6);
                let text = if cue_reply == Some(j) {
                    replace_at_random(&mut rng, ws, REPLY_CUE)
                } else {
                    ws.join(" ")
                };
                replies.push(Post {
                    id: format!("r{j}"),
                    text,
                    timestamp: 10 * (j as i64 + 1),
                    parent_id: Some(parent),
                });
            }

            let refuted = mechanism == 1 || mechanism == 2;
            let n_evidence = rng.random_range(1..=cfg.max_evidence.max(1));
            let relation = if refuted {
                Relation::Refuted
            } else if rng.random_bool(0.5) {
                Relation::Supported
            } else {
                Relation::Nei
            };
            let sentences = (0..n_evidence)
                .map(|k| {
                    let ws = words(&mut rng, &pool, 3, 7);
                    EvidenceSentence {
                        title: format!("Doc{}", rng.random_range(0..50)),
                        index: k,
                        text: if refuted {
                            replace_at_random(&mut rng, ws, REFUTE_CUE)
                        } else {
                            ws.join(" ")
                        },
                    }
                })
                .collect();

            let mut label = if rumor { RumorLabel::Rumor } else { RumorLabel::Nonrumor };
            if cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise) {
                label = RumorLabel::from_class_index(1 - label.class_index());
            }
            Event {
                event_id: format!("ev{i:04}"),
                source: Post {
                    id: "s".into(),
                    text: words(&mut rng, &pool, 3, 8).join(" "),
                    timestamp: 0,
                    parent_id: None,
                },
                replies,
                label,
                evidence: Some(EvidenceRecord { sentences, relation }),
            }
        })
        .collect()
}

/// Random event with a random reply forest: parents may be the source, an
/// earlier reply or a missing id (an orphan); timestamps may tie.
pub fn random_event<R: Rng + ?Sized>(rng: &mut R, event_id: &str, max_replies: usize, max_evidence: usize) -> Event {
    let pool = content_words(30);
    let n = rng.random_range(0..=max_replies);
    let mut replies: Vec<Post> = Vec::with_capacity(n);
    for j in 0..n {
        let parent = match rng.random_range(0..10) {
            0 => format!("missing{j}"),
            1..=3 => "s".to_string(),
            _ if j > 0 => replies[rng.random_range(0..j)].id.clone(),
            _ => "s".to_string(),
        };
        replies.push(Post {
            id: format!("p{}", rng.random_range(0..1_000_000u32) * 1000 + j as u32),
            text: words(rng, &pool, 1, 6).join(" "),
            timestamp: rng.random_range(0..(n as i64 + 1)),
            parent_id: Some(parent),
        });
    }
    replies.shuffle(rng);
    let k = rng.random_range(0..=max_evidence);
    let evidence = (k > 0 || rng.random_bool(0.5)).then(|| EvidenceRecord {
        sentences: (0..k)
            .map(|i| EvidenceSentence {
                title: format!("T{}", rng.random_range(0..5)),
                index: i,
                text: words(rng, &pool, 1, 6).join(" "),
            })
            .collect(),
        relation: *Relation::ALL.choose(rng).expect("non-empty"),
    });
    Event {
        event_id: event_id.to_string(),
        source: Post {
            id: "s".into(),
            text: words(rng, &pool, 1, 6).join(" "),
            timestamp: 0,
            parent_id: None,
        },
        replies,
        label: if rng.random_bool(0.5) { RumorLabel::Rumor } else { RumorLabel::Nonrumor },
        evidence,
    }
}

/// Claim/sentence pairs in equal thirds: SUPPORTED restates the claim,
/// REFUTED restates it with "not" or "never" inserted, NEI is unrelated.
pub fn negation_pairs(n: usize, seed: u64) -> Vec<(String, String, Relation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = content_words(60);
    (0..n)
        .map(|i| {
            let claim = words(&mut rng, &pool, 3, 6);
            let relation = Relation::ALL[i % 3];
            let sentence = match relation {
                Relation::Supported => claim.join(" "),
                Relation::Refuted => {
                    let cue = if rng.random_bool(0.5) { "not" } else { "never" };
                    insert_at_random(&mut rng, claim.clone(), cue)
                }
                Relation::Nei => words(&mut rng, &pool, 3, 6).join(" "),
            };
            (claim.join(" "), sentence, relation)
        })
        .collect()
}

/// Corpus of `n_docs` documents titled `Entity{i}`, each mentioning its
/// title and a few topic words, plus claims that name one document's title
/// in capitals. Returns the docs and `(claim, gold title)` pairs.
pub fn retrieval_fixture(n_docs: usize, n_claims: usize, seed: u64) -> (Vec<WikiDoc>, Vec<(String, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = content_words(400);
    let docs: Vec<WikiDoc> = (0..n_docs)
        .map(|i| {
            let title = format!("Entity{i}");
            let n_sent = rng.random_range(1..=6);
            let sentences = (0..n_sent)
                .map(|s| {
                    let mut ws = words(&mut rng, &pool, 4, 12);
                    if s == 0 || rng.random_bool(0.3) {
                        ws.insert(0, title.clone());
                    }
                    ws.join(" ") + "."
                })
                .collect();
            WikiDoc { title, sentences }
        })
        .collect();
    let claims = (0..n_claims)
        .map(|_| {
            let gold = &docs[rng.random_range(0..docs.len())];
            let mut ws = words(&mut rng, &pool, 3, 8);
            let pos = rng.random_range(0..=ws.len());
            ws.insert(pos, gold.title.clone());
            (ws.join(" "), gold.title.clone())
        })
        .collect();
    (docs, claims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::clean_tokens;

    #[test]
    fn planted_dataset_follows_its_rule() {
        let events = planted_dataset(&PlantedConfig::default(), 1);
        assert_eq!(events.len(), 400);
        let rumors = events.iter().filter(|e| e.label == RumorLabel::Rumor).count();
        assert_eq!(rumors, 200);
        let mut vocab = std::collections::BTreeSet::new();
        for e in &events {
            let reply_cue = e.replies.iter().any(|p| clean_tokens(&p.text).iter().any(|t| t == REPLY_CUE));
            let rec = e.evidence.as_ref().unwrap();
            let refuted = rec.relation == Relation::Refuted;
            assert_eq!(e.label == RumorLabel::Rumor, reply_cue || refuted, "{}", e.event_id);
            if refuted {
                assert!(!rec.sentences.is_empty());
                assert!(rec.sentences.iter().all(|s| s.text.contains(REFUTE_CUE)));
            } else {
                assert!(rec.sentences.iter().all(|s| !s.text.contains(REFUTE_CUE)));
            }
            e.check_reply_chains().unwrap();
            for text in crate::experiment::event_texts(e) {
                vocab.extend(clean_tokens(text));
            }
        }
        assert!(vocab.len() + 2 <= 200);
    }

    #[test]
    fn deterministic() {
        assert_eq!(planted_dataset(&PlantedConfig::default(), 5), planted_dataset(&PlantedConfig::default(), 5));
        assert_eq!(negation_pairs(30, 2), negation_pairs(30, 2));
    }
}
