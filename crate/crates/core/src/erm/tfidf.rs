//! TF-IDF index over a wiki snapshot.
//!
//! Terms are the cleaned tokens containing at least one alphanumeric
//! character. Term ids follow lexicographic order, and every sparse vector is
//! sorted by term id, so dot products and norms are accumulated in term
//! order. Weights are raw term frequency times `ln(1 + N / (1 + df))`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::corpus::WikiCorpus;
use crate::text::clean_tokens;

use super::entities::extract_entities;

/// Index terms of a text, in order, with repeats.
pub fn index_terms(text: &str) -> Vec<String> {
    clean_tokens(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    (1.0 + n_docs as f64 / (1.0 + df as f64)).ln()
}

/// Sparse vector sorted by term id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    pub entries: Vec<(usize, f64)>,
    pub norm: f64,
}

impl SparseVec {
    fn from_map(map: BTreeMap<usize, f64>) -> Self {
        let entries: Vec<(usize, f64)> = map.into_iter().collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Self { entries, norm }
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    s += self.entries[i].1 * other.entries[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    /// Cosine similarity; zero when either vector is zero.
    pub fn cosine(&self, other: &SparseVec) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        self.dot(other) / (self.norm * other.norm)
    }
}

/// Claim text plus its extracted entities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub claim: String,
    pub entities: Vec<String>,
}

impl Query {
    pub fn new(claim: &str) -> Self {
        Self {
            claim: claim.to_string(),
            entities: extract_entities(claim),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredDoc {
    pub title: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSentence {
    pub title: String,
    pub index: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Clone, Debug)]
struct IndexedDoc {
    title: String,
    vector: SparseVec,
    sentences: Vec<(String, SparseVec)>,
}

#[derive(Clone, Debug)]
pub struct TfIdfIndex {
    n_docs: usize,
    terms: BTreeMap<String, usize>,
    by_title: BTreeMap<String, usize>,
    df: Vec<usize>,
    docs: Vec<IndexedDoc>,
}

fn counts(terms: &[String]) -> BTreeMap<&str, usize> {
    let mut c = BTreeMap::new();
    for t in terms {
        *c.entry(t.as_str()).or_insert(0) += 1;
    }
    c
}

/// Document text: its title followed by every sentence.
pub fn doc_terms(title: &str, sentences: &[String]) -> Vec<String> {
    let mut terms = index_terms(title);
    for s in sentences {
        terms.extend(index_terms(s));
    }
    terms
}

impl TfIdfIndex {
    pub fn build(corpus: &WikiCorpus) -> Self {
        let doc_terms: Vec<Vec<String>> = corpus
            .docs()
            .iter()
            .map(|d| doc_terms(&d.title, &d.sentences))
            .collect();
        let mut df_by_term: BTreeMap<&str, usize> = BTreeMap::new();
        for terms in &doc_terms {
            for t in counts(terms).keys() {
                *df_by_term.entry(t).or_insert(0) += 1;
            }
        }
        let terms: BTreeMap<String, usize> = df_by_term
            .keys()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i))
            .collect();
        let df: Vec<usize> = df_by_term.values().copied().collect();
        let mut index = Self {
            n_docs: corpus.len(),
            terms,
            by_title: BTreeMap::new(),
            df,
            docs: Vec::with_capacity(corpus.len()),
        };
        for (doc, terms) in corpus.docs().iter().zip(&doc_terms) {
            let vector = index.vectorize(terms, &[]);
            let sentences = doc
                .sentences
                .iter()
                .map(|s| (s.clone(), index.vectorize(&index_terms(s), &[])))
                .collect();
            index.by_title.insert(doc.title.clone(), index.docs.len());
            index.docs.push(IndexedDoc {
                title: doc.title.clone(),
                vector,
                sentences,
            });
        }
        index
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.terms.get(term).copied()
    }

    pub fn df(&self, term: &str) -> usize {
        self.term_id(term).map_or(0, |i| self.df[i])
    }

    /// TF-IDF vector of `terms`; terms in `boosted` get their weight doubled.
    /// Terms outside the index vocabulary are dropped.
    pub fn vectorize(&self, terms: &[String], boosted: &[String]) -> SparseVec {
        let mut map = BTreeMap::new();
        for (t, c) in counts(terms) {
            if let Some(&id) = self.terms.get(t) {
                let boost = if boosted.iter().any(|b| b == t) { 2.0 } else { 1.0 };
                map.insert(id, c as f64 * idf(self.n_docs, self.df[id]) * boost);
            }
        }
        SparseVec::from_map(map)
    }

    /// Query vector: claim terms, with terms of extracted entities doubled.
    pub fn query_vector(&self, query: &Query) -> SparseVec {
        let boosted: Vec<String> = query.entities.iter().flat_map(|e| index_terms(e)).collect();
        self.vectorize(&index_terms(&query.claim), &boosted)
    }

    /// Top `min(k, N)` documents by cosine, ties by title.
    pub fn retrieve_documents(&self, query: &Query, k: usize) -> Vec<ScoredDoc> {
        let q = self.query_vector(query);
        let mut scored: Vec<ScoredDoc> = self
            .docs
            .iter()
            .map(|d| ScoredDoc {
                title: d.title.clone(),
                score: q.cosine(&d.vector),
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.title.cmp(&b.title)));
        scored.truncate(k);
        scored
    }

    /// Top `k_e` sentences of the given documents by cosine to the query,
    /// ties by title then sentence index. Unknown titles are skipped.
    pub fn select_sentences(&self, query: &Query, docs: &[ScoredDoc], k_e: usize) -> Vec<ScoredSentence> {
        if k_e == 0 {
            return Vec::new();
        }
        let q = self.query_vector(query);
        let mut out = Vec::new();
        for sd in docs {
            let Some(&di) = self.by_title.get(&sd.title) else { continue };
            let doc = &self.docs[di];
            for (i, (text, v)) in doc.sentences.iter().enumerate() {
                out.push(ScoredSentence {
                    title: doc.title.clone(),
                    index: i,
                    text: text.clone(),
                    score: q.cosine(v),
                });
            }
        }
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.title.cmp(&b.title))
                .then_with(|| a.index.cmp(&b.index))
        });
        out.truncate(k_e);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WikiDoc;

    fn corpus(docs: &[(&str, &[&str])]) -> WikiCorpus {
        WikiCorpus::new(
            docs.iter()
                .map(|(t, s)| WikiDoc {
                    title: t.to_string(),
                    sentences: s.iter().map(|x| x.to_string()).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn idf_formula() {
        assert_eq!(idf(10, 0), 11f64.ln());
        assert_eq!(idf(10, 4), 3f64.ln());
    }

    #[test]
    fn named_doc_ranks_first() {
        let c = corpus(&[
            ("Paris", &["Paris is the capital of France."]),
            ("Berlin", &["Berlin is the capital of Germany."]),
            ("Rome", &["Rome is old."]),
        ]);
        let idx = TfIdfIndex::build(&c);
        let r = idx.retrieve_documents(&Query::new("Explosion reported in Paris today"), 2);
        assert_eq!(r[0].title, "Paris");
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn no_overlap_gives_lexicographic_titles() {
        let c = corpus(&[("b", &["x y"]), ("a", &["z"]), ("c", &["w"])]);
        let idx = TfIdfIndex::build(&c);
        let r = idx.retrieve_documents(&Query::new("nothing shared"), 5);
        let titles: Vec<_> = r.iter().map(|d| d.title.as_str()).collect();
        assert_eq!(titles, vec!["a", "b", "c"]);
        assert!(r.iter().all(|d| d.score == 0.0));
    }

    #[test]
    fn empty_corpus_returns_nothing() {
        let idx = TfIdfIndex::build(&WikiCorpus::new(vec![]).unwrap());
        assert!(idx.retrieve_documents(&Query::new("anything"), 5).is_empty());
    }

    #[test]
    fn sentence_equal_to_claim_scores_one() {
        let c = corpus(&[("Doc", &["the tower leans north"]), ("Other", &["tower of cards"])]);
        let idx = TfIdfIndex::build(&c);
        let q = Query::new("the tower leans north");
        let docs = idx.retrieve_documents(&q, 1);
        let s = idx.select_sentences(&q, &docs, 5);
        assert_eq!(s.len(), 1);
        assert!((s[0].score - 1.0).abs() < 1e-12);
        assert!(idx.select_sentences(&q, &docs, 0).is_empty());
    }
}
