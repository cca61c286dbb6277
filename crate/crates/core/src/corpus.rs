//! Rumor events, the encyclopedia snapshot, and retrieved evidence, each
//! stored as one JSON record per line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RumorLabel {
    Rumor,
    Nonrumor,
}

impl RumorLabel {
    /// Class index used by the classifier: rumor = 0, non-rumor = 1.
    pub fn class_index(self) -> usize {
        match self {
            RumorLabel::Rumor => 0,
            RumorLabel::Nonrumor => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 0 {
            RumorLabel::Rumor
        } else {
            RumorLabel::Nonrumor
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "SUPPORTED")]
    Supported,
    #[serde(rename = "REFUTED")]
    Refuted,
    #[serde(rename = "NEI")]
    Nei,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Supported, Relation::Refuted, Relation::Nei];

    pub fn class_index(self) -> usize {
        match self {
            Relation::Supported => 0,
            Relation::Refuted => 1,
            Relation::Nei => 2,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        Self::ALL[i.min(2)]
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Relation::Supported => "SUPPORTED",
            Relation::Refuted => "REFUTED",
            Relation::Nei => "NEI",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSentence {
    pub title: String,
    pub index: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvidenceRecord {
    pub sentences: Vec<EvidenceSentence>,
    pub relation: Relation,
}

impl EvidenceRecord {
    pub fn empty() -> Self {
        Self {
            sentences: Vec::new(),
            relation: Relation::Nei,
        }
    }
}

/// A claim (source post), its replies, the rumor label and, once retrieval
/// has run, the attached evidence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub event_id: String,
    pub source: Post,
    pub replies: Vec<Post>,
    pub label: RumorLabel,
    pub evidence: Option<EvidenceRecord>,
}

impl Event {
    /// Replies ordered by `(timestamp, id)`.
    pub fn sorted_replies(&self) -> Vec<&Post> {
        let mut r: Vec<&Post> = self.replies.iter().collect();
        r.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
        r
    }

    /// The `min(n, |replies|)` earliest replies by `(timestamp, id)`.
    pub fn earliest_replies(&self, n: usize) -> Vec<&Post> {
        let mut r = self.sorted_replies();
        r.truncate(n);
        r
    }

    /// Ids of replies whose parent is neither the source nor another reply.
    pub fn orphan_ids(&self) -> Vec<&str> {
        let known: HashSet<&str> = std::iter::once(self.source.id.as_str())
            .chain(self.replies.iter().map(|p| p.id.as_str()))
            .collect();
        self.replies
            .iter()
            .filter(|p| match &p.parent_id {
                Some(parent) => !known.contains(parent.as_str()),
                None => true,
            })
            .map(|p| p.id.as_str())
            .collect()
    }

    pub fn post_count(&self) -> usize {
        1 + self.replies.len()
    }

    /// Follow every non-orphan reply's parent chain; a chain that revisits a
    /// post without reaching the source is a cycle.
    pub fn check_reply_chains(&self) -> Result<()> {
        let parent: HashMap<&str, Option<&str>> = self
            .replies
            .iter()
            .map(|p| (p.id.as_str(), p.parent_id.as_deref()))
            .collect();
        for reply in &self.replies {
            let mut seen = vec![reply.id.as_str()];
            let mut cur = reply.id.as_str();
            while let Some(Some(next)) = parent.get(cur) {
                if *next == self.source.id {
                    break;
                }
                if !parent.contains_key(next) {
                    break; // orphan chain, attaches to the root
                }
                if seen.contains(next) {
                    let start = seen.iter().position(|s| s == next).unwrap();
                    return Err(Error::ReplyCycle(
                        seen[start..].iter().map(|s| s.to_string()).collect(),
                    ));
                }
                seen.push(next);
                cur = next;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventSchema {
    PhemeLike,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub events: usize,
    pub posts: usize,
    pub orphans: usize,
}

#[derive(Clone, Debug)]
pub struct LoadedEvents {
    pub events: Vec<Event>,
    pub stats: LoadStats,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    event_id: String,
    label: RumorLabel,
    posts: Vec<Post>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn event_from_line(path: &Path, line_no: usize, rec: EventLine) -> Result<Event> {
    if rec.event_id.is_empty() {
        return Err(malformed(path, line_no, "empty event_id"));
    }
    let mut ids = HashSet::new();
    for p in &rec.posts {
        if p.id.is_empty() {
            return Err(malformed(path, line_no, "empty post id"));
        }
        if !ids.insert(p.id.as_str()) {
            return Err(Error::DuplicatePostId(p.id.clone()));
        }
    }
    let mut source = None;
    let mut replies = Vec::with_capacity(rec.posts.len().saturating_sub(1));
    for p in rec.posts {
        if p.parent_id.is_none() {
            if source.is_some() {
                return Err(malformed(path, line_no, "more than one post without parent_id"));
            }
            source = Some(p);
        } else {
            replies.push(p);
        }
    }
    let source = source.ok_or_else(|| malformed(path, line_no, "no source post"))?;
    let event = Event {
        event_id: rec.event_id,
        source,
        replies,
        label: rec.label,
        evidence: None,
    };
    event
        .check_reply_chains()
        .map_err(|e| malformed(path, line_no, e.to_string()))?;
    Ok(event)
}

/// Load events in file order. Orphan replies are kept and counted.
pub fn load_events(path: &Path, schema: EventSchema) -> Result<LoadedEvents> {
    let EventSchema::PhemeLike = schema;
    let mut events = Vec::new();
    let mut stats = LoadStats::default();
    let mut seen = HashSet::new();
    for (line_no, line) in lines(path)? {
        let rec: EventLine =
            serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        let event = event_from_line(path, line_no, rec)?;
        if !seen.insert(event.event_id.clone()) {
            return Err(Error::DuplicateEventId(event.event_id));
        }
        stats.events += 1;
        stats.posts += event.post_count();
        stats.orphans += event.orphan_ids().len();
        events.push(event);
    }
    Ok(LoadedEvents { events, stats })
}

/// Write events in the same line format `load_events` reads. The source post
/// is written first, then replies in stored order.
pub fn save_events(events: &[Event], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for e in events {
        let rec = EventLine {
            event_id: e.event_id.clone(),
            label: e.label,
            posts: std::iter::once(e.source.clone())
                .chain(e.replies.iter().cloned())
                .collect(),
        };
        write_json_line(&mut w, path, &rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json_line<T: Serialize>(w: &mut impl Write, path: &Path, rec: &T) -> Result<()> {
    let s = serde_json::to_string(rec).map_err(|e| Error::InvalidData(e.to_string()))?;
    writeln!(w, "{s}").map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiDoc {
    pub title: String,
    pub sentences: Vec<String>,
}

/// Encyclopedia snapshot with a title index.
#[derive(Clone, Debug, Default)]
pub struct WikiCorpus {
    docs: Vec<WikiDoc>,
    by_title: HashMap<String, usize>,
}

impl WikiCorpus {
    pub fn new(docs: Vec<WikiDoc>) -> Result<Self> {
        let mut by_title = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.sentences.is_empty() {
                return Err(Error::InvalidData(format!("document `{}` has no sentences", d.title)));
            }
            if let Some(s) = d.sentences.iter().position(|s| s.trim().is_empty()) {
                return Err(Error::InvalidData(format!(
                    "document `{}` sentence {s} is empty",
                    d.title
                )));
            }
            if by_title.insert(d.title.clone(), i).is_some() {
                return Err(Error::DuplicateTitle(d.title.clone()));
            }
        }
        Ok(Self { docs, by_title })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[WikiDoc] {
        &self.docs
    }

    pub fn doc(&self, title: &str) -> Option<&WikiDoc> {
        self.by_title.get(title).map(|&i| &self.docs[i])
    }

    pub fn sentence(&self, title: &str, index: usize) -> Option<&str> {
        self.doc(title)
            .and_then(|d| d.sentences.get(index))
            .map(String::as_str)
    }
}

pub fn load_wiki_corpus(path: &Path) -> Result<WikiCorpus> {
    let mut docs = Vec::new();
    let mut titles = HashSet::new();
    for (line_no, line) in lines(path)? {
        let doc: WikiDoc =
            serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        if doc.sentences.is_empty() {
            return Err(malformed(path, line_no, "empty sentence list"));
        }
        if doc.sentences.iter().any(|s| s.trim().is_empty()) {
            return Err(malformed(path, line_no, "empty sentence"));
        }
        if !titles.insert(doc.title.clone()) {
            return Err(Error::DuplicateTitle(doc.title));
        }
        docs.push(doc);
    }
    WikiCorpus::new(docs)
}

pub fn save_wiki_corpus(corpus: &WikiCorpus, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for d in corpus.docs() {
        write_json_line(&mut w, path, d)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct EvidenceLine {
    event_id: String,
    relation: Relation,
    sentences: Vec<EvidenceSentence>,
}

/// Write the evidence of every event that has one, in event order.
pub fn save_evidence(events: &[Event], path: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    for e in events {
        if !seen.insert(e.event_id.as_str()) {
            return Err(Error::DuplicateEventId(e.event_id.clone()));
        }
    }
    let mut w = create(path)?;
    for e in events {
        if let Some(ev) = &e.evidence {
            let rec = EvidenceLine {
                event_id: e.event_id.clone(),
                relation: ev.relation,
                sentences: ev.sentences.clone(),
            };
            write_json_line(&mut w, path, &rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load evidence records keyed by event id. When `corpus` is given, every
/// `(title, index)` reference must resolve in it.
pub fn load_evidence(
    path: &Path,
    corpus: Option<&WikiCorpus>,
) -> Result<BTreeMap<String, EvidenceRecord>> {
    let mut out = BTreeMap::new();
    for (line_no, line) in lines(path)? {
        let rec: EvidenceLine =
            serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        if let Some(c) = corpus {
            for s in &rec.sentences {
                if c.sentence(&s.title, s.index).is_none() {
                    return Err(Error::UnresolvedReference {
                        title: s.title.clone(),
                        index: s.index,
                    });
                }
            }
        }
        let record = EvidenceRecord {
            sentences: rec.sentences,
            relation: rec.relation,
        };
        if out.insert(rec.event_id.clone(), record).is_some() {
            return Err(Error::DuplicateEventId(rec.event_id));
        }
    }
    Ok(out)
}

/// Attach loaded evidence to events by id. Events without a record get none.
pub fn attach_evidence(events: &mut [Event], evidence: &BTreeMap<String, EvidenceRecord>) {
    for e in events {
        e.evidence = evidence.get(&e.event_id).cloned();
    }
}

/// One labelled claim/sentence pair for verifier training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub claim: String,
    pub sentence: String,
    pub relation: Relation,
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    for (line_no, line) in lines(path)? {
        let rec: PairRecord =
            serde_json::from_str(&line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        if rec.claim.trim().is_empty() || rec.sentence.trim().is_empty() {
            return Err(malformed(path, line_no, "empty claim or sentence"));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_pairs(pairs: &[PairRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for p in pairs {
        write_json_line(&mut w, path, p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
