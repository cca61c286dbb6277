//! Text cleaning, tokenization, vocabulary and pretrained embeddings.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";

pub const DEFAULT_VOCAB_SIZE: usize = 80_000;
pub const DEFAULT_EMBED_DIM: usize = 200;
pub const DEFAULT_MAX_LEN: usize = 50;
pub const OOV_INIT_BOUND: f64 = 0.05;

fn special_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?P<url>(?:https?://|www\.)\S+)|(?P<user>@\w+)").expect("static regex")
    })
}

fn is_sentence_punct(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ',' | ';' | ':')
}

fn push_plain(out: &mut Vec<String>, text: &str) {
    let mut word = String::new();
    let mut last_punct = false;
    let flush = |word: &mut String, out: &mut Vec<String>| {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
            last_punct = false;
        } else if is_sentence_punct(c) {
            flush(&mut word, out);
            if !last_punct {
                out.push(c.to_string());
            }
            last_punct = true;
        } else if c == '\'' || c == '\u{2019}' {
            // apostrophes join: "don't" -> "dont"
        } else {
            flush(&mut word, out);
            if c.is_whitespace() {
                last_punct = false;
            }
        }
    }
    flush(&mut word, out);
}

/// Lowercase, replace URLs with `<url>` and mentions with `<user>`, keep
/// alphanumerics and sentence punctuation (runs collapsed to one mark,
/// split off as separate tokens), drop other symbols, collapse whitespace.
pub fn clean(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut last = 0;
    for cap in special_pattern().captures_iter(&lower) {
        let m = cap.get(0).expect("whole match");
        push_plain(&mut tokens, &lower[last..m.start()]);
        if cap.name("url").is_some() {
            tokens.push(URL_TOKEN.to_string());
        } else {
            tokens.push(USER_TOKEN.to_string());
        }
        last = m.end();
    }
    push_plain(&mut tokens, &lower[last..]);
    tokens.join(" ")
}

/// Whitespace split.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// `tokenize(clean(text))`.
pub fn clean_tokens(text: &str) -> Vec<String> {
    tokenize(&clean(text))
}

/// Token/index bijection with `<pad>` at 0 and `<unk>` at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    max_size: usize,
}

impl Vocab {
    fn with_specials(max_size: usize) -> Self {
        let tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            index,
            tokens,
            max_size,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuild from an ordered token list whose first two entries are the
    /// specials.
    pub fn from_tokens(tokens: Vec<String>, max_size: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::InvalidData("vocabulary must start with <pad>, <unk>".into()));
        }
        if tokens.len() > max_size {
            return Err(Error::InvalidData(format!(
                "vocabulary of {} exceeds max size {max_size}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidData(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self {
            index,
            tokens,
            max_size,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for t in &self.tokens {
            writeln!(w, "{t}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, max_size: usize) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let tokens = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))?;
        Self::from_tokens(tokens, max_size)
    }
}

/// Rank tokens by descending frequency, ties lexicographically, and keep the
/// top `max_size - 2` after the two specials.
pub fn build_vocab<I, S>(corpus: I, max_size: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[String]>,
{
    if max_size < 2 {
        return Err(Error::Config(format!("vocabulary max size {max_size} < 2")));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for seq in corpus {
        for t in seq.as_ref() {
            if t == PAD_TOKEN || t == UNK_TOKEN {
                continue;
            }
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - 2);

    let mut vocab = Vocab::with_specials(max_size);
    for (t, _) in ranked {
        vocab.index.insert(t.clone(), vocab.tokens.len());
        vocab.tokens.push(t);
    }
    Ok(vocab)
}

/// Embedding matrix aligned with a [`Vocab`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub frozen: bool,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// All rows drawn from `U(-0.05, 0.05)`, PAD zero.
    pub fn random(vocab: &Vocab, dim: usize, seed: u64) -> Self {
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
        fill_missing(&mut rows, dim, seed);
        Self::from_rows(rows, dim)
    }

    fn from_rows(rows: Vec<Option<Vec<f64>>>, dim: usize) -> Self {
        let n = rows.len();
        let data = rows.into_iter().flat_map(|r| r.expect("filled")).collect();
        Self {
            matrix: Tensor::matrix(n, dim, data).expect("consistent rows"),
            frozen: true,
        }
    }
}

fn fill_missing(rows: &mut [Option<Vec<f64>>], dim: usize, seed: u64) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, row) in rows.iter_mut().enumerate() {
        if i == PAD {
            *row = Some(vec![0.0; dim]);
        } else if row.is_none() {
            *row = Some(
                (0..dim)
                    .map(|_| rng.random_range(-OOV_INIT_BOUND..=OOV_INIT_BOUND))
                    .collect(),
            );
        }
    }
}

/// Read a GloVe-style text file (`token v1 ... vd` per line). Vocabulary
/// tokens found in the file take its vector (first occurrence wins); UNK
/// and misses are drawn uniformly in ±0.05 from `seed`, in index order;
/// PAD is zero.
pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = i + 1;
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::EmbeddingDimension {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        let Some(idx) = vocab.get(token) else { continue };
        if idx == PAD || rows[idx].is_some() {
            continue;
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                reason: "non-finite embedding value".into(),
            });
        }
        rows[idx] = Some(vector);
    }
    fill_missing(&mut rows, dim, seed);
    Ok(EmbeddingTable::from_rows(rows, dim))
}

/// Token indices padded to a fixed length plus the unpadded length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub indices: Vec<usize>,
    pub len: usize,
}

/// OOV tokens map to UNK; the sequence is truncated to `max_len` and padded
/// with PAD.
pub fn encode_sentence(tokens: &[String], vocab: &Vocab, max_len: usize) -> EncodedSentence {
    let len = tokens.len().min(max_len);
    let mut indices: Vec<usize> = tokens[..len].iter().map(|t| vocab.lookup(t)).collect();
    indices.resize(max_len, PAD);
    EncodedSentence { indices, len }
}
