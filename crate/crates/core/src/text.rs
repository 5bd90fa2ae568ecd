//! Text ingestion: tokenizing phrases, building the vocabulary and label
//! set, and encoding phrases as sparse term-frequency vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A raw phrase and its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPhrase {
    pub label: String,
    pub text: String,
}

impl LabeledPhrase {
    pub fn new(label: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let label = label.into();
        let text = text.into();
        if label.trim().is_empty() || text.trim().is_empty() {
            return Err(Error::InvalidParams(
                "label and text must be non-empty".into(),
            ));
        }
        if label.contains(['\t', '\n']) || text.contains(['\t', '\n']) {
            return Err(Error::InvalidParams(
                "label and text must not contain tabs or newlines".into(),
            ));
        }
        Ok(Self { label, text })
    }
}

/// Ordered set of class labels. Ordinals follow lexicographic label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        let labels: Vec<String> = sorted.into_iter().collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Self { labels, index }
    }

    pub fn from_corpus(corpus: &[LabeledPhrase]) -> Self {
        Self::new(corpus.iter().map(|p| p.label.as_str()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ordinal(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn name(&self, ordinal: usize) -> &str {
        &self.labels[ordinal]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Corpus-derived vocabulary; term `i` maps to feature dimension `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit term list. Terms are sorted and
    /// deduplicated.
    pub fn from_terms<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = terms.into_iter().map(Into::into).collect();
        if sorted.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let terms: Vec<String> = sorted.into_iter().collect();
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self { terms, index })
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Sparse term-frequency vector. Entries are sorted by dimension and every
/// stored count is positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    entries: Vec<(usize, u32)>,
    dim: usize,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            dim,
        }
    }

    /// Builds a vector from `(dimension, count)` pairs in any order.
    /// Repeated dimensions are summed and zero counts dropped.
    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, u32)>,
    {
        let mut acc: BTreeMap<usize, u32> = BTreeMap::new();
        for (d, c) in pairs {
            if d >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d + 1,
                });
            }
            *acc.entry(d).or_default() += c;
        }
        Ok(Self {
            entries: acc.into_iter().filter(|&(_, c)| c > 0).collect(),
            dim,
        })
    }

    pub fn from_dense(values: &[u32]) -> Self {
        Self {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(d, &c)| (d, c))
                .collect(),
            dim: values.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Value at `dim`, zero when absent.
    pub fn get(&self, dim: usize) -> u32 {
        match self.entries.binary_search_by_key(&dim, |&(d, _)| d) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(d, c) in &self.entries {
            out[d] = f64::from(c);
        }
        out
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim,
            });
        }
        Ok(())
    }
}

/// A feature vector paired with a class ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub label: usize,
    pub features: FeatureVector,
}

/// Lowercases `text` and splits it on every character that is neither a
/// Unicode letter nor a digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn build_vocabulary(corpus: &[LabeledPhrase]) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_terms(corpus.iter().flat_map(|p| tokenize(&p.text)))
}

/// Counts in-vocabulary tokens. Out-of-vocabulary tokens are dropped.
pub fn vectorize(tokens: &[String], vocab: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for t in tokens {
        if let Some(d) = vocab.get(t) {
            *counts.entry(d).or_default() += 1;
        }
    }
    FeatureVector {
        entries: counts.into_iter().collect(),
        dim: vocab.dim(),
    }
}

pub fn vectorize_text(text: &str, vocab: &Vocabulary) -> FeatureVector {
    vectorize(&tokenize(text), vocab)
}

/// Vectorizes a corpus against a frozen vocabulary and label set.
pub fn vectorize_corpus(
    corpus: &[LabeledPhrase],
    vocab: &Vocabulary,
    labels: &LabelSet,
) -> Result<Vec<LabeledVector>> {
    corpus
        .iter()
        .map(|p| {
            let label = labels
                .ordinal(&p.label)
                .ok_or_else(|| Error::UnknownLabel(p.label.clone()))?;
            Ok(LabeledVector {
                label,
                features: vectorize_text(&p.text, vocab),
            })
        })
        .collect()
}

/// Parses the `label<TAB>text` corpus format.
pub fn parse_corpus(contents: &str) -> Result<Vec<LabeledPhrase>> {
    let mut out = Vec::new();
    for (i, line) in contents.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (label, text) = match (fields.next(), fields.next(), fields.next()) {
            (Some(l), Some(t), None) => (l, t),
            _ => return Err(Error::MalformedLine(i + 1)),
        };
        if label.trim().is_empty() || text.trim().is_empty() {
            return Err(Error::MalformedLine(i + 1));
        }
        out.push(LabeledPhrase {
            label: label.to_string(),
            text: text.to_string(),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledPhrase>> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&contents)
}

pub fn write_corpus(mut w: impl Write, corpus: &[LabeledPhrase]) -> std::io::Result<()> {
    for p in corpus {
        writeln!(w, "{}\t{}", p.label, p.text)?;
    }
    Ok(())
}
