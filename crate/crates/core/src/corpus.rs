//! Tokenized parallel corpora and bilingual dictionaries.
//!
//! Tokens are compared byte-exact; nothing is case folded.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Default sentence length cap, in tokens.
pub const DEFAULT_MAX_LEN: usize = 150;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    /// Longest sentence allowed on either side.
    pub max_len: usize,
}

impl ParallelCorpus {
    /// Builds a corpus from in-memory sentence pairs, truncating each side to
    /// `max_len` tokens.
    pub fn from_pairs<S, T>(pairs: impl IntoIterator<Item = (S, T)>, max_len: usize) -> Result<Self>
    where
        S: IntoIterator,
        S::Item: Into<String>,
        T: IntoIterator,
        T::Item: Into<String>,
    {
        if max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be positive".into()));
        }
        let mut out = Vec::new();
        for (i, (s, t)) in pairs.into_iter().enumerate() {
            let mut source: Vec<String> = s.into_iter().map(Into::into).collect();
            let mut target: Vec<String> = t.into_iter().map(Into::into).collect();
            if source.is_empty() || target.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "sentence pair {i} has an empty side"
                )));
            }
            for tok in source.iter().chain(target.iter()) {
                if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidArgument(format!(
                        "sentence pair {i} contains an invalid token {tok:?}"
                    )));
                }
            }
            source.truncate(max_len);
            target.truncate(max_len);
            out.push(SentencePair { source, target });
        }
        Ok(Self {
            pairs: out,
            max_len,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The corpus with source and target sides exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| SentencePair {
                    source: p.target.clone(),
                    target: p.source.clone(),
                })
                .collect(),
            max_len: self.max_len,
        }
    }
}

/// Loads a sentence-aligned corpus from two space-tokenized files.
///
/// Over-long sentences are truncated to `max_len` tokens (never dropped) so
/// that sentence indices stay synchronized with token streams and
/// alignment files.
pub fn load_parallel_corpus(
    source_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
    max_len: usize,
) -> Result<ParallelCorpus> {
    let source_path = source_path.as_ref();
    let target_path = target_path.as_ref();
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be positive".into()));
    }
    let src = read_lines(source_path)?;
    let tgt = read_lines(target_path)?;
    if src.len() != tgt.len() {
        return Err(Error::Misaligned(format!(
            "{} has {} lines but {} has {}",
            source_path.display(),
            src.len(),
            target_path.display(),
            tgt.len()
        )));
    }

    let mut pairs = Vec::with_capacity(src.len());
    for (i, (s, t)) in src.iter().zip(&tgt).enumerate() {
        let source = tokenize(source_path, i + 1, s)?;
        let target = tokenize(target_path, i + 1, t)?;
        pairs.push((source, target));
    }
    ParallelCorpus::from_pairs(pairs, max_len)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_owned()).collect())
}

fn tokenize(path: &Path, line: usize, text: &str) -> Result<Vec<String>> {
    let toks: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    if toks.is_empty() {
        return Err(Error::parse(path, line, "empty sentence"));
    }
    Ok(toks)
}

/// Gold translation pairs; a source word may have several targets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    entries: Vec<(String, String)>,
    index: HashMap<String, Vec<String>>,
}

impl BilingualDictionary {
    /// Builds a dictionary, dropping exact duplicate pairs and keeping
    /// first-seen order.
    pub fn from_entries<I, S, T>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut dict = Self::default();
        let mut seen = HashSet::new();
        for (s, t) in entries {
            let (s, t) = (s.into(), t.into());
            if seen.insert((s.clone(), t.clone())) {
                dict.index.entry(s.clone()).or_default().push(t.clone());
                dict.entries.push((s, t));
            }
        }
        dict
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All gold targets for `source`, in first-seen order.
    pub fn targets(&self, source: &str) -> &[String] {
        self.index.get(source).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains_source(&self, source: &str) -> bool {
        self.index.contains_key(source)
    }

    pub fn source_count(&self) -> usize {
        self.index.len()
    }
}

/// Reads a MUSE-style dictionary: one `source target` pair per line.
///
/// Blank lines are skipped.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<BilingualDictionary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        entries.push((fields[0], fields[1]));
    }
    Ok(BilingualDictionary::from_entries(entries))
}
