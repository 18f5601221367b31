//! Term dictionary and bag-of-words extraction.
//!
//! Articles are reduced to counts of dictionary terms by a greedy
//! left-to-right longest-match scan over codepoints; everything the
//! dictionary does not know is skipped.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use crate::error::{Error, Result};

/// Immutable set of recognized terms. Safe to share across threads once
/// loaded.
#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: HashSet<String>,
    max_term_len: usize,
}

impl Lexicon {
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = HashSet::new();
        let mut max_term_len = 0;
        for term in terms {
            let term = term.into();
            if term.is_empty() {
                continue;
            }
            max_term_len = max_term_len.max(term.chars().count());
            set.insert(term);
        }
        if set.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(Self {
            terms: set,
            max_term_len,
        })
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Codepoint length of the longest stored term.
    pub fn max_term_len(&self) -> usize {
        self.max_term_len
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|s| s.as_str())
    }
}

/// Per-article term counts. Keys are always members of the lexicon that
/// produced the bag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BagOfWords {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl BagOfWords {
    /// Builds a bag from explicit counts; zero counts are dropped. The
    /// caller vouches that the terms come from its working dictionary.
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> Self {
        let counts: BTreeMap<String, u64> =
            counts.into_iter().filter(|&(_, c)| c > 0).collect();
        let total = counts.values().sum();
        Self { counts, total }
    }

    pub fn count(&self, term: &str) -> u64 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Entries in lexicographic term order, which keeps every downstream
    /// token expansion reproducible from the bag alone.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    fn bump(&mut self, term: &str) {
        if let Some(c) = self.counts.get_mut(term) {
            *c += 1;
        } else {
            self.counts.insert(term.to_string(), 1);
        }
        self.total += 1;
    }
}

/// Reads one term per line; blank lines are ignored, duplicates collapse.
/// LF and CRLF both work.
pub fn load_lexicon<R: Read>(source: R) -> Result<Lexicon> {
    let mut reader = BufReader::new(source);
    let mut raw = Vec::new();
    let mut terms = Vec::new();
    let mut line_no = 0;
    loop {
        raw.clear();
        line_no += 1;
        let n = reader.read_until(b'\n', &mut raw)?;
        if n == 0 {
            break;
        }
        let line = std::str::from_utf8(&raw).map_err(|_| Error::InvalidUtf8 { line: line_no })?;
        let term = line.trim();
        if !term.is_empty() {
            terms.push(term.to_string());
        }
    }
    Lexicon::new(terms)
}

/// Greedy forward maximum matching: at each codepoint, take the longest
/// lexicon term starting there and advance past it, otherwise advance one
/// codepoint. Matches never overlap; unmatched text is dropped.
pub fn extract_bag(text: &str, lex: &Lexicon) -> BagOfWords {
    let mut bag = BagOfWords::default();
    if lex.is_empty() {
        return bag;
    }
    // Byte offset of every codepoint, plus the end sentinel, so candidate
    // substrings are slices instead of fresh allocations.
    let offsets: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = offsets.len() - 1;
    let mut pos = 0;
    while pos < n_chars {
        let longest = lex.max_term_len().min(n_chars - pos);
        let mut matched = 0;
        for len in (1..=longest).rev() {
            let candidate = &text[offsets[pos]..offsets[pos + len]];
            if lex.contains(candidate) {
                bag.bump(candidate);
                matched = len;
                break;
            }
        }
        pos += if matched > 0 { matched } else { 1 };
    }
    bag
}
