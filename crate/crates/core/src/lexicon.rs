//! Term dictionary with case-insensitive longest-match lookup.
//!
//! File format, one entry per line (`#` starts a comment):
//!
//! ```text
//! term
//! term|canonical
//! term|canonical|type
//! term||type
//! ```
//!
//! A missing type defaults to `clinical_variable`; a missing canonical leaves
//! name standardization to the synonym table.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::extraction::EntityType;

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub term: String,
    pub canonical: Option<String>,
    pub entity_type: EntityType,
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<char, usize>,
    entry: Option<usize>,
}

/// A lexicon match in char offsets of the searched text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TermMatch {
    pub start: usize,
    pub end: usize,
    pub entry: usize,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    nodes: Vec<Node>,
}

const BUILTIN: &str = include_str!("../data/lexicon.txt");

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon {
            entries: Vec::new(),
            nodes: vec![Node::default()],
        }
    }

    /// The shipped default vocabulary (common oncology lab variables plus
    /// disease and treatment terms).
    pub fn builtin() -> Self {
        Self::parse(BUILTIN, "builtin lexicon").expect("builtin lexicon is well-formed")
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Self {
        let mut lexicon = Self::empty();
        for entry in entries {
            lexicon.insert(entry);
        }
        lexicon
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut lexicon = Self::empty();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('|').map(str::trim);
            let term = cols.next().unwrap_or_default();
            let canonical = cols.next().filter(|c| !c.is_empty()).map(str::to_lowercase);
            let entity_type = match cols.next().filter(|c| !c.is_empty()) {
                None => EntityType::ClinicalVariable,
                Some(t) => t.parse().map_err(|_| Error::Ingest {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: format!("unknown entity type {t:?}"),
                })?,
            };
            if term.is_empty() || cols.next().is_some() {
                return Err(Error::Ingest {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: "expected term|canonical|type".into(),
                });
            }
            lexicon.insert(LexiconEntry {
                term: term.to_string(),
                canonical,
                entity_type,
            });
        }
        Ok(lexicon)
    }

    /// Adds an entry; a term already present is replaced.
    pub fn insert(&mut self, entry: LexiconEntry) {
        let key = fold_term(&entry.term);
        if key.is_empty() {
            return;
        }
        let mut node = 0;
        for c in key.chars() {
            node = match self.nodes[node].children.get(&c) {
                Some(&next) => next,
                None => {
                    self.nodes.push(Node::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(c, next);
                    next
                }
            };
        }
        match self.nodes[node].entry {
            Some(existing) => self.entries[existing] = entry,
            None => {
                self.entries.push(entry);
                self.nodes[node].entry = Some(self.entries.len() - 1);
            }
        }
    }

    pub fn extend(&mut self, other: &Lexicon) {
        for entry in &other.entries {
            self.insert(entry.clone());
        }
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &LexiconEntry {
        &self.entries[idx]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up a term exactly (case- and whitespace-insensitive).
    pub fn get(&self, term: &str) -> Option<&LexiconEntry> {
        let folded: Vec<char> = fold_term(term).chars().collect();
        match self.longest_at(&folded, 0) {
            Some((end, entry)) if end == folded.len() => Some(&self.entries[entry]),
            _ => None,
        }
    }

    /// Longest term starting at `start` that ends on a word boundary.
    fn longest_at(&self, folded: &[char], start: usize) -> Option<(usize, usize)> {
        let mut node = 0;
        let mut best = None;
        let mut i = start;
        while i < folded.len() {
            let c = folded[i];
            if c.is_whitespace() {
                let Some(&next) = self.nodes[node].children.get(&' ') else {
                    break;
                };
                node = next;
                while i < folded.len() && folded[i].is_whitespace() {
                    i += 1;
                }
            } else {
                let Some(&next) = self.nodes[node].children.get(&c) else {
                    break;
                };
                node = next;
                i += 1;
            }
            if let Some(entry) = self.nodes[node].entry {
                let boundary = folded.get(i).is_none_or(|c| !c.is_alphanumeric())
                    || !folded[i - 1].is_alphanumeric();
                if boundary {
                    best = Some((i, entry));
                }
            }
        }
        best
    }

    /// All non-overlapping matches in `folded` (lowercased, one char per
    /// source char), skipping positions flagged in `blocked`.
    ///
    /// Candidates are the longest term at each word-start position; conflicts
    /// resolve by longest match, then leftmost. Output is ordered by start.
    pub(crate) fn find_matches(&self, folded: &[char], blocked: &[bool]) -> Vec<TermMatch> {
        let mut candidates = Vec::new();
        for start in 0..folded.len() {
            let at_word_start = start == 0
                || !folded[start - 1].is_alphanumeric()
                || !folded[start].is_alphanumeric();
            if !at_word_start || folded[start].is_whitespace() {
                continue;
            }
            if let Some((end, entry)) = self.longest_at(folded, start) {
                if !blocked[start..end].iter().any(|&b| b) {
                    candidates.push(TermMatch { start, end, entry });
                }
            }
        }
        candidates.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)));
        let mut taken = vec![false; folded.len()];
        let mut accepted = Vec::new();
        for m in candidates {
            if taken[m.start..m.end].iter().any(|&t| t) {
                continue;
            }
            taken[m.start..m.end].iter_mut().for_each(|t| *t = true);
            accepted.push(m);
        }
        accepted.sort_by_key(|m| m.start);
        accepted
    }
}

/// Lowercases per char (keeping a 1:1 char mapping) and collapses whitespace.
pub(crate) fn fold_chars(text: &str) -> Vec<char> {
    text.chars().map(fold_char).collect()
}

pub(crate) fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn fold_term(term: &str) -> String {
    term.split_whitespace()
        .map(|w| w.chars().map(fold_char).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon(terms: &[&str]) -> Lexicon {
        Lexicon::from_entries(terms.iter().map(|t| LexiconEntry {
            term: t.to_string(),
            canonical: None,
            entity_type: EntityType::ClinicalVariable,
        }))
    }

    fn matched<'a>(lex: &'a Lexicon, text: &str) -> Vec<&'a str> {
        let folded = fold_chars(text);
        lex.find_matches(&folded, &vec![false; folded.len()])
            .into_iter()
            .map(|m| lex.entry(m.entry).term.as_str())
            .collect()
    }

    #[test]
    fn longest_match_beats_contained_term() {
        let lex = lexicon(&["neutrophil", "absolute neutrophil count", "count"]);
        assert_eq!(matched(&lex, "Absolute Neutrophil Count >= 1500"), ["absolute neutrophil count"]);
    }

    #[test]
    fn longest_then_leftmost_on_overlap() {
        let lex = lexicon(&["a b", "b c"]);
        assert_eq!(matched(&lex, "a b c"), ["a b"]);
    }

    #[test]
    fn respects_word_boundaries() {
        let lex = lexicon(&["ast"]);
        assert!(matched(&lex, "at least 3 weeks").is_empty());
        assert_eq!(matched(&lex, "AST <= 1.5 x ULN"), ["ast"]);
        assert_eq!(matched(&lex, "(AST)"), ["ast"]);
    }

    #[test]
    fn whitespace_runs_match_single_space() {
        let lex = lexicon(&["total bilirubin"]);
        assert_eq!(matched(&lex, "total \t bilirubin"), ["total bilirubin"]);
    }

    #[test]
    fn parse_columns_and_defaults() {
        let lex = Lexicon::parse("# comment\nANC|absolute neutrophil count\ncirrhosis||disease\nplatelets\n", "t").unwrap();
        assert_eq!(lex.len(), 3);
        let anc = lex.get("anc").unwrap();
        assert_eq!(anc.canonical.as_deref(), Some("absolute neutrophil count"));
        assert_eq!(anc.entity_type, EntityType::ClinicalVariable);
        assert_eq!(lex.get("Cirrhosis").unwrap().entity_type, EntityType::Disease);
    }

    #[test]
    fn parse_rejects_unknown_type() {
        let err = Lexicon::parse("foo||gene\n", "t").unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
    }

    #[test]
    fn builtin_loads() {
        let lex = Lexicon::builtin();
        assert!(lex.get("hemoglobin").is_some());
        assert_eq!(lex.get("CYP3A4 inhibitors").unwrap().entity_type, EntityType::Treatment);
    }
}
