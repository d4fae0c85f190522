//! Comparator vocabulary shared by the extractor and the bound parser.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Eq => "=",
        }
    }

    /// True for comparators that produce a lower bound (`ge`, `gt`).
    pub fn is_lower(self) -> bool {
        matches!(self, Comparator::Ge | Comparator::Gt)
    }

    /// True for comparators that produce an upper bound (`le`, `lt`).
    pub fn is_upper(self) -> bool {
        matches!(self, Comparator::Le | Comparator::Lt)
    }

    pub fn is_inclusive(self) -> bool {
        matches!(self, Comparator::Ge | Comparator::Le | Comparator::Eq)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Phrases recognised as comparators in criterion text, lowercase.
///
/// `=` is deliberately absent: an equality is accepted by [`crate::parse_bound_text`]
/// but the extractor only types lower and upper bounds.
const EXTRACTION_VOCABULARY: &[(&str, Comparator)] = &[
    (">=", Comparator::Ge),
    ("=>", Comparator::Ge),
    ("≥", Comparator::Ge),
    ("≧", Comparator::Ge),
    ("at least", Comparator::Ge),
    ("no less than", Comparator::Ge),
    ("not less than", Comparator::Ge),
    ("greater than or equal to", Comparator::Ge),
    ("more than or equal to", Comparator::Ge),
    ("equal to or greater than", Comparator::Ge),
    (">", Comparator::Gt),
    ("greater than", Comparator::Gt),
    ("more than", Comparator::Gt),
    ("above", Comparator::Gt),
    ("<=", Comparator::Le),
    ("=<", Comparator::Le),
    ("≤", Comparator::Le),
    ("≦", Comparator::Le),
    ("within", Comparator::Le),
    ("no more than", Comparator::Le),
    ("not more than", Comparator::Le),
    ("less than or equal to", Comparator::Le),
    ("equal to or less than", Comparator::Le),
    ("up to", Comparator::Le),
    ("not exceeding", Comparator::Le),
    ("<", Comparator::Lt),
    ("less than", Comparator::Lt),
    ("below", Comparator::Lt),
];

/// Matches the longest comparator phrase starting at `at` in lowercase text.
///
/// Word phrases must start and end on word boundaries; symbols need not.
/// Returns the comparator and the number of chars consumed.
pub(crate) fn match_at(folded: &[char], at: usize) -> Option<(Comparator, usize)> {
    match_in(folded, at, EXTRACTION_VOCABULARY)
}

/// Same as [`match_at`] but also accepts a bare `=`.
pub(crate) fn match_with_eq(folded: &[char], at: usize) -> Option<(Comparator, usize)> {
    match_at(folded, at).or_else(|| (folded.get(at) == Some(&'=')).then_some((Comparator::Eq, 1)))
}

fn match_in(
    folded: &[char],
    at: usize,
    vocabulary: &[(&str, Comparator)],
) -> Option<(Comparator, usize)> {
    let mut best: Option<(Comparator, usize)> = None;
    for &(phrase, comparator) in vocabulary {
        let len = phrase.chars().count();
        if best.is_some_and(|(_, l)| l >= len) {
            continue;
        }
        if at + len > folded.len() || !phrase.chars().eq(folded[at..at + len].iter().copied()) {
            continue;
        }
        let wordy = phrase.starts_with(|c: char| c.is_alphabetic());
        if wordy {
            let left_ok = at == 0 || !folded[at - 1].is_alphanumeric();
            let right_ok = folded.get(at + len).is_none_or(|c| !c.is_alphanumeric());
            if !(left_ok && right_ok) {
                continue;
            }
        }
        best = Some((comparator, len));
    }
    best
}
