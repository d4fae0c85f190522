//! Lexical grammar for numeric threshold expressions.
//!
//! Operates on lowercase char slices produced by [`crate::lexicon::fold_chars`],
//! so every returned offset is also a char offset into the original text.
//!
//! ```text
//! bound     := number ( uln_multiple | unit? alternate? )
//! uln_mult  := ("x" | "×" | "*" | "times")? "the"? "institutional"? uln_phrase ("(uln)")?
//! unit      := (sign? "10" ("^" | "e")? digits)? unit_token
//! alternate := "(" number unit? ")"
//! ```

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BoundMatch {
    pub start: usize,
    pub end: usize,
    pub magnitude: f64,
    /// Char range of the unit text, if any.
    pub unit: Option<(usize, usize)>,
    pub uln: bool,
    /// Char range inside a parenthesized alternate representation.
    pub alternate: Option<(usize, usize)>,
}

const ULN_PHRASES: &[&str] = &[
    "upper limit of normal",
    "upper limits of normal",
    "upper limit of the normal range",
    "upper limit of normal range",
    "upper normal limit",
    "upper limit normal",
    "normal institutional limits",
    "normal institutional limit",
    "institutional normal limits",
    "normal limits",
    "normal limit",
    "uln",
];

const UNIT_PHRASES: &[&str] = &["units per liter", "units per litre", "international units per liter"];

const UNIT_WORDS: &[&str] = &[
    "mg", "g", "kg", "mcg", "ug", "ng", "ml", "l", "dl", "mmol", "umol", "µmol", "iu", "u", "units",
    "years", "year", "yrs", "months", "month", "weeks", "week", "days", "day", "hours", "cells",
    "mmhg", "bpm", "ms", "msec", "seconds", "cm", "mm", "k", "%",
];

pub(crate) fn skip_ws(folded: &[char], mut i: usize) -> usize {
    while i < folded.len() && folded[i].is_whitespace() {
        i += 1;
    }
    i
}

/// Matches `phrase` at `i`, letting each space in the phrase match a
/// whitespace run. Alphabetic phrase ends must fall on a word boundary.
pub(crate) fn literal(folded: &[char], i: usize, phrase: &str) -> Option<usize> {
    let mut j = i;
    for p in phrase.chars() {
        if p == ' ' {
            if !folded.get(j).is_some_and(|c| c.is_whitespace()) {
                return None;
            }
            j = skip_ws(folded, j);
        } else if folded.get(j) == Some(&p) {
            j += 1;
        } else {
            return None;
        }
    }
    let ends_alpha = phrase.chars().last().is_some_and(|c| c.is_alphanumeric());
    if ends_alpha && folded.get(j).is_some_and(|c| c.is_alphanumeric()) {
        return None;
    }
    Some(j)
}

/// Parses an unsigned decimal with optional `,` thousands grouping.
pub(crate) fn number_at(folded: &[char], at: usize) -> Option<(usize, f64)> {
    let digit = |i: usize| folded.get(i).is_some_and(|c| c.is_ascii_digit());
    if at > 0 && (folded[at - 1].is_ascii_digit() || folded[at - 1] == '.') {
        return None;
    }
    let mut i = at;
    let mut text = String::new();
    while digit(i) {
        text.push(folded[i]);
        i += 1;
        if folded.get(i) == Some(&',') && (1..=3).all(|k| digit(i + k)) && !digit(i + 4) {
            i += 1;
        }
    }
    if folded.get(i) == Some(&'.') && digit(i + 1) {
        text.push('.');
        i += 1;
        while digit(i) {
            text.push(folded[i]);
            i += 1;
        }
    }
    if text.is_empty() || text == "." {
        return None;
    }
    text.parse::<f64>().ok().map(|v| (i, v))
}

fn multiplication_sign(folded: &[char], i: usize) -> Option<usize> {
    match folded.get(i) {
        Some('x') if !folded.get(i + 1).is_some_and(|c| c.is_alphabetic()) => Some(i + 1),
        Some('×') | Some('*') => Some(i + 1),
        _ => literal(folded, i, "times"),
    }
}

fn uln_multiple(folded: &[char], after_number: usize) -> Option<usize> {
    let mut j = skip_ws(folded, after_number);
    if let Some(k) = multiplication_sign(folded, j) {
        j = skip_ws(folded, k);
    }
    for optional in ["the ", "institutional ", "the institutional "] {
        if let Some(k) = literal(folded, j, optional) {
            j = k;
        }
    }
    let end = ULN_PHRASES.iter().find_map(|p| literal(folded, j, p))?;
    let k = skip_ws(folded, end);
    for suffix in ["(uln)", "(institutional uln)"] {
        if let Some(e) = literal(folded, k, suffix) {
            return Some(e);
        }
    }
    Some(end)
}

fn scientific_factor(folded: &[char], i: usize) -> Option<usize> {
    let mut j = i;
    if let Some(k) = multiplication_sign(folded, j) {
        j = skip_ws(folded, k);
    }
    j = literal(folded, j, "10").or_else(|| {
        // `10` immediately followed by a superscript or caret is not a word end
        (folded.get(j) == Some(&'1') && folded.get(j + 1) == Some(&'0')).then_some(j + 2)
    })?;
    match folded.get(j) {
        Some('^') | Some('e') => {
            j += 1;
            let start = j;
            while folded.get(j).is_some_and(|c| c.is_ascii_digit()) {
                j += 1;
            }
            (j > start).then_some(j)
        }
        Some(c) if is_superscript_digit(*c) => {
            while folded.get(j).is_some_and(|c| is_superscript_digit(*c)) {
                j += 1;
            }
            Some(j)
        }
        _ => None,
    }
}

pub(crate) fn is_superscript_digit(c: char) -> bool {
    matches!(c, '⁰' | '¹' | '²' | '³' | '⁴' | '⁵' | '⁶' | '⁷' | '⁸' | '⁹')
}

fn unit_token(folded: &[char], i: usize) -> Option<usize> {
    if let Some(end) = UNIT_PHRASES.iter().find_map(|p| literal(folded, i, p)) {
        return Some(end);
    }
    let mut j = i;
    while j < folded.len() && !folded[j].is_whitespace() && !";,()[]".contains(folded[j]) {
        j += 1;
    }
    while j > i && matches!(folded[j - 1], '.' | ':') {
        j -= 1;
    }
    if j == i {
        return None;
    }
    let token: String = folded[i..j].iter().collect();
    if token.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    let head = token.split('/').next().unwrap_or_default();
    let is_unit = if matches!(head, "and" | "or") {
        false
    } else {
        token.contains(['/', '%', '^']) || UNIT_WORDS.contains(&token.as_str())
    };
    is_unit.then_some(j)
}

fn unit_at(folded: &[char], after_number: usize) -> Option<(usize, usize)> {
    let start = skip_ws(folded, after_number);
    if let Some(factor_end) = scientific_factor(folded, start) {
        let tail = skip_ws(folded, factor_end);
        let end = if folded.get(tail) == Some(&'/') {
            unit_token(folded, tail).unwrap_or(factor_end)
        } else {
            factor_end
        };
        return Some((start, end));
    }
    unit_token(folded, start).map(|end| (start, end))
}

fn alternate_at(folded: &[char], i: usize) -> Option<(usize, (usize, usize))> {
    let open = skip_ws(folded, i);
    if folded.get(open) != Some(&'(') {
        return None;
    }
    let inner = skip_ws(folded, open + 1);
    number_at(folded, inner)?;
    let close = (inner..folded.len().min(inner + 48))
        .take_while(|&k| !matches!(folded[k], '(' | ';'))
        .find(|&k| folded[k] == ')')?;
    let mut inner_end = close;
    while inner_end > inner && folded[inner_end - 1].is_whitespace() {
        inner_end -= 1;
    }
    Some((close + 1, (inner, inner_end)))
}

/// Matches a threshold expression (magnitude plus unit or ULN multiple)
/// starting exactly at `at`.
pub(crate) fn bound_at(folded: &[char], at: usize) -> Option<BoundMatch> {
    let (number_end, magnitude) = number_at(folded, at)?;
    if let Some(end) = uln_multiple(folded, number_end) {
        return Some(BoundMatch {
            start: at,
            end,
            magnitude,
            unit: None,
            uln: true,
            alternate: None,
        });
    }
    let unit = unit_at(folded, number_end);
    let mut end = unit.map_or(number_end, |(_, e)| e);
    let mut alternate = None;
    if let Some((alt_end, inner)) = alternate_at(folded, end) {
        alternate = Some(inner);
        end = alt_end;
    }
    Some(BoundMatch {
        start: at,
        end,
        magnitude,
        unit,
        uln: false,
        alternate,
    })
}
