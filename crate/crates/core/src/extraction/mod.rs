//! Eligibility-criteria segmentation and typed entity extraction.
//!
//! Extraction is a deterministic lexicon plus comparator grammar: clinical
//! variables, diseases and treatments come from longest-match lexicon lookup,
//! and numeric expressions that follow a comparator become lower or upper
//! bounds. Spans are half-open char offsets into the sentence text.

pub(crate) mod grammar;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::comparator::{self, Comparator};
use crate::error::{Error, Result};
use crate::lexicon::{fold_chars, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    One,
    Two,
    Three,
    Four,
    NotApplicable,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::One => "1",
            Phase::Two => "2",
            Phase::Three => "3",
            Phase::Four => "4",
            Phase::NotApplicable => "NA",
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .collect::<String>()
            .to_ascii_uppercase();
        let key = key.strip_prefix("PHASE").unwrap_or(&key);
        match key {
            "1" | "I" => Ok(Phase::One),
            "2" | "II" => Ok(Phase::Two),
            "3" | "III" => Ok(Phase::Three),
            "4" | "IV" => Ok(Phase::Four),
            "NA" | "N/A" | "" => Ok(Phase::NotApplicable),
            _ => Err(format!("unknown trial phase {s:?}")),
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => n.to_string().parse(),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// One trial's metadata and raw eligibility text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default = "default_phase")]
    pub phase: Phase,
    #[serde(default)]
    pub condition: String,
    #[serde(default)]
    pub enrollment_start: Option<NaiveDate>,
    #[serde(default)]
    pub enrollment_end: Option<NaiveDate>,
    #[serde(default)]
    pub inclusion_text: String,
    #[serde(default)]
    pub exclusion_text: String,
}

fn default_phase() -> Phase {
    Phase::NotApplicable
}

impl TrialRecord {
    /// Checks the record-level invariants (id shape, enrollment ordering).
    pub fn validate(&self) -> std::result::Result<(), String> {
        let id = self.trial_id.as_str();
        let well_formed = id.len() == 11
            && id.starts_with("NCT")
            && id[3..].bytes().all(|b| b.is_ascii_digit());
        if !well_formed {
            return Err(format!("trial_id {id:?} does not match NCT########"));
        }
        if let (Some(start), Some(end)) = (self.enrollment_start, self.enrollment_end) {
            if start > end {
                return Err(format!("enrollment_start {start} is after enrollment_end {end}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Inclusion,
    Exclusion,
}

/// Half-open `[start, end)` range of char offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// The substring of `text` covered by this span, in chars.
    pub fn slice(&self, text: &str) -> String {
        text.chars().skip(self.start).take(self.len()).collect()
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef {
    pub trial_id: String,
    pub section: Section,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionSentence {
    pub trial_id: String,
    pub section: Section,
    pub ordinal: usize,
    pub text: String,
    /// Range in the section text covered by this sentence, list marker included.
    pub source_span: Span,
}

impl CriterionSentence {
    pub fn sentence_ref(&self) -> SentenceRef {
        SentenceRef {
            trial_id: self.trial_id.clone(),
            section: self.section,
            ordinal: self.ordinal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    ClinicalVariable,
    LowerBound,
    UpperBound,
    Disease,
    Cancer,
    ChronicDisease,
    Treatment,
}

impl EntityType {
    pub const ALL: [EntityType; 7] = [
        EntityType::ClinicalVariable,
        EntityType::LowerBound,
        EntityType::UpperBound,
        EntityType::Disease,
        EntityType::Cancer,
        EntityType::ChronicDisease,
        EntityType::Treatment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::ClinicalVariable => "clinical_variable",
            EntityType::LowerBound => "lower_bound",
            EntityType::UpperBound => "upper_bound",
            EntityType::Disease => "disease",
            EntityType::Cancer => "cancer",
            EntityType::ChronicDisease => "chronic_disease",
            EntityType::Treatment => "treatment",
        }
    }

    pub fn is_bound(self) -> bool {
        matches!(self, EntityType::LowerBound | EntityType::UpperBound)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| format!("unknown entity type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub sentence_ref: SentenceRef,
    pub span: Span,
    pub entity_type: EntityType,
    pub raw_text: String,
    /// Lexicon canonical name for lexical entities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<String>,
    /// Comparator that introduced a bound entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator: Option<Comparator>,
    /// Index of the `;`-delimited clause containing the entity.
    pub clause: usize,
}

/// Splits a trial's criteria into sentences at newlines, bullet markers and
/// numbered-list markers. Ordinals restart at 0 in each section.
pub fn segment_criteria(trial: &TrialRecord) -> Result<Vec<CriterionSentence>> {
    if trial.inclusion_text.trim().is_empty() && trial.exclusion_text.trim().is_empty() {
        return Err(Error::EmptyCriteria {
            trial_id: trial.trial_id.clone(),
        });
    }
    let mut sentences = Vec::new();
    for (section, text) in [
        (Section::Inclusion, &trial.inclusion_text),
        (Section::Exclusion, &trial.exclusion_text),
    ] {
        for (ordinal, (source_span, text)) in split_section(text).into_iter().enumerate() {
            sentences.push(CriterionSentence {
                trial_id: trial.trial_id.clone(),
                section,
                ordinal,
                text,
                source_span,
            });
        }
    }
    Ok(sentences)
}

const INLINE_BULLETS: &[char] = &['•', '·', '▪', '◦', '●', '‣'];
const LINE_BULLETS: &[char] = &['-', '*', '+', '–', '—'];

fn split_section(text: &str) -> Vec<(Span, String)> {
    let chars: Vec<char> = text.chars().collect();
    let mut pieces = Vec::new();
    let mut piece_start = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' || c == '\r' {
            pieces.push((piece_start, i, true));
            piece_start = i + 1;
        } else if INLINE_BULLETS.contains(&c) && i > piece_start {
            pieces.push((piece_start, i, false));
            piece_start = i;
        }
    }
    pieces.push((piece_start, chars.len(), true));

    let mut out = Vec::new();
    let mut line_start = true;
    for (start, end, ends_line) in pieces {
        let mut s = start;
        while s < end && chars[s].is_whitespace() {
            s += 1;
        }
        let mut e = end;
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            let marker = list_marker(&chars[s..e], line_start);
            let mut content = s + marker;
            while content < e && chars[content].is_whitespace() {
                content += 1;
            }
            if content == e {
                content = s;
            }
            out.push((Span::new(s, e), chars[content..e].iter().collect()));
        }
        line_start = ends_line;
    }
    out
}

/// Length in chars of a list marker at the start of `piece`, or 0.
fn list_marker(piece: &[char], line_start: bool) -> usize {
    let followed_by_space = |n: usize| piece.get(n).is_none_or(|c| c.is_whitespace());
    let first = piece[0];
    if INLINE_BULLETS.contains(&first) {
        return 1;
    }
    if !line_start {
        return 0;
    }
    if LINE_BULLETS.contains(&first) && followed_by_space(1) {
        return 1;
    }
    // "(1)", "(a)", "(iv)"
    if first == '(' {
        let close = piece.iter().position(|&c| c == ')').unwrap_or(0);
        let inner = &piece[1..close.max(1)];
        if close > 1 && close <= 5 && is_enumerator(inner) && followed_by_space(close + 1) {
            return close + 1;
        }
        return 0;
    }
    // "1.", "12)", "a)", "iv."
    let run = piece.iter().take_while(|c| c.is_ascii_alphanumeric()).count();
    if (1..=4).contains(&run)
        && matches!(piece.get(run), Some('.') | Some(')'))
        && followed_by_space(run + 1)
        && is_enumerator(&piece[..run])
    {
        return run + 1;
    }
    0
}

fn is_enumerator(token: &[char]) -> bool {
    let all = |f: fn(&char) -> bool| token.iter().all(f);
    (token.len() <= 3 && all(char::is_ascii_digit))
        || (token.len() == 1 && token[0].is_ascii_alphabetic())
        || all(|c| matches!(c, 'i' | 'v' | 'x'))
}

/// Extracts typed entities from one sentence, ordered by span start.
pub fn extract_entities(sentence: &CriterionSentence, lexicon: &Lexicon) -> Vec<ExtractedEntity> {
    let chars: Vec<char> = sentence.text.chars().collect();
    let folded = fold_chars(&sentence.text);
    let sentence_ref = sentence.sentence_ref();
    let clause_of = |pos: usize| chars[..pos].iter().filter(|&&c| c == ';').count();
    let text_of = |span: Span| chars[span.start..span.end].iter().collect::<String>();

    let mut entities = Vec::new();
    let mut blocked = vec![false; chars.len()];
    let mut i = 0;
    while i < folded.len() {
        let Some((cmp, len)) = comparator::match_at(&folded, i) else {
            i += 1;
            continue;
        };
        let mut j = grammar::skip_ws(&folded, i + len);
        if folded.get(j) == Some(&':') {
            j = grammar::skip_ws(&folded, j + 1);
        }
        let Some(bound) = grammar::bound_at(&folded, j) else {
            i += len;
            continue;
        };
        blocked[i..bound.end].iter_mut().for_each(|b| *b = true);
        let span = Span::new(bound.start, bound.end);
        entities.push(ExtractedEntity {
            sentence_ref: sentence_ref.clone(),
            span,
            entity_type: if cmp.is_lower() {
                EntityType::LowerBound
            } else {
                EntityType::UpperBound
            },
            raw_text: text_of(span),
            canonical: None,
            comparator: Some(cmp),
            clause: clause_of(span.start),
        });
        i = bound.end;
    }

    for m in lexicon.find_matches(&folded, &blocked) {
        let entry = lexicon.entry(m.entry);
        let span = Span::new(m.start, m.end);
        entities.push(ExtractedEntity {
            sentence_ref: sentence_ref.clone(),
            span,
            entity_type: entry.entity_type,
            raw_text: text_of(span),
            canonical: entry.canonical.clone(),
            comparator: None,
            clause: clause_of(span.start),
        });
    }
    entities.sort_by_key(|e| (e.span.start, e.span.end));
    entities
}

/// A clinical variable with the bound entities attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBounds {
    pub variable: ExtractedEntity,
    pub bounds: Vec<ExtractedEntity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttachedBounds {
    pub variables: Vec<VariableBounds>,
    /// Bounds with no clinical variable before them in their clause.
    pub unattached: Vec<ExtractedEntity>,
}

/// Attaches each bound to the nearest preceding clinical variable of the
/// same `;`-clause. Non-variable, non-bound entities are ignored.
pub fn attach_bounds(entities: &[ExtractedEntity]) -> AttachedBounds {
    let mut out = AttachedBounds::default();
    let mut current: Option<(usize, usize)> = None; // (index into variables, clause)
    for entity in entities {
        match entity.entity_type {
            EntityType::ClinicalVariable => {
                out.variables.push(VariableBounds {
                    variable: entity.clone(),
                    bounds: Vec::new(),
                });
                current = Some((out.variables.len() - 1, entity.clause));
            }
            t if t.is_bound() => match current {
                Some((idx, clause)) if clause == entity.clause => {
                    out.variables[idx].bounds.push(entity.clone())
                }
                _ => out.unattached.push(entity.clone()),
            },
            _ => {}
        }
    }
    out
}
