//! Name standardization, bound parsing, unit conversion and ULN resolution.
//!
//! Everything downstream of extraction works in canonical units: a
//! [`ComputableCriterion`] is a canonical variable name with optional lower
//! and upper bounds already converted (and ULN multiples already resolved).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::comparator::{self, Comparator};
use crate::error::{Error, Result};
use crate::extraction::grammar;
use crate::extraction::{SentenceRef, VariableBounds};
use crate::lexicon::fold_chars;
use crate::resources::Resources;

// ---------------------------------------------------------------------------
// Variable names
// ---------------------------------------------------------------------------

/// Alias → canonical variable name map. Chains are resolved at load time so
/// lookups are single-step and [`canonicalize_name`] is idempotent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymTable {
    map: HashMap<String, String>,
}

const BUILTIN_SYNONYMS: &str = include_str!("../data/synonyms.txt");

impl SynonymTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_SYNONYMS, "builtin synonyms").expect("builtin synonyms are well-formed")
    }

    /// Parses `alias|canonical` lines.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            match cols.as_slice() {
                [alias, canonical] if !alias.is_empty() && !canonical.is_empty() => {
                    pairs.push((alias.to_string(), canonical.to_string()))
                }
                _ => {
                    return Err(Error::Ingest {
                        source_name: source_name.to_string(),
                        line: idx + 1,
                        message: "expected alias|canonical".into(),
                    })
                }
            }
        }
        Self::from_pairs(pairs).map_err(|message| Error::Resource {
            source_name: source_name.to_string(),
            message,
        })
    }

    pub fn from_pairs<I, A, C>(pairs: I) -> std::result::Result<Self, String>
    where
        I: IntoIterator<Item = (A, C)>,
        A: AsRef<str>,
        C: AsRef<str>,
    {
        let mut raw: HashMap<String, String> = HashMap::new();
        for (alias, canonical) in pairs {
            let alias = normalize_name(alias.as_ref());
            let canonical = normalize_name(canonical.as_ref());
            if alias != canonical {
                raw.insert(alias, canonical);
            }
        }
        let mut map = HashMap::with_capacity(raw.len());
        for alias in raw.keys() {
            let mut target = &raw[alias];
            let mut hops = 0;
            while let Some(next) = raw.get(target) {
                target = next;
                hops += 1;
                if hops > raw.len() {
                    return Err(format!("synonym cycle through {alias:?}"));
                }
            }
            map.insert(alias.clone(), target.clone());
        }
        Ok(SynonymTable { map })
    }

    pub fn extend(&mut self, other: &SynonymTable) -> std::result::Result<(), String> {
        let merged = self.map.iter().chain(other.map.iter());
        *self = Self::from_pairs(merged.map(|(a, c)| (a.clone(), c.clone())))?;
        Ok(())
    }

    pub fn get(&self, normalized: &str) -> Option<&str> {
        self.map.get(normalized).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Lowercase, collapse whitespace, strip trailing parentheticals.
fn normalize_name(raw: &str) -> String {
    let mut name = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    while name.ends_with(')') {
        let Some(open) = name.rfind('(') else { break };
        let head = name[..open].trim_end();
        if head.is_empty() {
            break;
        }
        name = head.to_string();
    }
    name
}

/// Standardizes a variable name: lowercased, trailing parentheticals
/// stripped, then synonym-mapped. Unknown names pass through lowercased.
pub fn canonicalize_name(raw: &str, synonyms: &SynonymTable) -> String {
    let name = normalize_name(raw);
    match synonyms.get(&name) {
        Some(canonical) => canonical.to_string(),
        None => name,
    }
}

// ---------------------------------------------------------------------------
// Bound expressions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub magnitude: f64,
    /// Unit as written, possibly empty.
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundValue {
    Quantity(Quantity),
    /// `k x ULN`: the threshold is `k` times the variable's upper limit of normal.
    UlnMultiple(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundExpression {
    pub comparator: Comparator,
    pub value: BoundValue,
    /// Parenthesized alternate representation, e.g. `(90 g/L)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternate: Option<Quantity>,
}

impl BoundExpression {
    pub fn magnitude(&self) -> Option<f64> {
        match &self.value {
            BoundValue::Quantity(q) => Some(q.magnitude),
            BoundValue::UlnMultiple(_) => None,
        }
    }

    pub fn unit(&self) -> Option<&str> {
        match &self.value {
            BoundValue::Quantity(q) => Some(&q.unit),
            BoundValue::UlnMultiple(_) => None,
        }
    }

    pub fn uln_multiplier(&self) -> Option<f64> {
        match self.value {
            BoundValue::UlnMultiple(k) => Some(k),
            BoundValue::Quantity(_) => None,
        }
    }
}

/// Parses a bound with its comparator context, e.g. `">= 1,500/mcL"` or
/// `"within 1.25 x normal institutional limits"`. Text without a leading
/// comparator is read as an equality.
pub fn parse_bound_text(raw: &str) -> Result<BoundExpression> {
    let folded = fold_chars(raw);
    let start = grammar::skip_ws(&folded, 0);
    let (comparator, len) = comparator::match_with_eq(&folded, start).unwrap_or((Comparator::Eq, 0));
    let rest: String = raw.chars().skip(start + len).collect();
    parse_bound(comparator, &rest).map_err(|_| Error::UnparsableBound { raw: raw.to_string() })
}

/// Parses the threshold text of a bound whose comparator is already known.
pub fn parse_bound(comparator: Comparator, text: &str) -> Result<BoundExpression> {
    let unparsable = || Error::UnparsableBound { raw: text.to_string() };
    let chars: Vec<char> = text.chars().collect();
    let folded = fold_chars(text);
    let mut at = grammar::skip_ws(&folded, 0);
    if folded.get(at) == Some(&':') {
        at = grammar::skip_ws(&folded, at + 1);
    }
    let m = grammar::bound_at(&folded, at).ok_or_else(unparsable)?;
    let slice = |(a, b): (usize, usize)| chars[a..b].iter().collect::<String>();
    let value = if m.uln {
        BoundValue::UlnMultiple(m.magnitude)
    } else {
        BoundValue::Quantity(Quantity {
            magnitude: m.magnitude,
            unit: m.unit.map(slice).unwrap_or_default(),
        })
    };
    let alternate = m.alternate.and_then(|(a, b)| {
        let inner = fold_chars(&slice((a, b)));
        let alt = grammar::bound_at(&inner, 0)?;
        let inner_chars: Vec<char> = slice((a, b)).chars().collect();
        Some(Quantity {
            magnitude: alt.magnitude,
            unit: alt
                .unit
                .map(|(s, e)| inner_chars[s..e].iter().collect())
                .unwrap_or_default(),
        })
    });
    if !m.magnitude.is_finite() {
        return Err(unparsable());
    }
    Ok(BoundExpression {
        comparator,
        value,
        alternate,
    })
}

// ---------------------------------------------------------------------------
// Unit conversion
// ---------------------------------------------------------------------------

/// Exact decimal or fractional conversion factor, applied as
/// `value * numerator / denominator` so that e.g. `1500 /mcL` lands on exactly
/// `1.5 10^9/L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    numerator: f64,
    denominator: f64,
}

impl Factor {
    pub const ONE: Factor = Factor {
        numerator: 1.0,
        denominator: 1.0,
    };

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let (num, den) = match text.split_once('/') {
            Some((n, d)) => (parse_decimal(n)?, parse_decimal(d)?),
            None => (parse_decimal(text)?, (1.0, 1.0)),
        };
        let factor = Factor {
            numerator: num.0 * den.1,
            denominator: num.1 * den.0,
        };
        if factor.numerator <= 0.0 || factor.denominator <= 0.0 || !factor.value().is_finite() {
            return Err(format!("conversion factor {text:?} must be positive and finite"));
        }
        Ok(factor)
    }

    pub fn value(&self) -> f64 {
        self.numerator / self.denominator
    }

    pub fn apply(&self, value: f64) -> f64 {
        value * self.numerator / self.denominator
    }

    pub fn invert(&self, value: f64) -> f64 {
        value * self.denominator / self.numerator
    }
}

/// Decimal string as (integer mantissa, power-of-ten scale).
fn parse_decimal(text: &str) -> std::result::Result<(f64, f64), String> {
    let text = text.trim();
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    let digits_ok = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if (int.is_empty() && frac.is_empty()) || !digits_ok(int) || !digits_ok(frac) {
        return Err(format!("not a decimal number: {text:?}"));
    }
    let mantissa: f64 = format!("{int}{frac}").parse().map_err(|_| format!("bad number {text:?}"))?;
    Ok((mantissa, 10f64.powi(frac.len() as i32)))
}

/// Lookup key for a unit string: case-, space- and glyph-insensitive.
pub fn unit_key(unit: &str) -> String {
    const SUPERSCRIPTS: &str = "⁰¹²³⁴⁵⁶⁷⁸⁹";
    let mut key = String::with_capacity(unit.len());
    let mut in_superscript = false;
    for c in unit.chars().filter(|c| !c.is_whitespace()) {
        if let Some(digit) = SUPERSCRIPTS.chars().position(|s| s == c) {
            if !in_superscript {
                key.push('^');
            }
            key.push(char::from(b'0' + digit as u8));
            in_superscript = true;
            continue;
        }
        in_superscript = false;
        match c {
            '×' | '*' => key.push('x'),
            'µ' | 'μ' => key.push('u'),
            c => key.extend(c.to_lowercase()),
        }
    }
    if let Some(rest) = key.strip_prefix("x10") {
        key = format!("10{rest}");
    }
    key.replace("10e", "10^")
}

#[derive(Debug, Clone, PartialEq)]
struct UnitEntry {
    unit: String,
    factor: Factor,
}

/// Per-variable unit factors into a fixed canonical unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConversionTable {
    units: BTreeMap<String, BTreeMap<String, UnitEntry>>,
    canonical: BTreeMap<String, String>,
}

const BUILTIN_CONVERSIONS: &str = include_str!("../data/conversions.csv");

#[derive(Debug, Deserialize)]
struct ConversionRow {
    variable: String,
    unit: String,
    factor: String,
    #[serde(default)]
    canonical: String,
}

impl ConversionTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CONVERSIONS, "builtin conversions").expect("builtin conversions are well-formed")
    }

    /// Parses `variable,unit,factor,canonical` CSV (header required, `#` comments).
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Ingest {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut table = ConversionTable::default();
        for row in reader.deserialize::<ConversionRow>() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                err(line, e.to_string())
            })?;
            let factor = Factor::parse(&row.factor).map_err(|m| err(0, m))?;
            let canonical = matches!(row.canonical.to_ascii_lowercase().as_str(), "true" | "yes" | "1" | "y");
            if canonical && factor != Factor::ONE {
                return Err(err(0, format!("canonical unit {:?} must have factor 1", row.unit)));
            }
            table.insert(&row.variable, &row.unit, factor, canonical);
        }
        for variable in table.units.keys() {
            if !table.canonical.contains_key(variable) {
                return Err(Error::Resource {
                    source_name: source_name.to_string(),
                    message: format!("variable {variable:?} has no canonical unit"),
                });
            }
        }
        Ok(table)
    }

    pub fn insert(&mut self, variable: &str, unit: &str, factor: Factor, canonical: bool) {
        let variable = normalize_name(variable);
        if canonical {
            self.canonical.insert(variable.clone(), unit.to_string());
        }
        self.units.entry(variable).or_default().insert(
            unit_key(unit),
            UnitEntry {
                unit: unit.to_string(),
                factor,
            },
        );
    }

    pub fn extend(&mut self, other: &ConversionTable) {
        for (variable, units) in &other.units {
            for entry in units.values() {
                let canonical = other.canonical.get(variable) == Some(&entry.unit);
                self.insert(variable, &entry.unit, entry.factor, canonical);
            }
        }
    }

    pub fn canonical_unit(&self, variable: &str) -> Option<&str> {
        self.canonical.get(variable).map(String::as_str)
    }

    /// Canonical variables that have a conversion table.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.units.keys().map(String::as_str)
    }

    /// All `(unit, factor)` entries for a variable, in key order.
    pub fn units(&self, variable: &str) -> Vec<(&str, Factor)> {
        self.units
            .get(variable)
            .map(|u| u.values().map(|e| (e.unit.as_str(), e.factor)).collect())
            .unwrap_or_default()
    }

    fn factor(&self, variable: &str, unit: &str) -> Result<Factor> {
        self.units
            .get(variable)
            .and_then(|u| u.get(&unit_key(unit)))
            .map(|e| e.factor)
            .ok_or_else(|| Error::UnknownUnit {
                variable: variable.to_string(),
                unit: unit.to_string(),
            })
    }

    /// Converts `value` in `unit` into the variable's canonical unit.
    pub fn convert_unit(&self, value: f64, unit: &str, variable: &str) -> Result<f64> {
        Ok(self.factor(variable, unit)?.apply(value))
    }

    /// Converts a canonical-unit value back into `unit`.
    pub fn from_canonical(&self, value: f64, unit: &str, variable: &str) -> Result<f64> {
        Ok(self.factor(variable, unit)?.invert(value))
    }
}

// ---------------------------------------------------------------------------
// Upper limits of normal
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UlnTable {
    values: BTreeMap<String, f64>,
}

const BUILTIN_ULN: &str = include_str!("../data/uln.csv");

#[derive(Debug, Deserialize)]
struct UlnRow {
    variable: String,
    uln: f64,
}

impl UlnTable {
    /// Defaults: total bilirubin 1.2 mg/dL, AST 24 U/L.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_ULN, "builtin ULN table").expect("builtin ULN table is well-formed")
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut table = UlnTable::default();
        for row in reader.deserialize::<UlnRow>() {
            let row = row.map_err(|e| Error::Ingest {
                source_name: source_name.to_string(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            table.insert(&row.variable, row.uln).map_err(|message| Error::Resource {
                source_name: source_name.to_string(),
                message,
            })?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, variable: &str, uln: f64) -> std::result::Result<(), String> {
        if !(uln.is_finite() && uln > 0.0) {
            return Err(format!("ULN for {variable:?} must be positive, got {uln}"));
        }
        self.values.insert(normalize_name(variable), uln);
        Ok(())
    }

    pub fn get(&self, variable: &str) -> Option<f64> {
        self.values.get(variable).copied()
    }

    pub fn extend(&mut self, other: &UlnTable) {
        self.values.extend(other.values.iter().map(|(k, v)| (k.clone(), *v)));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Threshold for a `k x ULN` expression: `k * ULN[variable]`, snapped to 10
/// decimal places so that `3 x 1.2` is `3.6` rather than `3.5999999999999996`.
pub fn resolve_uln(expr: &BoundExpression, variable: &str, uln: &UlnTable) -> Result<f64> {
    let multiplier = expr.uln_multiplier().ok_or_else(|| {
        Error::InvalidParameter(format!("bound for {variable:?} is not a ULN multiple"))
    })?;
    let limit = uln.get(variable).ok_or_else(|| Error::MissingUln {
        variable: variable.to_string(),
    })?;
    Ok(((multiplier * limit) * 1e10).round() / 1e10)
}

// ---------------------------------------------------------------------------
// Computable criteria
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

impl Bound {
    pub fn inclusive(value: f64) -> Self {
        Bound { value, inclusive: true }
    }

    pub fn exclusive(value: f64) -> Self {
        Bound { value, inclusive: false }
    }
}

// Accepts a bare number (inclusive) or `{"value": .., "inclusive": ..}`.
impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Full {
                value: f64,
                #[serde(default = "yes")]
                inclusive: bool,
            },
        }
        fn yes() -> bool {
            true
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::Number(value) => Bound::inclusive(value),
            Raw::Full { value, inclusive } => Bound { value, inclusive },
        })
    }
}

/// A canonical variable with a value range in canonical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputableCriterion {
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Bound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Bound>,
    #[serde(default)]
    pub canonical_unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SentenceRef>,
}

impl ComputableCriterion {
    pub fn new(variable: impl Into<String>, lower: Option<Bound>, upper: Option<Bound>, unit: impl Into<String>) -> Self {
        ComputableCriterion {
            variable: variable.into(),
            lower,
            upper,
            canonical_unit: unit.into(),
            source: None,
        }
    }

    /// Whether a canonical-unit value satisfies both bounds.
    pub fn admits(&self, value: f64) -> bool {
        let lower_ok = self.lower.is_none_or(|b| if b.inclusive { value >= b.value } else { value > b.value });
        let upper_ok = self.upper.is_none_or(|b| if b.inclusive { value <= b.value } else { value < b.value });
        lower_ok && upper_ok
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.lower.is_none() && self.upper.is_none() {
            return Err(format!("criterion on {:?} has no bounds", self.variable));
        }
        for b in self.lower.iter().chain(self.upper.iter()) {
            if !b.value.is_finite() {
                return Err(format!("criterion on {:?} has a non-finite bound", self.variable));
            }
        }
        if let (Some(l), Some(u)) = (self.lower, self.upper) {
            if l.value > u.value {
                return Err(format!(
                    "criterion on {:?} has lower bound {} above upper bound {}",
                    self.variable, l.value, u.value
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ComputableCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = if self.canonical_unit.is_empty() {
            String::new()
        } else {
            format!(" {}", self.canonical_unit)
        };
        let op = |b: &Bound, inc: &'static str, exc: &'static str| if b.inclusive { inc } else { exc };
        match (&self.lower, &self.upper) {
            (Some(l), Some(u)) if l.value == u.value && l.inclusive && u.inclusive => {
                write!(f, "{} = {}{unit}", self.variable, l.value)
            }
            (Some(l), Some(u)) => write!(
                f,
                "{} {} {}{unit} and {} {}{unit}",
                self.variable,
                op(l, ">=", ">"),
                l.value,
                op(u, "<=", "<"),
                u.value
            ),
            (Some(l), None) => write!(f, "{} {} {}{unit}", self.variable, op(l, ">=", ">"), l.value),
            (None, Some(u)) => write!(f, "{} {} {}{unit}", self.variable, op(u, "<=", "<"), u.value),
            (None, None) => write!(f, "{} (unbounded)", self.variable),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NonComputableReason {
    VariableUnavailable,
    NoBounds,
    UnparsableBound { raw: String },
    UnknownUnit { unit: String },
    MissingUln,
    InconsistentBounds,
    /// An exclusion range with both bounds has no single-interval complement.
    TwoSidedExclusion,
}

impl fmt::Display for NonComputableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonComputableReason::VariableUnavailable => f.write_str("variable-unavailable"),
            NonComputableReason::NoBounds => f.write_str("no-bounds"),
            NonComputableReason::UnparsableBound { raw } => write!(f, "unparsable-bound {raw:?}"),
            NonComputableReason::UnknownUnit { unit } => write!(f, "unknown-unit {unit:?}"),
            NonComputableReason::MissingUln => f.write_str("missing-uln"),
            NonComputableReason::InconsistentBounds => f.write_str("inconsistent-bounds"),
            NonComputableReason::TwoSidedExclusion => f.write_str("two-sided-exclusion"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonComputable {
    pub variable: String,
    #[serde(flatten)]
    pub reason: NonComputableReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SentenceRef>,
}

/// Relative disagreement between a bound's primary and parenthesized
/// representations after conversion, when both convert.
pub fn alternate_disagreement(expr: &BoundExpression, variable: &str, conversions: &ConversionTable) -> Option<f64> {
    let BoundValue::Quantity(primary) = &expr.value else {
        return None;
    };
    let alternate = expr.alternate.as_ref()?;
    let a = conversions.convert_unit(primary.magnitude, &primary.unit, variable).ok()?;
    let b = conversions.convert_unit(alternate.magnitude, &alternate.unit, variable).ok()?;
    let scale = a.abs().max(b.abs());
    Some(if scale == 0.0 { 0.0 } else { (a - b).abs() / scale })
}

/// Resolves a bound expression into a canonical-unit threshold.
pub fn resolve_threshold(expr: &BoundExpression, variable: &str, resources: &Resources) -> std::result::Result<f64, NonComputableReason> {
    match &expr.value {
        BoundValue::UlnMultiple(_) => {
            resolve_uln(expr, variable, &resources.uln).map_err(|_| NonComputableReason::MissingUln)
        }
        BoundValue::Quantity(q) => {
            let unit = if q.unit.is_empty() {
                resources.conversions.canonical_unit(variable).unwrap_or("")
            } else {
                q.unit.as_str()
            };
            resources
                .conversions
                .convert_unit(q.magnitude, unit, variable)
                .map_err(|_| NonComputableReason::UnknownUnit { unit: q.unit.clone() })
        }
    }
}

/// Turns a variable and its attached bounds into a criterion in canonical
/// units, or explains why it cannot be evaluated against the patient store.
///
/// Several bounds on the same side keep the most restrictive one.
pub fn to_computable(
    attached: &VariableBounds,
    resources: &Resources,
    available: &BTreeSet<String>,
) -> std::result::Result<ComputableCriterion, NonComputable> {
    let raw_name = attached.variable.canonical.as_deref().unwrap_or(&attached.variable.raw_text);
    let variable = canonicalize_name(raw_name, &resources.synonyms);
    let source = Some(attached.variable.sentence_ref.clone());
    let fail = |reason| NonComputable {
        variable: variable.clone(),
        reason,
        source: source.clone(),
    };
    if !available.contains(&variable) {
        return Err(fail(NonComputableReason::VariableUnavailable));
    }
    if attached.bounds.is_empty() {
        return Err(fail(NonComputableReason::NoBounds));
    }

    let mut lower: Option<Bound> = None;
    let mut upper: Option<Bound> = None;
    for entity in &attached.bounds {
        let comparator = entity.comparator.unwrap_or(Comparator::Eq);
        let expr = parse_bound(comparator, &entity.raw_text).map_err(|_| {
            fail(NonComputableReason::UnparsableBound {
                raw: entity.raw_text.clone(),
            })
        })?;
        if let Some(diff) = alternate_disagreement(&expr, &variable, &resources.conversions) {
            if diff > 0.01 {
                log::warn!(
                    "{variable}: {:?} disagrees with its parenthesized equivalent by {:.1}%",
                    entity.raw_text,
                    diff * 100.0
                );
            }
        }
        let value = resolve_threshold(&expr, &variable, resources).map_err(fail)?;
        let bound = Bound {
            value,
            inclusive: comparator.is_inclusive(),
        };
        if comparator.is_lower() || comparator == Comparator::Eq {
            lower = Some(tighter_lower(lower, bound));
        }
        if comparator.is_upper() || comparator == Comparator::Eq {
            upper = Some(tighter_upper(upper, bound));
        }
    }
    let criterion = ComputableCriterion {
        variable: variable.clone(),
        lower,
        upper,
        canonical_unit: resources.conversions.canonical_unit(&variable).unwrap_or("").to_string(),
        source: source.clone(),
    };
    criterion
        .validate()
        .map_err(|_| fail(NonComputableReason::InconsistentBounds))?;
    Ok(criterion)
}

fn tighter_lower(current: Option<Bound>, new: Bound) -> Bound {
    match current {
        Some(c) if c.value > new.value || (c.value == new.value && !c.inclusive) => c,
        _ => new,
    }
}

fn tighter_upper(current: Option<Bound>, new: Bound) -> Bound {
    match current {
        Some(c) if c.value < new.value || (c.value == new.value && !c.inclusive) => c,
        _ => new,
    }
}
