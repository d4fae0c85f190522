//! What-if scenarios: threshold overrides on a base criteria set, their
//! evaluation against a patient store, and side-by-side comparison.

use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::cohort::{generalizability, passes_value, AttritionStep, GeneralizabilityReport, MissingPolicy, UNFILTERED_WARNING};
use crate::error::{Error, Result};
use crate::normalization::{canonicalize_name, Bound, ComputableCriterion};
use crate::patients::{IndexPeriod, MeasurementPolicy, PatientStore};
use crate::resources::Resources;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// New bound value in canonical units, or removal of that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverrideValue {
    Set(f64),
    Remove,
}

impl Serialize for OverrideValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OverrideValue::Set(v) => serializer.serialize_f64(*v),
            OverrideValue::Remove => serializer.serialize_str("remove"),
        }
    }
}

impl<'de> Deserialize<'de> for OverrideValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(OverrideValue::Set(v)),
            Raw::Text(t) if t.eq_ignore_ascii_case("remove") => Ok(OverrideValue::Remove),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "override value must be a number or \"remove\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub variable: String,
    pub side: Side,
    pub new_value: OverrideValue,
    /// Inclusivity of the new bound; defaults to the replaced bound's, or
    /// inclusive when the side was open.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusive: Option<bool>,
    /// Unit of `new_value` when it is not the canonical one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Allows adding a criterion on a variable absent from the base.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub additive: bool,
}

impl Override {
    pub fn set(variable: impl Into<String>, side: Side, value: f64) -> Self {
        Override {
            variable: variable.into(),
            side,
            new_value: OverrideValue::Set(value),
            inclusive: None,
            unit: None,
            additive: false,
        }
    }

    pub fn remove(variable: impl Into<String>, side: Side) -> Self {
        Override {
            new_value: OverrideValue::Remove,
            ..Override::set(variable, side, 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub base: Vec<ComputableCriterion>,
    #[serde(default)]
    pub overrides: Vec<Override>,
    pub index_period: IndexPeriod,
    pub icd_prefix: String,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    #[serde(default)]
    pub measurement_policy: MeasurementPolicy,
}

impl Scenario {
    /// Hex SHA-256 of the scenario's canonical JSON with the label left out,
    /// so relabelled copies share a hash.
    pub fn content_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("scenario serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("label");
        }
        let bytes = serde_json::to_vec(&value).expect("json value serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Same scenario under a new label with extra overrides appended.
    pub fn derive(&self, label: impl Into<String>, overrides: impl IntoIterator<Item = Override>) -> Scenario {
        let mut s = self.clone();
        s.label = label.into();
        s.overrides.extend(overrides);
        s
    }
}

/// Applies overrides in order. Criteria without overrides pass through
/// unchanged; a criterion left with no bounds is dropped.
pub fn apply_scenario(scenario: &Scenario, resources: &Resources) -> Result<Vec<ComputableCriterion>> {
    let mut criteria = scenario.base.clone();
    for o in &scenario.overrides {
        let variable = canonicalize_name(&o.variable, &resources.synonyms);
        let value = match (o.new_value, &o.unit) {
            (OverrideValue::Set(v), _) if !v.is_finite() => {
                return Err(Error::InvalidScenario(format!("override for {variable} is not finite")))
            }
            (OverrideValue::Set(v), Some(unit)) => {
                OverrideValue::Set(resources.conversions.convert_unit(v, unit, &variable)?)
            }
            (v, _) => v,
        };
        let mut touched = false;
        for c in criteria.iter_mut().filter(|c| c.variable == variable) {
            touched = true;
            let slot = match o.side {
                Side::Lower => &mut c.lower,
                Side::Upper => &mut c.upper,
            };
            *slot = match value {
                OverrideValue::Remove => None,
                OverrideValue::Set(v) => Some(Bound {
                    value: v,
                    inclusive: o.inclusive.or(slot.map(|b| b.inclusive)).unwrap_or(true),
                }),
            };
        }
        if !touched {
            if !o.additive {
                return Err(Error::InvalidScenario(format!(
                    "override variable {variable:?} is not in the base criteria and is not marked additive"
                )));
            }
            if let OverrideValue::Set(v) = value {
                let bound = Some(Bound {
                    value: v,
                    inclusive: o.inclusive.unwrap_or(true),
                });
                let (lower, upper) = match o.side {
                    Side::Lower => (bound, None),
                    Side::Upper => (None, bound),
                };
                let unit = resources.conversions.canonical_unit(&variable).unwrap_or_default().to_string();
                criteria.push(ComputableCriterion::new(variable.clone(), lower, upper, unit));
            }
        }
    }
    criteria.retain(|c| c.lower.is_some() || c.upper.is_some());
    for c in &criteria {
        c.validate().map_err(Error::InvalidScenario)?;
    }
    Ok(criteria)
}

/// Target cohort → per-patient values → study cohort, score and attrition,
/// in one pass over the target cohort.
///
/// Produces the same counts as [`crate::cohort::evaluate`] over vectors from
/// [`PatientStore::resolve_vectors`] without materializing them.
pub fn evaluate_scenario(scenario: &Scenario, store: &PatientStore, resources: &Resources) -> Result<GeneralizabilityReport> {
    let criteria = apply_scenario(scenario, resources)?;
    let mut variables: Vec<&str> = Vec::new();
    let slots: Vec<usize> = criteria
        .iter()
        .map(|c| match variables.iter().position(|v| *v == c.variable) {
            Some(i) => i,
            None => {
                variables.push(&c.variable);
                variables.len() - 1
            }
        })
        .collect();

    let period = &scenario.index_period;
    let policy = scenario.missing_policy;
    let mut tc = 0usize;
    let mut passed = vec![0usize; criteria.len()];
    let mut observed = vec![false; variables.len()];
    let mut values: Vec<Option<f64>> = vec![None; variables.len()];
    for patient in store.target_records(&scenario.icd_prefix, period)? {
        tc += 1;
        for (i, variable) in variables.iter().enumerate() {
            values[i] = patient
                .resolve_value(variable, period, scenario.measurement_policy)
                .map(|(v, _)| v);
            observed[i] |= values[i].is_some();
        }
        for (k, c) in criteria.iter().enumerate() {
            if !passes_value(values[slots[k]], c, policy) {
                break;
            }
            passed[k] += 1;
        }
    }

    let sc = passed.last().copied().unwrap_or(tc);
    let g = generalizability(sc, tc)?;
    let mut attrition = vec![AttritionStep {
        criterion: "target cohort".into(),
        remaining: tc,
    }];
    attrition.extend(criteria.iter().zip(&passed).map(|(c, &remaining)| AttritionStep {
        criterion: c.to_string(),
        remaining,
    }));
    let mut warnings = Vec::new();
    if criteria.is_empty() {
        warnings.push(UNFILTERED_WARNING.to_string());
    }
    for (variable, seen) in variables.iter().zip(&observed) {
        if !seen {
            warnings.push(format!("no in-period measurements of {variable} in the target cohort"));
        }
    }
    Ok(GeneralizabilityReport {
        scenario_label: scenario.label.clone(),
        scenario_hash: Some(scenario.content_hash()),
        sc_count: g.sc,
        tc_count: g.tc,
        score: g.score,
        score_percent: g.percent(),
        criteria,
        attrition,
        missing_policy: policy,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub sc_count: usize,
    pub tc_count: usize,
    pub score: f64,
    pub score_percent: String,
    /// Score difference from the first row, in percentage points.
    pub delta_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Table of reports against the first one. All reports must share the same
/// target cohort size.
pub fn compare(reports: &[GeneralizabilityReport]) -> Result<Comparison> {
    let [first, rest @ ..] = reports else {
        return Err(Error::IncomparableScenarios("no reports to compare".into()));
    };
    if rest.is_empty() {
        return Err(Error::IncomparableScenarios("at least two reports are needed".into()));
    }
    if let Some(other) = rest.iter().find(|r| r.tc_count != first.tc_count) {
        return Err(Error::IncomparableScenarios(format!(
            "target cohort of {:?} has {} patients, {:?} has {}",
            other.scenario_label, other.tc_count, first.scenario_label, first.tc_count
        )));
    }
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            label: r.scenario_label.clone(),
            sc_count: r.sc_count,
            tc_count: r.tc_count,
            score: r.score,
            score_percent: r.score_percent.clone(),
            delta_pp: (r.sc_count as f64 - first.sc_count as f64) * 100.0 / first.tc_count as f64,
        })
        .collect();
    Ok(Comparison { rows })
}

/// CTCAE grade thresholds for absolute neutrophil count (10^9/L) and
/// hemoglobin (g/dL) lower bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradePreset {
    G1,
    G2,
}

pub const ANC: &str = "absolute neutrophil count";
pub const HEMOGLOBIN: &str = "hemoglobin";

impl GradePreset {
    pub fn anc_lower(self) -> f64 {
        match self {
            GradePreset::G1 => 1.5,
            GradePreset::G2 => 1.0,
        }
    }

    pub fn hemoglobin_lower(self) -> f64 {
        match self {
            GradePreset::G1 => 10.0,
            GradePreset::G2 => 8.0,
        }
    }

    /// Inclusive lower bounds on both variables.
    pub fn criteria(self) -> Vec<ComputableCriterion> {
        vec![
            ComputableCriterion::new(ANC, Some(Bound::inclusive(self.anc_lower())), None, "10^9/L"),
            ComputableCriterion::new(HEMOGLOBIN, Some(Bound::inclusive(self.hemoglobin_lower())), None, "g/dL"),
        ]
    }

    /// Overrides moving both lower bounds to this grade.
    pub fn overrides(self) -> Vec<Override> {
        vec![self.anc_override(), Override::set(HEMOGLOBIN, Side::Lower, self.hemoglobin_lower())]
    }

    pub fn anc_override(self) -> Override {
        Override::set(ANC, Side::Lower, self.anc_lower())
    }
}

impl FromStr for GradePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.trim_start_matches("grade").trim_start_matches('g').trim();
        match digits {
            "1" => Ok(GradePreset::G1),
            "2" => Ok(GradePreset::G2),
            _ => Err(Error::InvalidParameter(format!("unknown grade {s:?} (expected 1 or 2)"))),
        }
    }
}
