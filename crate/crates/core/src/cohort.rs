//! Target and study cohorts, attrition and the generalizability score.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalization::ComputableCriterion;
use crate::patients::PatientVector;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub label: String,
    pub patient_ids: BTreeSet<String>,
}

impl Cohort {
    pub fn new(label: impl Into<String>, patient_ids: impl IntoIterator<Item = String>) -> Self {
        Cohort {
            label: label.into(),
            patient_ids: patient_ids.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn contains(&self, patient_id: &str) -> bool {
        self.patient_ids.contains(patient_id)
    }
}

/// What to do with a patient who has no in-period value for a criterion's
/// variable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// The patient fails the criterion.
    #[default]
    Exclude,
    /// The criterion is skipped for that patient.
    Include,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exclude" => Ok(MissingPolicy::Exclude),
            "include" => Ok(MissingPolicy::Include),
            other => Err(Error::InvalidParameter(format!(
                "unknown missing policy {other:?} (expected exclude or include)"
            ))),
        }
    }
}

/// Whether a patient's vector satisfies one criterion.
pub fn passes(vector: Option<&PatientVector>, criterion: &ComputableCriterion, policy: MissingPolicy) -> bool {
    passes_value(vector.and_then(|v| v.get(&criterion.variable)), criterion, policy)
}

/// Whether a resolved value (or its absence) satisfies one criterion.
pub fn passes_value(value: Option<f64>, criterion: &ComputableCriterion, policy: MissingPolicy) -> bool {
    match value {
        Some(value) => criterion.admits(value),
        None => policy == MissingPolicy::Include,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCohort {
    pub cohort: Cohort,
    /// No computable criteria were given, so the study cohort is the target.
    pub unfiltered: bool,
}

/// Members of `target` satisfying every criterion.
pub fn study_cohort(
    target: &Cohort,
    vectors: &HashMap<String, PatientVector>,
    criteria: &[ComputableCriterion],
    policy: MissingPolicy,
) -> StudyCohort {
    let patient_ids = target
        .patient_ids
        .iter()
        .filter(|id| {
            let v = vectors.get(*id);
            criteria.iter().all(|c| passes(v, c, policy))
        })
        .cloned()
        .collect();
    StudyCohort {
        cohort: Cohort {
            label: format!("study {}", target.label),
            patient_ids,
        },
        unfiltered: criteria.is_empty(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttritionStep {
    /// `"target cohort"` for the first step, then the criterion text.
    pub criterion: String,
    pub remaining: usize,
}

/// Remaining patients after applying criteria cumulatively in order. The
/// first step is the target cohort itself; the last equals the study cohort.
pub fn attrition(
    target: &Cohort,
    vectors: &HashMap<String, PatientVector>,
    criteria: &[ComputableCriterion],
    policy: MissingPolicy,
) -> Vec<AttritionStep> {
    let mut remaining: Vec<&String> = target.patient_ids.iter().collect();
    let mut steps = vec![AttritionStep {
        criterion: "target cohort".into(),
        remaining: remaining.len(),
    }];
    for c in criteria {
        remaining.retain(|id| passes(vectors.get(*id), c, policy));
        steps.push(AttritionStep {
            criterion: c.to_string(),
            remaining: remaining.len(),
        });
    }
    steps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generalizability {
    pub sc: usize,
    pub tc: usize,
    pub score: f64,
}

impl Generalizability {
    /// Percentage in hundredths, rounded half up from the exact ratio.
    pub fn percent_hundredths(&self) -> u64 {
        let (sc, tc) = (self.sc as u128, self.tc as u128);
        ((sc * 20_000 + tc) / (2 * tc)) as u64
    }

    /// Two-decimal percentage string, e.g. `"80.15%"`.
    pub fn percent(&self) -> String {
        let h = self.percent_hundredths();
        format!("{}.{:02}%", h / 100, h % 100)
    }
}

/// `sc / tc`, defined only for a non-empty target cohort and `sc <= tc`.
pub fn generalizability(sc: usize, tc: usize) -> Result<Generalizability> {
    if tc == 0 {
        return Err(Error::EmptyTargetCohort);
    }
    if sc > tc {
        return Err(Error::InvalidParameter(format!(
            "study cohort ({sc}) larger than target cohort ({tc})"
        )));
    }
    Ok(Generalizability {
        sc,
        tc,
        score: sc as f64 / tc as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizabilityReport {
    pub scenario_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
    pub sc_count: usize,
    pub tc_count: usize,
    pub score: f64,
    pub score_percent: String,
    pub criteria: Vec<ComputableCriterion>,
    pub attrition: Vec<AttritionStep>,
    pub missing_policy: MissingPolicy,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GeneralizabilityReport {
    pub fn generalizability(&self) -> Generalizability {
        Generalizability {
            sc: self.sc_count,
            tc: self.tc_count,
            score: self.score,
        }
    }
}

pub(crate) const UNFILTERED_WARNING: &str = "no computable criteria; study cohort equals target cohort";

/// Study cohort, attrition and score for one set of criteria.
pub fn evaluate(
    label: &str,
    target: &Cohort,
    vectors: &HashMap<String, PatientVector>,
    criteria: &[ComputableCriterion],
    policy: MissingPolicy,
) -> Result<GeneralizabilityReport> {
    let study = study_cohort(target, vectors, criteria, policy);
    let g = generalizability(study.cohort.len(), target.len())?;
    let mut warnings = Vec::new();
    if study.unfiltered {
        warnings.push(UNFILTERED_WARNING.to_string());
    }
    Ok(GeneralizabilityReport {
        scenario_label: label.to_string(),
        scenario_hash: None,
        sc_count: g.sc,
        tc_count: g.tc,
        score: g.score,
        score_percent: g.percent(),
        criteria: criteria.to_vec(),
        attrition: attrition(target, vectors, criteria, policy),
        missing_policy: policy,
        warnings,
    })
}
