//! Seeded synthetic diagnoses and labs in the patient-store file formats.
//!
//! A [`PopulationConfig`] is JSON:
//!
//! ```json
//! {
//!   "seed": 42,
//!   "n_patients": 1000,
//!   "icd_mix": {"C50.9": 0.7, "I10": 0.3},
//!   "diagnoses_per_patient": {"min": 1, "max": 2},
//!   "labs_per_patient": {"min": 1, "max": 3},
//!   "date_range": {"start": "2009-01-01", "end": "2021-12-31"},
//!   "variables": [
//!     {
//!       "variable": "hemoglobin",
//!       "distribution": {"kind": "normal", "mean": 12.5, "sd": 1.5},
//!       "missing_probability": 0.03,
//!       "decimals": 1,
//!       "min": 3.0,
//!       "units": [{"unit": "g/dL", "weight": 0.7}, {"unit": "g/L", "weight": 0.3}]
//!     }
//!   ]
//! }
//! ```
//!
//! Distributions are in canonical units. `labs_per_patient` is the number of
//! measurements of each non-missing variable. Lab dates are uniform over
//! `date_range`, or, when `lab_offset_days` (`{"min": -90, "max": 180}`) is
//! given, the patient's latest diagnosis date plus a uniform day offset,
//! clamped into `date_range`. Values are clamped to `[min, max]`, rounded to
//! `decimals` in the canonical unit and then written in a unit drawn by
//! weight, so non-canonical units exercise conversion.
//!
//! Draw order, per patient in id order: diagnosis count, then per diagnosis
//! code and date; then per variable in config order: missing draw, lab
//! count, then per lab value, unit and date (or offset). See the `rng`
//! module for the stream definition.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalization::ConversionTable;
use crate::patients::IndexPeriod;
use crate::rng::SynthRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetRange {
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    /// Parameters of the underlying normal.
    Lognormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitWeight {
    pub unit: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub variable: String,
    pub distribution: Distribution,
    #[serde(default)]
    pub missing_probability: f64,
    #[serde(default = "default_decimals")]
    pub decimals: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Defaults to the canonical unit only.
    #[serde(default)]
    pub units: Vec<UnitWeight>,
}

fn default_decimals() -> u32 {
    2
}

fn one_diagnosis() -> CountRange {
    CountRange { min: 1, max: 1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub seed: u64,
    pub n_patients: usize,
    pub icd_mix: BTreeMap<String, f64>,
    #[serde(default = "one_diagnosis")]
    pub diagnoses_per_patient: CountRange,
    pub labs_per_patient: CountRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_offset_days: Option<OffsetRange>,
    pub date_range: IndexPeriod,
    pub variables: Vec<VariableSpec>,
}

const MAX_DECIMALS: u32 = 9;

fn normal(variable: &str, mean: f64, sd: f64, decimals: u32, min: f64, units: &[(&str, f64)]) -> VariableSpec {
    VariableSpec {
        variable: variable.into(),
        distribution: Distribution::Normal { mean, sd },
        missing_probability: 0.03,
        decimals,
        min: Some(min),
        max: None,
        units: units.iter().map(|(u, w)| UnitWeight { unit: u.to_string(), weight: *w }).collect(),
    }
}

fn lognormal(variable: &str, median: f64, sigma: f64, decimals: u32, units: &[(&str, f64)]) -> VariableSpec {
    VariableSpec {
        distribution: Distribution::Lognormal { mu: median.ln(), sigma },
        min: None,
        ..normal(variable, 0.0, 1.0, decimals, 0.0, units)
    }
}

impl PopulationConfig {
    /// Breast-cancer-heavy population in which hemoglobin is the binding
    /// eligibility constraint: Hgb ~ N(12.5, 1.5) g/dL, ANC ~ N(4.2, 1.3).
    pub fn default_config(seed: u64, n_patients: usize) -> Self {
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
        PopulationConfig {
            seed,
            n_patients,
            icd_mix: [
                ("C50.9", 0.5),
                ("C50.4", 0.15),
                ("C50.1", 0.1),
                ("C50.8", 0.05),
                ("I10", 0.1),
                ("E11.9", 0.1),
            ]
            .into_iter()
            .map(|(c, p)| (c.to_string(), p))
            .collect(),
            diagnoses_per_patient: CountRange { min: 1, max: 3 },
            labs_per_patient: CountRange { min: 1, max: 3 },
            lab_offset_days: Some(OffsetRange { min: -90, max: 180 }),
            date_range: IndexPeriod::new(date(2009, 1, 1), date(2021, 12, 31)).expect("ordered"),
            variables: vec![
                normal(
                    "absolute neutrophil count",
                    4.2,
                    1.3,
                    2,
                    0.05,
                    &[("10^9/L", 0.5), ("/mcL", 0.3), ("cells/mm3", 0.2)],
                ),
                normal("hemoglobin", 12.5, 1.5, 1, 3.0, &[("g/dL", 0.7), ("g/L", 0.3)]),
                lognormal("bilirubin", 0.6, 0.5, 2, &[("mg/dL", 1.0)]),
                lognormal("ast", 20.0, 0.35, 0, &[("U/L", 0.7), ("IU/L", 0.3)]),
                lognormal("alt", 20.0, 0.45, 0, &[("U/L", 1.0)]),
                normal("creatinine", 0.85, 0.2, 2, 0.2, &[("mg/dL", 1.0)]),
                normal("platelets", 260.0, 65.0, 0, 5.0, &[("10^9/L", 0.6), ("/mcL", 0.4)]),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self, conversions: &ConversionTable) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_patients == 0 {
            return fail("n_patients must be positive".into());
        }
        if self.icd_mix.is_empty() {
            return fail("icd_mix must not be empty".into());
        }
        if let Some((code, p)) = self.icd_mix.iter().find(|(c, p)| c.trim().is_empty() || !p.is_finite() || **p < 0.0) {
            return fail(format!("icd_mix entry {code:?} has invalid probability {p}"));
        }
        let total: f64 = self.icd_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return fail(format!("icd_mix probabilities sum to {total}, expected 1"));
        }
        for (name, r) in [("diagnoses_per_patient", self.diagnoses_per_patient), ("labs_per_patient", self.labs_per_patient)] {
            if r.min > r.max {
                return fail(format!("{name}: min {} exceeds max {}", r.min, r.max));
            }
        }
        if let Some(o) = self.lab_offset_days {
            if o.min > o.max {
                return fail(format!("lab_offset_days: min {} exceeds max {}", o.min, o.max));
            }
        }
        if self.diagnoses_per_patient.min == 0 {
            return fail("diagnoses_per_patient.min must be at least 1".into());
        }
        self.date_range.validate().map_err(|e| Error::Config(e.to_string()))?;
        for v in &self.variables {
            let name = &v.variable;
            let params_ok = match v.distribution {
                Distribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
                Distribution::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            };
            if !params_ok {
                return fail(format!("{name}: distribution parameters must be finite with positive spread"));
            }
            if !(0.0..=1.0).contains(&v.missing_probability) {
                return fail(format!("{name}: missing_probability must be in [0, 1]"));
            }
            if v.decimals > MAX_DECIMALS {
                return fail(format!("{name}: at most {MAX_DECIMALS} decimals"));
            }
            if let (Some(lo), Some(hi)) = (v.min, v.max) {
                if lo > hi {
                    return fail(format!("{name}: min exceeds max"));
                }
            }
            if conversions.canonical_unit(name).is_none() {
                return fail(format!("{name}: not in the conversion table"));
            }
            for u in &v.units {
                if !(u.weight.is_finite() && u.weight > 0.0) {
                    return fail(format!("{name}: unit {:?} needs a positive weight", u.unit));
                }
                if conversions.convert_unit(1.0, &u.unit, name).is_err() {
                    return fail(format!("{name}: unit {:?} is not convertible", u.unit));
                }
            }
        }
        Ok(())
    }
}

/// CSV contents of a generated population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticFiles {
    pub diagnoses: String,
    pub labs: String,
}

impl SyntheticFiles {
    /// Writes `diagnoses.csv` and `labs.csv` into `dir`, creating it.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("diagnoses.csv"), &self.diagnoses)?;
        fs::write(dir.join("labs.csv"), &self.labs)?;
        Ok(())
    }
}

fn pick_weighted<'a, T>(rng: &mut SynthRng, items: &'a [(T, f64)]) -> &'a T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    for (item, w) in items {
        acc += w;
        if target < acc {
            return item;
        }
    }
    &items[items.len() - 1].0
}

fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Fixed-point rendering without trailing zeros.
fn render(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.into() }
    } else {
        s
    }
}

fn random_date(rng: &mut SynthRng, period: &IndexPeriod) -> NaiveDate {
    let span = (period.end - period.start).num_days() as usize + 1;
    period.start + Days::new(rng.below(span) as u64)
}

/// Generates both files. Identical configs give byte-identical output.
pub fn generate(config: &PopulationConfig, conversions: &ConversionTable) -> Result<SyntheticFiles> {
    config.validate(conversions)?;
    let mut rng = SynthRng::new(config.seed);
    let width = config.n_patients.to_string().len().max(6);
    let icd: Vec<(&str, f64)> = config.icd_mix.iter().map(|(c, p)| (c.as_str(), *p)).filter(|(_, p)| *p > 0.0).collect();
    let units: Vec<Vec<(&str, f64)>> = config
        .variables
        .iter()
        .map(|v| {
            if v.units.is_empty() {
                vec![(conversions.canonical_unit(&v.variable).unwrap_or_default(), 1.0)]
            } else {
                v.units.iter().map(|u| (u.unit.as_str(), u.weight)).collect()
            }
        })
        .collect();

    let mut diagnoses = csv::Writer::from_writer(Vec::new());
    let mut labs = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    diagnoses.write_record(["patient_id", "icd10_code", "diagnosis_date"]).map_err(csv_err)?;
    labs.write_record(["patient_id", "variable", "value", "unit", "lab_date"]).map_err(csv_err)?;

    let count = |rng: &mut SynthRng, r: CountRange| r.min + rng.below(r.max - r.min + 1);
    for i in 0..config.n_patients {
        let id = format!("P{:0width$}", i + 1);
        let mut latest = config.date_range.start;
        for _ in 0..count(&mut rng, config.diagnoses_per_patient) {
            let code = *pick_weighted(&mut rng, &icd);
            let date = random_date(&mut rng, &config.date_range);
            latest = latest.max(date);
            diagnoses.write_record([id.as_str(), code, &date.to_string()]).map_err(csv_err)?;
        }
        for (spec, units) in config.variables.iter().zip(&units) {
            if rng.uniform() < spec.missing_probability {
                continue;
            }
            for _ in 0..count(&mut rng, config.labs_per_patient) {
                let raw = match spec.distribution {
                    Distribution::Normal { mean, sd } => rng.normal(mean, sd),
                    Distribution::Lognormal { mu, sigma } => rng.lognormal(mu, sigma),
                };
                let clamped = raw.max(spec.min.unwrap_or(f64::NEG_INFINITY)).min(spec.max.unwrap_or(f64::INFINITY));
                let value = round_to(clamped, spec.decimals);
                let unit = *pick_weighted(&mut rng, units);
                let shown = conversions.from_canonical(value, unit, &spec.variable)?;
                let date = match config.lab_offset_days {
                    Some(o) => {
                        let offset = o.min + rng.below((o.max - o.min + 1) as usize) as i64;
                        (latest + chrono::Duration::days(offset)).clamp(config.date_range.start, config.date_range.end)
                    }
                    None => random_date(&mut rng, &config.date_range),
                };
                let text = render(shown, spec.decimals as usize + 6);
                labs.write_record([id.as_str(), spec.variable.as_str(), &text, unit, &date.to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    let finish = |w: csv::Writer<Vec<u8>>| -> Result<String> {
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
    };
    Ok(SyntheticFiles {
        diagnoses: finish(diagnoses)?,
        labs: finish(labs)?,
    })
}
