//! Fixtures and an independent brute-force re-implementation of the cohort
//! rules, used as the reference for the library.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use aico_core::{
    generate, Bound, ComputableCriterion, ConversionTable, IndexPeriod, MeasurementPolicy, MissingPolicy,
    PopulationConfig, Resources,
};
use chrono::{Datelike, NaiveDate};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Writes a default-config population into `dir`.
pub fn write_population(dir: &Path, seed: u64, n: usize) {
    let config = PopulationConfig::default_config(seed, n);
    generate(&config, &ConversionTable::builtin()).unwrap().write_to(dir).unwrap();
}

/// The NCT02513394 index period: Jan 2014 – Jan 2019 with the enrollment
/// window and a two-year lookback.
pub fn nct02513394_period() -> IndexPeriod {
    IndexPeriod::new(date("2014-01-01"), date("2019-01-31"))
        .unwrap()
        .with_enrollment(date("2015-08-26"), date("2019-02-11"), Some(2))
        .unwrap()
}

pub fn base_criteria() -> Vec<ComputableCriterion> {
    vec![
        ComputableCriterion::new("absolute neutrophil count", Some(Bound::inclusive(1.5)), None, "10^9/L"),
        ComputableCriterion::new("hemoglobin", Some(Bound::inclusive(10.0)), None, "g/dL"),
        ComputableCriterion::new("bilirubin", None, Some(Bound::inclusive(3.6)), "mg/dL"),
        ComputableCriterion::new("ast", None, Some(Bound::inclusive(36.0)), "U/L"),
    ]
}

pub fn resources() -> Resources {
    Resources::builtin()
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// Multiplier and divisor into the canonical unit, written out by hand for the
/// units the default population emits.
fn oracle_factor(variable: &str, unit: &str) -> (f64, f64) {
    match (variable, unit) {
        ("absolute neutrophil count" | "platelets", "10^9/L") => (1.0, 1.0),
        ("absolute neutrophil count" | "platelets", "/mcL" | "cells/mm3") => (1.0, 1000.0),
        ("hemoglobin", "g/dL") => (1.0, 1.0),
        ("hemoglobin", "g/L") => (1.0, 10.0),
        ("bilirubin" | "creatinine", "mg/dL") => (1.0, 1.0),
        ("ast" | "alt", "U/L" | "IU/L") => (1.0, 1.0),
        other => panic!("oracle has no factor for {other:?}"),
    }
}

struct LabRow {
    variable: String,
    value: f64,
    date: NaiveDate,
}

/// Raw CSV rows grouped by patient, in file order.
pub struct Oracle {
    patients: BTreeSet<String>,
    diagnoses: HashMap<String, Vec<(String, NaiveDate)>>,
    labs: HashMap<String, Vec<LabRow>>,
}

pub struct OracleResult {
    pub target: BTreeSet<String>,
    pub members: BTreeSet<String>,
    /// Target size, then remaining after each criterion.
    pub attrition: Vec<usize>,
}

fn years_before(d: NaiveDate, years: u32) -> NaiveDate {
    let y = d.year() - years as i32;
    NaiveDate::from_ymd_opt(y, d.month(), d.day()).unwrap_or_else(|| NaiveDate::from_ymd_opt(y, d.month(), d.day() - 1).unwrap())
}

impl Oracle {
    pub fn load(dir: &Path) -> Self {
        let mut oracle = Oracle {
            patients: BTreeSet::new(),
            diagnoses: HashMap::new(),
            labs: HashMap::new(),
        };
        let dx = std::fs::read_to_string(dir.join("diagnoses.csv")).unwrap();
        for line in dx.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            oracle.patients.insert(f[0].to_string());
            oracle.diagnoses.entry(f[0].to_string()).or_default().push((f[1].to_string(), date(f[2])));
        }
        let labs = std::fs::read_to_string(dir.join("labs.csv")).unwrap();
        for line in labs.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let raw: f64 = f[2].parse().unwrap();
            let (mul, div) = oracle_factor(f[1], f[3]);
            oracle.patients.insert(f[0].to_string());
            oracle.labs.entry(f[0].to_string()).or_default().push(LabRow {
                variable: f[1].to_string(),
                value: raw * mul / div,
                date: date(f[4]),
            });
        }
        oracle
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn in_target(&self, patient: &str, prefix: &str, period: &IndexPeriod) -> bool {
        let norm = |s: &str| s.replace('.', "").to_uppercase();
        let prefix = norm(prefix);
        let mut last: Option<NaiveDate> = None;
        for (code, d) in self.diagnoses.get(patient).into_iter().flatten() {
            if norm(code).starts_with(&prefix) && last.is_none_or(|l| *d > l) {
                last = Some(*d);
            }
        }
        let Some(d) = last else { return false };
        if d < period.start || d > period.end {
            return false;
        }
        if let (Some(es), Some(k)) = (period.enrollment_start, period.lookback_years) {
            if d < years_before(es, k) {
                return false;
            }
        }
        if let Some(ee) = period.enrollment_end {
            if d >= ee {
                return false;
            }
        }
        true
    }

    pub fn value(&self, patient: &str, variable: &str, period: &IndexPeriod, policy: MeasurementPolicy) -> Option<f64> {
        let rows: Vec<&LabRow> = self
            .labs
            .get(patient)
            .into_iter()
            .flatten()
            .filter(|r| r.variable == variable && r.date >= period.start && r.date <= period.end)
            .collect();
        if rows.is_empty() {
            return None;
        }
        Some(match policy {
            MeasurementPolicy::MostRecent => {
                let mut best = rows[0];
                for r in &rows {
                    if r.date >= best.date {
                        best = r;
                    }
                }
                best.value
            }
            MeasurementPolicy::Mean => rows.iter().map(|r| r.value).sum::<f64>() / rows.len() as f64,
            MeasurementPolicy::Min => rows.iter().map(|r| r.value).fold(f64::MAX, f64::min),
            MeasurementPolicy::Max => rows.iter().map(|r| r.value).fold(f64::MIN, f64::max),
        })
    }

    fn admits(value: Option<f64>, c: &ComputableCriterion, missing: MissingPolicy) -> bool {
        let Some(v) = value else {
            return missing == MissingPolicy::Include;
        };
        if let Some(l) = c.lower {
            if v < l.value || (v == l.value && !l.inclusive) {
                return false;
            }
        }
        if let Some(u) = c.upper {
            if v > u.value || (v == u.value && !u.inclusive) {
                return false;
            }
        }
        true
    }

    pub fn evaluate(
        &self,
        prefix: &str,
        period: &IndexPeriod,
        criteria: &[ComputableCriterion],
        missing: MissingPolicy,
        policy: MeasurementPolicy,
    ) -> OracleResult {
        let target: BTreeSet<String> =
            self.patients.iter().filter(|p| self.in_target(p, prefix, period)).cloned().collect();
        let mut attrition = vec![target.len()];
        let mut alive: Vec<&String> = target.iter().collect();
        for c in criteria {
            alive.retain(|p| Self::admits(self.value(p, &c.variable, period, policy), c, missing));
            attrition.push(alive.len());
        }
        let members = alive.into_iter().cloned().collect();
        OracleResult {
            target,
            members,
            attrition,
        }
    }
}

// ---------------------------------------------------------------------------
// Random criteria
// ---------------------------------------------------------------------------

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[(self.uniform() * items.len() as f64) as usize]
    }
}

/// (variable, canonical unit, low, high, decimals of generated data)
pub const VARIABLE_RANGES: [(&str, &str, f64, f64, i32); 7] = [
    ("absolute neutrophil count", "10^9/L", 0.5, 7.0, 2),
    ("hemoglobin", "g/dL", 7.0, 16.0, 1),
    ("bilirubin", "mg/dL", 0.2, 2.0, 2),
    ("ast", "U/L", 10.0, 60.0, 0),
    ("alt", "U/L", 10.0, 60.0, 0),
    ("creatinine", "mg/dL", 0.4, 1.5, 2),
    ("platelets", "10^9/L", 100.0, 400.0, 0),
];

fn threshold(rng: &mut Rng, lo: f64, hi: f64, decimals: i32) -> f64 {
    let v = rng.range(lo, hi);
    if rng.chance(0.5) {
        // on the data grid, so inclusivity matters
        let s = 10f64.powi(decimals);
        (v * s).round() / s
    } else {
        v
    }
}

pub fn random_criteria(rng: &mut Rng) -> Vec<ComputableCriterion> {
    let mut out = Vec::new();
    for (variable, unit, lo, hi, decimals) in VARIABLE_RANGES {
        if !rng.chance(0.5) {
            continue;
        }
        let mut lower = rng.chance(0.7).then(|| threshold(rng, lo, hi, decimals));
        let mut upper = rng.chance(0.4).then(|| threshold(rng, lo, hi, decimals));
        if lower.is_none() && upper.is_none() {
            lower = Some(threshold(rng, lo, hi, decimals));
        }
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                (lower, upper) = (Some(u), Some(l));
            }
        }
        let bound = |rng: &mut Rng, v: Option<f64>| v.map(|value| Bound { value, inclusive: rng.chance(0.7) });
        let lower = bound(rng, lower);
        let upper = bound(rng, upper);
        out.push(ComputableCriterion::new(variable, lower, upper, unit));
    }
    out
}

/// Loosens some bounds of `criteria`: lowers lower bounds, raises upper
/// bounds, drops sides, or makes exclusive bounds inclusive.
pub fn relax(rng: &mut Rng, criteria: &[ComputableCriterion]) -> Vec<ComputableCriterion> {
    let mut out = Vec::new();
    for c in criteria {
        if rng.chance(0.1) {
            continue;
        }
        let mut c = c.clone();
        let step = |rng: &mut Rng, b: Bound, sign: f64| -> Option<Bound> {
            match (rng.uniform() * 4.0) as usize {
                0 => Some(b),
                1 => Some(Bound { value: b.value + sign * rng.range(0.0, b.value.abs() * 0.5 + 1.0), ..b }),
                2 => Some(Bound { inclusive: true, ..b }),
                _ => {
                    if rng.chance(0.3) {
                        None
                    } else {
                        Some(Bound { value: b.value + sign * rng.range(0.0, 0.5), inclusive: true })
                    }
                }
            }
        };
        c.lower = c.lower.and_then(|b| step(rng, b, -1.0));
        c.upper = c.upper.and_then(|b| step(rng, b, 1.0));
        out.push(c);
    }
    out
}

pub const PREFIXES: [&str; 5] = ["C50", "C50.9", "c501", "I10", "E11"];

pub fn random_period(rng: &mut Rng) -> IndexPeriod {
    match (rng.uniform() * 3.0) as usize {
        0 => IndexPeriod::new(date("2009-01-01"), date("2021-12-31")).unwrap(),
        1 => nct02513394_period(),
        _ => IndexPeriod::new(date("2012-03-01"), date("2016-11-30")).unwrap(),
    }
}
