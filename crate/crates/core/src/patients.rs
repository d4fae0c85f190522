//! Patient diagnoses and labs, index-period rules, and per-patient vectors
//! of computable variables.
//!
//! Input files (UTF-8, comma-delimited, quoted fields allowed, ISO-8601 dates):
//!
//! ```text
//! diagnoses.csv: patient_id,icd10_code,diagnosis_date
//! labs.csv:      patient_id,variable,value,unit,lab_date
//! ```
//!
//! Lab rows are canonicalized at load: the variable name goes through the
//! synonym table and the value is converted to the canonical unit. Rows that
//! cannot be read or converted are counted and skipped; more than 10%
//! rejected rows in either file fails the ingest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::normalization::canonicalize_name;
use crate::resources::Resources;

const MAX_REJECT_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnosis {
    pub code: String,
    pub date: NaiveDate,
    key: String,
}

impl Diagnosis {
    pub fn new(code: impl Into<String>, date: NaiveDate) -> Self {
        let code = code.into();
        Diagnosis {
            key: icd_key(&code),
            code,
            date,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabMeasurement {
    pub variable: Arc<str>,
    /// Value in the variable's canonical unit.
    pub value: f64,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    /// Sorted by date, ties in file order.
    pub diagnoses: Vec<Diagnosis>,
    /// Sorted by (variable, date), ties in file order.
    pub labs: Vec<LabMeasurement>,
}

/// A patient reduced to canonical-unit values of the requested variables.
/// Variables without an in-period measurement are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientVector {
    pub patient_id: String,
    pub values: BTreeMap<String, f64>,
    pub resolved_dates: BTreeMap<String, NaiveDate>,
}

impl PatientVector {
    pub fn get(&self, variable: &str) -> Option<f64> {
        self.values.get(variable).copied()
    }
}

/// Calendar window for cohort membership.
///
/// Diagnoses must fall in `[start, end]`. When enrollment fields are set the
/// window is further narrowed to `d >= enrollment_start - lookback_years`
/// and `d < enrollment_end`. Lab measurements always use `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexPeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrollment_start: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrollment_end: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookback_years: Option<u32>,
}

impl IndexPeriod {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let period = IndexPeriod {
            start,
            end,
            enrollment_start: None,
            enrollment_end: None,
            lookback_years: None,
        };
        period.validate()?;
        Ok(period)
    }

    pub fn with_enrollment(mut self, start: NaiveDate, end: NaiveDate, lookback_years: Option<u32>) -> Result<Self> {
        self.enrollment_start = Some(start);
        self.enrollment_end = Some(end);
        self.lookback_years = lookback_years;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::InvalidParameter(format!(
                "index period start {} is after end {}",
                self.start, self.end
            )));
        }
        if let (Some(s), Some(e)) = (self.enrollment_start, self.enrollment_end) {
            if s > e {
                return Err(Error::InvalidParameter(format!("enrollment start {s} is after enrollment end {e}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Earliest admissible last-diagnosis date.
    pub fn diagnosis_floor(&self) -> NaiveDate {
        let lookback = match (self.enrollment_start, self.lookback_years) {
            (Some(start), Some(years)) => start.checked_sub_months(Months::new(years * 12)),
            _ => None,
        };
        lookback.map_or(self.start, |d| d.max(self.start))
    }

    /// Whether a patient's last matching diagnosis date qualifies.
    pub fn admits_diagnosis(&self, date: NaiveDate) -> bool {
        date >= self.diagnosis_floor()
            && date <= self.end
            && self.enrollment_end.is_none_or(|end| date < end)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementPolicy {
    /// Latest in-period measurement; same-day ties take the later file row.
    #[default]
    MostRecent,
    Mean,
    Min,
    Max,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub patients: usize,
    pub diagnosis_rows: usize,
    pub rejected_diagnosis_rows: usize,
    pub lab_rows: usize,
    pub rejected_lab_rows: usize,
}

/// Immutable after ingestion; safe to share across threads for queries.
#[derive(Debug, Clone, Default)]
pub struct PatientStore {
    patients: BTreeMap<String, PatientRecord>,
    report: IngestReport,
}

#[derive(Debug, Deserialize)]
struct DiagnosisRow {
    patient_id: String,
    icd10_code: String,
    diagnosis_date: String,
}

#[derive(Debug, Deserialize)]
struct LabRow {
    patient_id: String,
    variable: String,
    value: String,
    unit: String,
    lab_date: String,
}

fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").ok()
}

/// Uppercase, dots and whitespace removed: `"c50.1"` → `"C501"`.
pub fn icd_key(code: &str) -> String {
    code.chars()
        .filter(|c| *c != '.' && !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

fn check_headers(reader: &mut csv::Reader<impl Read>, expected: &[&str], source_name: &str) -> Result<bool> {
    let headers = reader.headers().map_err(|e| Error::Ingest {
        source_name: source_name.to_string(),
        line: 1,
        message: e.to_string(),
    })?;
    if headers.is_empty() {
        return Ok(false);
    }
    for column in expected {
        if !headers.iter().any(|h| h.trim() == *column) {
            return Err(Error::Ingest {
                source_name: source_name.to_string(),
                line: 1,
                message: format!("missing column {column:?}, expected {}", expected.join(",")),
            });
        }
    }
    Ok(true)
}

fn check_rejects(source_name: &str, rejected: usize, total: usize) -> Result<()> {
    if total > 0 && rejected as f64 > MAX_REJECT_FRACTION * total as f64 {
        return Err(Error::TooManyRejects {
            source_name: source_name.to_string(),
            rejected,
            total,
        });
    }
    Ok(())
}

impl PatientStore {
    pub fn ingest(diagnoses_path: &Path, labs_path: &Path, resources: &Resources) -> Result<Self> {
        let store = Self::from_readers(
            File::open(diagnoses_path)?,
            &diagnoses_path.display().to_string(),
            File::open(labs_path)?,
            &labs_path.display().to_string(),
            resources,
        )?;
        log::info!(
            "loaded {} patients ({} diagnosis rows, {} lab rows, {} + {} rejected)",
            store.report.patients,
            store.report.diagnosis_rows,
            store.report.lab_rows,
            store.report.rejected_diagnosis_rows,
            store.report.rejected_lab_rows
        );
        Ok(store)
    }

    /// Loads `diagnoses.csv` and `labs.csv` from a directory.
    pub fn ingest_dir(dir: &Path, resources: &Resources) -> Result<Self> {
        Self::ingest(&dir.join("diagnoses.csv"), &dir.join("labs.csv"), resources)
    }

    pub fn from_readers(
        diagnoses: impl Read,
        diagnoses_name: &str,
        labs: impl Read,
        labs_name: &str,
        resources: &Resources,
    ) -> Result<Self> {
        let mut patients: BTreeMap<String, PatientRecord> = BTreeMap::new();
        let mut report = IngestReport::default();

        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(diagnoses);
        if check_headers(&mut reader, &["patient_id", "icd10_code", "diagnosis_date"], diagnoses_name)? {
            for (idx, row) in reader.deserialize::<DiagnosisRow>().enumerate() {
                report.diagnosis_rows += 1;
                let parsed = row.ok().and_then(|r| {
                    let date = parse_date(&r.diagnosis_date)?;
                    (!r.patient_id.is_empty() && !r.icd10_code.is_empty()).then_some((r, date))
                });
                let Some((row, date)) = parsed else {
                    report.rejected_diagnosis_rows += 1;
                    log::warn!("{diagnoses_name}, line {}: rejected diagnosis row", idx + 2);
                    continue;
                };
                patients
                    .entry(row.patient_id.clone())
                    .or_insert_with(|| PatientRecord {
                        patient_id: row.patient_id.clone(),
                        ..Default::default()
                    })
                    .diagnoses
                    .push(Diagnosis::new(row.icd10_code, date));
            }
        }
        check_rejects(diagnoses_name, report.rejected_diagnosis_rows, report.diagnosis_rows)?;

        let mut interned: HashMap<String, Arc<str>> = HashMap::new();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(labs);
        if check_headers(&mut reader, &["patient_id", "variable", "value", "unit", "lab_date"], labs_name)? {
            for (idx, row) in reader.deserialize::<LabRow>().enumerate() {
                report.lab_rows += 1;
                let parsed = row.ok().and_then(|r| {
                    let date = parse_date(&r.lab_date)?;
                    let raw: f64 = r.value.parse().ok().filter(|v: &f64| v.is_finite())?;
                    let variable = canonicalize_name(&r.variable, &resources.synonyms);
                    let value = resources.conversions.convert_unit(raw, &r.unit, &variable).ok()?;
                    (!r.patient_id.is_empty()).then_some((r.patient_id, variable, value, date))
                });
                let Some((patient_id, variable, value, date)) = parsed else {
                    report.rejected_lab_rows += 1;
                    log::warn!("{labs_name}, line {}: rejected lab row", idx + 2);
                    continue;
                };
                let variable = interned
                    .entry(variable)
                    .or_insert_with_key(|k| Arc::from(k.as_str()))
                    .clone();
                patients
                    .entry(patient_id.clone())
                    .or_insert_with(|| PatientRecord {
                        patient_id,
                        ..Default::default()
                    })
                    .labs
                    .push(LabMeasurement { variable, value, date });
            }
        }
        check_rejects(labs_name, report.rejected_lab_rows, report.lab_rows)?;

        for patient in patients.values_mut() {
            patient.diagnoses.sort_by_key(|d| d.date);
            patient.labs.sort_by(|a, b| a.variable.cmp(&b.variable).then(a.date.cmp(&b.date)));
        }
        report.patients = patients.len();
        Ok(PatientStore { patients, report })
    }

    pub fn from_records(records: impl IntoIterator<Item = PatientRecord>) -> Self {
        let mut patients = BTreeMap::new();
        for mut r in records {
            r.diagnoses.sort_by_key(|d| d.date);
            r.labs.sort_by(|a, b| a.variable.cmp(&b.variable).then(a.date.cmp(&b.date)));
            patients.insert(r.patient_id.clone(), r);
        }
        let report = IngestReport {
            patients: patients.len(),
            ..Default::default()
        };
        PatientStore { patients, report }
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn get(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.patients.get(patient_id)
    }

    pub fn patients(&self) -> impl Iterator<Item = &PatientRecord> {
        self.patients.values()
    }

    /// Variables with at least one measurement, with (min, max, count) of
    /// their canonical values.
    pub fn observed_ranges(&self) -> BTreeMap<String, (f64, f64, usize)> {
        let mut out: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
        for lab in self.patients.values().flat_map(|p| &p.labs) {
            let e = out
                .entry(lab.variable.to_string())
                .or_insert((f64::INFINITY, f64::NEG_INFINITY, 0));
            e.0 = e.0.min(lab.value);
            e.1 = e.1.max(lab.value);
            e.2 += 1;
        }
        out
    }

    /// Canonical variables present in the store: the computable set.
    pub fn available_variables(&self) -> BTreeSet<String> {
        self.observed_ranges().into_keys().collect()
    }

    /// Records of the target cohort, in patient-id order.
    pub fn target_records<'a>(
        &'a self,
        icd_prefix: &str,
        period: &'a IndexPeriod,
    ) -> Result<impl Iterator<Item = &'a PatientRecord> + 'a> {
        let prefix = icd_key(icd_prefix);
        if prefix.is_empty() {
            return Err(Error::InvalidParameter("icd_prefix must not be empty".into()));
        }
        period.validate()?;
        Ok(self
            .patients
            .values()
            .filter(move |p| p.last_diagnosis(&prefix).is_some_and(|d| period.admits_diagnosis(d))))
    }

    /// Patients whose last diagnosis matching `icd_prefix` (dot-insensitive
    /// prefix match) satisfies the index-period rules.
    pub fn target_cohort(&self, icd_prefix: &str, period: &IndexPeriod) -> Result<Cohort> {
        let patient_ids = self.target_records(icd_prefix, period)?.map(|p| p.patient_id.clone()).collect();
        Ok(Cohort {
            label: format!("target {icd_prefix}"),
            patient_ids,
        })
    }

    /// Vectors for every member of `cohort`.
    pub fn resolve_vectors(
        &self,
        cohort: &Cohort,
        variables: &[String],
        period: &IndexPeriod,
        policy: MeasurementPolicy,
    ) -> HashMap<String, PatientVector> {
        cohort
            .patient_ids
            .iter()
            .filter_map(|id| self.patients.get(id))
            .map(|p| (p.patient_id.clone(), p.resolve_vector(variables, period, policy)))
            .collect()
    }
}

impl PatientRecord {
    /// Latest date among diagnoses whose code starts with `prefix_key`
    /// (already passed through [`icd_key`]).
    pub fn last_diagnosis(&self, prefix_key: &str) -> Option<NaiveDate> {
        self.diagnoses
            .iter()
            .filter(|d| d.key.starts_with(prefix_key))
            .map(|d| d.date)
            .max()
    }

    fn labs_for(&self, variable: &str) -> &[LabMeasurement] {
        let lo = self.labs.partition_point(|l| &*l.variable < variable);
        let hi = self.labs.partition_point(|l| &*l.variable <= variable);
        &self.labs[lo..hi]
    }

    /// One variable's value under `policy` from measurements dated within
    /// `[period.start, period.end]`, with the date of the latest of them.
    pub fn resolve_value(
        &self,
        variable: &str,
        period: &IndexPeriod,
        policy: MeasurementPolicy,
    ) -> Option<(f64, NaiveDate)> {
        let labs = self.labs_for(variable);
        // labs are date-sorted, so the in-period ones are contiguous
        let lo = labs.partition_point(|l| l.date < period.start);
        let hi = labs.partition_point(|l| l.date <= period.end);
        let in_period = labs.get(lo..hi).filter(|s| !s.is_empty())?;
        let values = in_period.iter().map(|l| l.value);
        let value = match policy {
            MeasurementPolicy::MostRecent => in_period[in_period.len() - 1].value,
            MeasurementPolicy::Mean => values.sum::<f64>() / in_period.len() as f64,
            MeasurementPolicy::Min => values.fold(f64::INFINITY, f64::min),
            MeasurementPolicy::Max => values.fold(f64::NEG_INFINITY, f64::max),
        };
        Some((value, in_period[in_period.len() - 1].date))
    }

    /// Resolves each requested variable; see [`PatientRecord::resolve_value`].
    pub fn resolve_vector(&self, variables: &[String], period: &IndexPeriod, policy: MeasurementPolicy) -> PatientVector {
        let mut vector = PatientVector {
            patient_id: self.patient_id.clone(),
            ..Default::default()
        };
        for variable in variables {
            if let Some((value, date)) = self.resolve_value(variable, period, policy) {
                vector.values.insert(variable.clone(), value);
                vector.resolved_dates.insert(variable.clone(), date);
            }
        }
        vector
    }
}
