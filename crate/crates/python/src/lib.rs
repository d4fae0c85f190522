//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists (through JSON), so Python callers see the same shapes as the HTTP
//! API.
//!
//! ```python
//! import aico
//! store = aico.PatientStore.ingest_dir("data/")
//! report = aico.evaluate_scenario(scenario_dict, store)
//! print(report["score_percent"])
//! ```

use std::path::PathBuf;

use aico_core::{
    common_variables, compare, evaluate_scenario as evaluate, generalizability as score, generate,
    variable_frequency, Corpus as CoreCorpus, CriteriaOptions, EntityType, Error, GeneralizabilityReport,
    GradePreset, IndexPeriod, PatientStore as CoreStore, Phase, PopulationConfig, Resources as CoreResources,
    Scenario, Selection, TrialRecord,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(aico, AicoError, PyException, "Engine error; `args` is `(kind, message)`.");

fn err(e: Error) -> PyErr {
    AicoError::new_err((e.kind(), e.to_string()))
}

fn invalid(message: impl ToString) -> PyErr {
    AicoError::new_err(("InvalidParameter", message.to_string()))
}

/// Python object → Rust value, via `json.dumps`.
fn from_py<T: DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match value.extract::<String>() {
        Ok(s) => s,
        Err(_) => PyModule::import(value.py(), "json")?.call_method1("dumps", (value,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(invalid)
}

/// Rust value → Python object, via `json.loads`.
fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(invalid)?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

/// Lexicon, synonyms, unit conversions and ULN values.
#[pyclass(frozen)]
struct Resources {
    inner: CoreResources,
}

#[pymethods]
impl Resources {
    /// Builtin tables, optionally overlaid with the files found in `dir`.
    #[new]
    #[pyo3(signature = (dir=None))]
    fn new(dir: Option<PathBuf>) -> PyResult<Self> {
        let inner = match dir {
            Some(d) => CoreResources::from_dir(&d).map_err(err)?,
            None => CoreResources::builtin(),
        };
        Ok(Resources { inner })
    }

    /// `value` in `unit` expressed in the variable's canonical unit.
    fn convert_unit(&self, value: f64, unit: &str, variable: &str) -> PyResult<f64> {
        self.inner.conversions.convert_unit(value, unit, variable).map_err(err)
    }

    fn canonical_unit(&self, variable: &str) -> Option<String> {
        self.inner.conversions.canonical_unit(variable).map(str::to_string)
    }

    /// Extracted entities for a criteria text, as a list of dicts.
    #[pyo3(signature = (inclusion, exclusion="", trial_id="NCT00000000"))]
    fn extract<'py>(
        &self,
        py: Python<'py>,
        inclusion: &str,
        exclusion: &str,
        trial_id: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let trial = adhoc_trial(trial_id, inclusion, exclusion);
        to_py(py, &self.inner.trial_entities(&trial).map_err(err)?)
    }

    /// Computable and non-computable criteria for a criteria text.
    #[pyo3(signature = (inclusion, available, exclusion="", include_exclusion=false))]
    fn criteria<'py>(
        &self,
        py: Python<'py>,
        inclusion: &str,
        available: Vec<String>,
        exclusion: &str,
        include_exclusion: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let trial = adhoc_trial("NCT00000000", inclusion, exclusion);
        let result = self
            .inner
            .trial_criteria(&trial, &available.into_iter().collect(), CriteriaOptions { include_exclusion })
            .map_err(err)?;
        to_py(py, &result)
    }
}

fn adhoc_trial(trial_id: &str, inclusion: &str, exclusion: &str) -> TrialRecord {
    TrialRecord {
        trial_id: trial_id.into(),
        title: String::new(),
        phase: Phase::NotApplicable,
        condition: String::new(),
        enrollment_start: None,
        enrollment_end: None,
        inclusion_text: inclusion.into(),
        exclusion_text: exclusion.into(),
    }
}

fn resources_or_builtin(resources: Option<&Resources>) -> CoreResources {
    resources.map_or_else(CoreResources::builtin, |r| r.inner.clone())
}

/// Immutable, unit-normalized diagnoses and labs.
#[pyclass(frozen)]
struct PatientStore {
    inner: CoreStore,
    resources: CoreResources,
}

#[pymethods]
impl PatientStore {
    /// Loads `diagnoses.csv` and `labs.csv` from a directory.
    #[staticmethod]
    #[pyo3(signature = (dir, resources=None))]
    fn ingest_dir(py: Python<'_>, dir: PathBuf, resources: Option<&Resources>) -> PyResult<Self> {
        let resources = resources_or_builtin(resources);
        let inner = py.detach(|| CoreStore::ingest_dir(&dir, &resources)).map_err(err)?;
        Ok(PatientStore { inner, resources })
    }

    /// Builds a store from CSV text.
    #[staticmethod]
    #[pyo3(signature = (diagnoses, labs, resources=None))]
    fn from_csv(diagnoses: &str, labs: &str, resources: Option<&Resources>) -> PyResult<Self> {
        let resources = resources_or_builtin(resources);
        let inner = CoreStore::from_readers(diagnoses.as_bytes(), "diagnoses", labs.as_bytes(), "labs", &resources)
            .map_err(err)?;
        Ok(PatientStore { inner, resources })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Ingestion counts, including rejected rows.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.report())
    }

    /// `{variable: (min, max, count)}` over all measurements.
    fn observed_ranges(&self) -> std::collections::BTreeMap<String, (f64, f64, usize)> {
        self.inner.observed_ranges()
    }

    /// Patient ids with a matching diagnosis in the index period.
    fn target_cohort(&self, icd_prefix: &str, index_period: &Bound<'_, PyAny>) -> PyResult<Vec<String>> {
        let period: IndexPeriod = from_py(index_period)?;
        period.validate().map_err(err)?;
        let cohort = self.inner.target_cohort(icd_prefix, &period).map_err(err)?;
        Ok(cohort.patient_ids.into_iter().collect())
    }

    /// Evaluates a scenario dict and returns a report dict.
    fn evaluate<'py>(&self, scenario: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        evaluate_scenario(scenario, self)
    }
}

/// A set of trials loaded from JSON lines.
#[pyclass(frozen)]
struct Corpus {
    inner: CoreCorpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn from_jsonl(path: PathBuf) -> PyResult<Self> {
        Ok(Corpus {
            inner: aico_core::ingest_trials(&path).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn trial_ids(&self) -> Vec<String> {
        self.inner.trials().iter().map(|t| t.trial_id.clone()).collect()
    }

    /// Parsed criteria of one trial against the store's measured variables.
    #[pyo3(signature = (trial_id, store, include_exclusion=false))]
    fn criteria<'py>(
        &self,
        py: Python<'py>,
        trial_id: &str,
        store: &PatientStore,
        include_exclusion: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let trial = self
            .inner
            .get(trial_id)
            .ok_or_else(|| AicoError::new_err(("NotFound", format!("unknown trial {trial_id}"))))?;
        let result = store
            .resources
            .trial_criteria(trial, &store.inner.available_variables(), CriteriaOptions { include_exclusion })
            .map_err(err)?;
        to_py(py, &result)
    }

    /// Variable ranking by number of trials, as a list of dicts. Pass either
    /// `top_k` or `min_support`.
    #[pyo3(signature = (entity_type="clinical_variable", top_k=None, min_support=None, resources=None))]
    fn frequency<'py>(
        &self,
        py: Python<'py>,
        entity_type: &str,
        top_k: Option<usize>,
        min_support: Option<usize>,
        resources: Option<&Resources>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let entity_type: EntityType =
            serde_json::from_value(serde_json::Value::String(entity_type.to_string())).map_err(invalid)?;
        let mentions = self.inner.mentions(&resources_or_builtin(resources)).map_err(err)?;
        let freq = variable_frequency(&mentions, entity_type);
        let selection = match (top_k, min_support) {
            (Some(_), Some(_)) => return Err(invalid("pass top_k or min_support, not both")),
            (_, Some(n)) => Selection::MinSupport(n),
            (Some(k), None) => Selection::TopK(k),
            (None, None) => Selection::MinSupport(0),
        };
        let keep = common_variables(&freq, selection).map_err(err)?.len();
        to_py(py, &freq[..keep])
    }
}

/// Evaluates a scenario (dict or JSON string) against a store.
#[pyfunction]
fn evaluate_scenario<'py>(scenario: &Bound<'py, PyAny>, store: &PatientStore) -> PyResult<Bound<'py, PyAny>> {
    let py = scenario.py();
    let scenario: Scenario = from_py(scenario)?;
    let report = py.detach(|| evaluate(&scenario, &store.inner, &store.resources)).map_err(err)?;
    to_py(py, &report)
}

/// Comparison table of two or more reports over the same target cohort.
#[pyfunction]
fn compare_reports<'py>(reports: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let parsed: Vec<GeneralizabilityReport> = from_py(reports)?;
    to_py(reports.py(), &compare(&parsed).map_err(err)?)
}

/// `(score, "80.15%")` for study and target cohort sizes.
#[pyfunction]
fn generalizability(sc: usize, tc: usize) -> PyResult<(f64, String)> {
    let g = score(sc, tc).map_err(err)?;
    Ok((g.score, g.percent()))
}

/// Criteria and overrides of a grade preset ("1", "2", "G2", "grade 2").
#[pyfunction]
fn grade_preset<'py>(py: Python<'py>, grade: &str) -> PyResult<Bound<'py, PyAny>> {
    let g: GradePreset = grade.parse().map_err(err)?;
    to_py(
        py,
        &serde_json::json!({"grade": g, "criteria": g.criteria(), "overrides": g.overrides()}),
    )
}

/// Writes a seeded synthetic population to `out_dir`. `config` is a
/// population config dict; the builtin one with `n_patients` when absent.
#[pyfunction]
#[pyo3(signature = (seed, out_dir, n_patients=10_000, config=None))]
fn synth_generate(
    py: Python<'_>,
    seed: u64,
    out_dir: PathBuf,
    n_patients: usize,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<()> {
    let mut config: PopulationConfig = match config {
        Some(c) => from_py(c)?,
        None => PopulationConfig::default_config(seed, n_patients),
    };
    config.seed = seed;
    py.detach(|| {
        let files = generate(&config, &CoreResources::builtin().conversions)?;
        std::fs::create_dir_all(&out_dir)?;
        files.write_to(&out_dir)
    })
    .map_err(err)
}

#[pymodule]
pub fn aico(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AicoError", m.py().get_type::<AicoError>())?;
    m.add_class::<Resources>()?;
    m.add_class::<PatientStore>()?;
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(evaluate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(compare_reports, m)?)?;
    m.add_function(wrap_pyfunction!(generalizability, m)?)?;
    m.add_function(wrap_pyfunction!(grade_preset, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    Ok(())
}
