//! Eligibility-criteria extraction and real-world cohort evaluation.
//!
//! The crate turns free-text trial eligibility criteria into unit-normalized
//! threshold criteria, evaluates them against a patient store, and reports the
//! generalizability of a trial design as the fraction of the target cohort
//! (patients with the indication) that the design admits.
//!
//! Pipeline:
//!
//! ```text
//! TrialRecord ──segment──▶ CriterionSentence ──extract──▶ ExtractedEntity
//!      ──attach_bounds──▶ VariableBounds ──to_computable──▶ ComputableCriterion
//! PatientStore ──target_cohort──▶ Cohort ──study_cohort──▶ GeneralizabilityReport
//! ```

pub mod cohort;
pub mod comparator;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod lexicon;
pub mod normalization;
pub mod patients;
pub mod resources;
pub mod synth;
pub mod whatif;

mod rng;

pub use cohort::{
    attrition, generalizability, study_cohort, AttritionStep, Cohort, Generalizability, GeneralizabilityReport,
    MissingPolicy, StudyCohort,
};
pub use comparator::Comparator;
pub use corpus::{common_variables, ingest_trials, read_trials, variable_frequency, Corpus, Mention, Selection, VariableFrequency};
pub use error::{Error, Result};
pub use extraction::{
    attach_bounds, extract_entities, segment_criteria, AttachedBounds, CriterionSentence,
    EntityType, ExtractedEntity, Phase, Section, SentenceRef, Span, TrialRecord, VariableBounds,
};
pub use lexicon::{Lexicon, LexiconEntry};
pub use normalization::{
    canonicalize_name, parse_bound_text, resolve_uln, to_computable, Bound, BoundExpression,
    BoundValue, ComputableCriterion, ConversionTable, NonComputable, Quantity, SynonymTable,
    UlnTable,
};
pub use patients::{IndexPeriod, IngestReport, MeasurementPolicy, PatientRecord, PatientStore, PatientVector};
pub use resources::{CriteriaOptions, Resources, TrialCriteria};
pub use synth::{generate, PopulationConfig, SyntheticFiles};
pub use whatif::{
    apply_scenario, compare, evaluate_scenario, Comparison, ComparisonRow, GradePreset, Override, OverrideValue,
    Scenario, Side,
};
