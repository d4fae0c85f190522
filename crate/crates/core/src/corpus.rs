//! Trial corpus ingestion and common-variable frequency ranking.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{EntityType, TrialRecord};
use crate::resources::Resources;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    trials: Vec<TrialRecord>,
}

impl Corpus {
    /// Builds a corpus, rejecting invalid records and duplicate ids.
    pub fn from_trials(trials: Vec<TrialRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (idx, trial) in trials.iter().enumerate() {
            let err = |message| Error::Ingest {
                source_name: "corpus".into(),
                line: idx + 1,
                message,
            };
            trial.validate().map_err(err)?;
            if !seen.insert(trial.trial_id.as_str()) {
                return Err(err(format!("duplicate trial_id {}", trial.trial_id)));
            }
        }
        Ok(Corpus { trials })
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn get(&self, trial_id: &str) -> Option<&TrialRecord> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Canonicalized entity mentions of every trial. Trials with no criteria
    /// text contribute nothing.
    pub fn mentions(&self, resources: &Resources) -> Result<Vec<Mention>> {
        let mut out = Vec::new();
        for trial in &self.trials {
            let entities = match resources.trial_entities(trial) {
                Ok(e) => e,
                Err(Error::EmptyCriteria { .. }) => continue,
                Err(e) => return Err(e),
            };
            out.extend(entities.into_iter().filter(|e| !e.entity_type.is_bound()).map(|e| Mention {
                trial_id: trial.trial_id.clone(),
                variable: e.canonical.unwrap_or_else(|| e.raw_text.to_lowercase()),
                entity_type: e.entity_type,
            }));
        }
        Ok(out)
    }
}

/// Reads a JSON-lines trial file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn ingest_trials(path: &Path) -> Result<Corpus> {
    let file = File::open(path)?;
    read_trials(file, &path.display().to_string())
}

pub fn read_trials(reader: impl Read, source_name: &str) -> Result<Corpus> {
    let mut trials = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Ingest {
            source_name: source_name.to_string(),
            line: idx + 1,
            message,
        };
        let trial: TrialRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        trial.validate().map_err(err)?;
        if !seen.insert(trial.trial_id.clone()) {
            return Err(err(format!("duplicate trial_id {}", trial.trial_id)));
        }
        trials.push(trial);
    }
    log::info!("{source_name}: ingested {} trials", trials.len());
    Ok(Corpus { trials })
}

/// One canonicalized entity occurrence in a trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub trial_id: String,
    pub variable: String,
    pub entity_type: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableFrequency {
    pub variable: String,
    pub entity_type: EntityType,
    /// Unique trials mentioning the variable.
    pub n_trials: usize,
    pub n_mentions: usize,
}

/// Ranks variables of one entity type by the number of unique trials that
/// mention them (descending), ties broken by name (ascending).
pub fn variable_frequency(mentions: &[Mention], entity_type: EntityType) -> Vec<VariableFrequency> {
    let mut by_variable: BTreeMap<&str, (BTreeSet<&str>, usize)> = BTreeMap::new();
    for m in mentions.iter().filter(|m| m.entity_type == entity_type) {
        let entry = by_variable.entry(&m.variable).or_default();
        entry.0.insert(&m.trial_id);
        entry.1 += 1;
    }
    let mut out: Vec<VariableFrequency> = by_variable
        .into_iter()
        .map(|(variable, (trials, n_mentions))| VariableFrequency {
            variable: variable.to_string(),
            entity_type,
            n_trials: trials.len(),
            n_mentions,
        })
        .collect();
    out.sort_by(|a, b| b.n_trials.cmp(&a.n_trials).then_with(|| a.variable.cmp(&b.variable)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The `k` highest-ranked variables.
    TopK(usize),
    /// Every variable mentioned by at least this many trials.
    MinSupport(usize),
}

/// Selects the common variables from a ranking, preserving rank order.
pub fn common_variables(frequencies: &[VariableFrequency], selection: Selection) -> Result<Vec<String>> {
    let names = frequencies.iter().map(|f| f.variable.clone());
    match selection {
        Selection::TopK(0) => Err(Error::InvalidParameter("top_k must be positive".into())),
        Selection::TopK(k) => Ok(names.take(k).collect()),
        Selection::MinSupport(n) => Ok(frequencies
            .iter()
            .filter(|f| f.n_trials >= n)
            .map(|f| f.variable.clone())
            .collect()),
    }
}
