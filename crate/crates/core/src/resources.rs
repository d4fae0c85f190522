//! Loaded vocabularies and the trial → computable-criteria pipeline.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{attach_bounds, extract_entities, segment_criteria, ExtractedEntity, Section, TrialRecord};
use crate::lexicon::Lexicon;
use crate::normalization::{
    to_computable, Bound, ComputableCriterion, ConversionTable, NonComputable, NonComputableReason, SynonymTable,
    UlnTable,
};

/// Lexicon, synonyms, unit conversions and ULN values used by the pipeline.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub synonyms: SynonymTable,
    pub conversions: ConversionTable,
    pub uln: UlnTable,
}

impl Default for Resources {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Resources {
    pub fn builtin() -> Self {
        Resources {
            lexicon: Lexicon::builtin(),
            synonyms: SynonymTable::builtin(),
            conversions: ConversionTable::builtin(),
            uln: UlnTable::builtin(),
        }
    }

    /// Builtin tables overlaid with whichever of `lexicon.txt`,
    /// `synonyms.txt`, `conversions.csv` and `uln.csv` exist in `dir`.
    /// Entries in the directory files win over builtin ones.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut resources = Self::builtin();
        let read = |name: &str| -> Result<Option<(String, String)>> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(None);
            }
            Ok(Some((fs::read_to_string(&path)?, path.display().to_string())))
        };
        if let Some((text, source)) = read("lexicon.txt")? {
            resources.lexicon.extend(&Lexicon::parse(&text, &source)?);
        }
        if let Some((text, source)) = read("synonyms.txt")? {
            let table = SynonymTable::parse(&text, &source)?;
            resources
                .synonyms
                .extend(&table)
                .map_err(|message| Error::Resource { source_name: source, message })?;
        }
        if let Some((text, source)) = read("conversions.csv")? {
            resources.conversions.extend(&ConversionTable::parse(&text, &source)?);
        }
        if let Some((text, source)) = read("uln.csv")? {
            resources.uln.extend(&UlnTable::parse(&text, &source)?);
        }
        Ok(resources)
    }

    /// Extracted entities for every sentence of a trial, with canonical names
    /// filled in for lexical entities.
    pub fn trial_entities(&self, trial: &TrialRecord) -> Result<Vec<ExtractedEntity>> {
        let mut out = Vec::new();
        for sentence in segment_criteria(trial)? {
            for mut entity in extract_entities(&sentence, &self.lexicon) {
                if !entity.entity_type.is_bound() {
                    let name = entity.canonical.as_deref().unwrap_or(&entity.raw_text);
                    entity.canonical = Some(crate::canonicalize_name(name, &self.synonyms));
                }
                out.push(entity);
            }
        }
        Ok(out)
    }

    /// Runs segmentation, extraction, bound attachment and normalization.
    pub fn trial_criteria(
        &self,
        trial: &TrialRecord,
        available: &BTreeSet<String>,
        options: CriteriaOptions,
    ) -> Result<TrialCriteria> {
        let mut result = TrialCriteria {
            trial_id: trial.trial_id.clone(),
            computable: Vec::new(),
            non_computable: Vec::new(),
            unattached_bounds: 0,
            skipped_exclusion: 0,
        };
        for sentence in segment_criteria(trial)? {
            let entities = extract_entities(&sentence, &self.lexicon);
            let attached = attach_bounds(&entities);
            result.unattached_bounds += attached.unattached.len();
            for variable in &attached.variables {
                if variable.bounds.is_empty() {
                    continue;
                }
                let outcome = to_computable(variable, self, available);
                match (sentence.section, outcome) {
                    (Section::Inclusion, Ok(c)) => result.computable.push(c),
                    (Section::Exclusion, Ok(_)) if !options.include_exclusion => result.skipped_exclusion += 1,
                    (Section::Exclusion, Ok(c)) => match negate_exclusion(&c) {
                        Some(n) => result.computable.push(n),
                        None => result.non_computable.push(NonComputable {
                            variable: c.variable.clone(),
                            reason: NonComputableReason::TwoSidedExclusion,
                            source: c.source.clone(),
                        }),
                    },
                    (_, Err(nc)) => result.non_computable.push(nc),
                }
            }
        }
        Ok(result)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaOptions {
    /// Score exclusion-section thresholds too (as their complement).
    pub include_exclusion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCriteria {
    pub trial_id: String,
    pub computable: Vec<ComputableCriterion>,
    pub non_computable: Vec<NonComputable>,
    pub unattached_bounds: usize,
    /// Computable exclusion thresholds left out of scoring.
    pub skipped_exclusion: usize,
}

/// The admissible complement of a one-sided exclusion threshold: excluding
/// `x > 5` admits `x <= 5`. Two-sided ranges have no single-interval
/// complement.
pub fn negate_exclusion(criterion: &ComputableCriterion) -> Option<ComputableCriterion> {
    let flip = |b: Bound| Bound {
        value: b.value,
        inclusive: !b.inclusive,
    };
    let (lower, upper) = match (criterion.lower, criterion.upper) {
        (Some(l), None) => (None, Some(flip(l))),
        (None, Some(u)) => (Some(flip(u)), None),
        _ => return None,
    };
    Some(ComputableCriterion {
        lower,
        upper,
        ..criterion.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Phase;

    fn available() -> BTreeSet<String> {
        ["absolute neutrophil count", "hemoglobin", "bilirubin", "ast", "alt", "creatinine", "platelets"]
            .into_iter()
            .map(String::from)
            .collect()
    }

    fn trial(inclusion: &str, exclusion: &str) -> TrialRecord {
        TrialRecord {
            trial_id: "NCT02513394".into(),
            title: String::new(),
            phase: Phase::Three,
            condition: "breast cancer".into(),
            enrollment_start: None,
            enrollment_end: None,
            inclusion_text: inclusion.into(),
            exclusion_text: exclusion.into(),
        }
    }

    #[test]
    fn nct02513394_inclusion_criteria() {
        let text = "Absolute neutrophil count >= 1.5 x 10^9/L\nHemoglobin >= 10 g/dL\nTotal Bilirubin <= 3 x ULN\nAST <= 1.5 x ULN\nECOG <= 1";
        let r = Resources::builtin()
            .trial_criteria(&trial(text, ""), &available(), CriteriaOptions::default())
            .unwrap();
        let got: Vec<String> = r.computable.iter().map(|c| c.to_string()).collect();
        assert_eq!(got.len(), 4);
        assert_eq!(got[0], "absolute neutrophil count >= 1.5 10^9/L");
        assert_eq!(got[1], "hemoglobin >= 10 g/dL");
        assert!(got[2].starts_with("bilirubin <= 3.6"));
        assert_eq!(got[3], "ast <= 36 U/L");
        assert_eq!(r.non_computable.len(), 1);
        assert_eq!(r.non_computable[0].variable, "ecog");
        assert_eq!(r.non_computable[0].reason, NonComputableReason::VariableUnavailable);
    }

    #[test]
    fn exclusion_thresholds_flag_controlled() {
        let t = trial("Hemoglobin >= 9 g/dL", "ALT > 5 x ULN\nAST > 5 x ULN");
        let res = Resources::builtin();
        let off = res.trial_criteria(&t, &available(), CriteriaOptions::default()).unwrap();
        assert_eq!(off.computable.len(), 1);
        // ALT has no default ULN, AST does
        assert_eq!(off.skipped_exclusion, 1);
        assert_eq!(off.non_computable[0].reason, NonComputableReason::MissingUln);
        let on = res
            .trial_criteria(&t, &available(), CriteriaOptions { include_exclusion: true })
            .unwrap();
        assert_eq!(on.computable.len(), 2);
        assert_eq!(on.computable[1].upper, Some(Bound::inclusive(120.0)));
    }

    #[test]
    fn unknown_unit_is_reported() {
        let t = trial("Hemoglobin >= 9 furlongs/dL", "");
        let r = Resources::builtin()
            .trial_criteria(&t, &available(), CriteriaOptions::default())
            .unwrap();
        assert!(r.computable.is_empty());
        assert!(matches!(r.non_computable[0].reason, NonComputableReason::UnknownUnit { .. }));
    }

    #[test]
    fn from_dir_overlays_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("uln.csv"), "variable,uln\nalt,33\n").unwrap();
        std::fs::write(dir.path().join("lexicon.txt"), "neutropenia||disease\n").unwrap();
        let r = Resources::from_dir(dir.path()).unwrap();
        assert_eq!(r.uln.get("alt"), Some(33.0));
        assert_eq!(r.uln.get("ast"), Some(24.0));
        assert!(r.lexicon.get("neutropenia").is_some());
        assert!(r.lexicon.get("hemoglobin").is_some());
    }
}
