use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::PathBuf;

use aico_core::{
    common_variables, ingest_trials, read_trials, variable_frequency, EntityType, Error, Resources, Selection,
};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/trials_125.jsonl")
}

/// Trials per variable, counted by keyword over the raw inclusion text.
fn keyword_counts() -> BTreeMap<&'static str, usize> {
    let keywords: [(&str, &[&str]); 8] = [
        ("ecog", &["ECOG"]),
        ("platelets", &["Platelet"]),
        ("creatinine", &["reatinine"]),
        ("bilirubin", &["bilirubin"]),
        ("hemoglobin", &["Hemoglobin", "Hgb"]),
        ("absolute neutrophil count", &["ANC"]),
        ("ast", &["AST"]),
        ("alt", &["ALT"]),
    ];
    let text = std::fs::read_to_string(fixture()).unwrap();
    let inclusions: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["inclusion_text"].as_str().unwrap().to_string())
        .collect();
    keywords
        .into_iter()
        .map(|(name, words)| (name, inclusions.iter().filter(|t| words.iter().any(|w| t.contains(w))).count()))
        .collect()
}

#[test]
fn fixture_has_125_trials() {
    let corpus = ingest_trials(&fixture()).unwrap();
    assert_eq!(corpus.len(), 125);
    assert!(corpus.get("NCT10000000").is_some());
}

#[test]
fn frequencies_match_keyword_counts() {
    let corpus = ingest_trials(&fixture()).unwrap();
    let mentions = corpus.mentions(&Resources::builtin()).unwrap();
    let freq = variable_frequency(&mentions, EntityType::ClinicalVariable);
    let want = keyword_counts();
    for (variable, n) in &want {
        let got = freq.iter().find(|f| f.variable == *variable).map_or(0, |f| f.n_trials);
        assert_eq!(got, *n, "{variable}");
    }
    assert!(freq.windows(2).all(|w| w[0].n_trials >= w[1].n_trials));
    let top = common_variables(&freq, Selection::TopK(5)).unwrap();
    assert_eq!(top, ["ecog", "platelets", "creatinine", "bilirubin", "hemoglobin"]);
    let supported = common_variables(&freq, Selection::MinSupport(50)).unwrap();
    assert!(supported.iter().all(|v| freq.iter().any(|f| &f.variable == v && f.n_trials >= 50)));
}

#[test]
fn empty_file_is_an_empty_corpus() {
    let corpus = read_trials(Cursor::new("\n\n"), "empty").unwrap();
    assert!(corpus.is_empty());
    assert!(variable_frequency(&corpus.mentions(&Resources::builtin()).unwrap(), EntityType::ClinicalVariable).is_empty());
}

#[test]
fn duplicate_ids_are_rejected_with_line() {
    let line = r#"{"trial_id":"NCT00000001","inclusion_text":"Hgb >= 9 g/dL"}"#;
    let err = read_trials(Cursor::new(format!("{line}\n\n{line}\n")), "dup").unwrap_err();
    assert!(matches!(err, Error::Ingest { line: 3, .. }), "{err}");
}

#[test]
fn malformed_json_reports_line() {
    let err = read_trials(Cursor::new("{\"trial_id\":\"NCT00000001\"}\nnot json\n"), "bad").unwrap_err();
    assert!(matches!(err, Error::Ingest { line: 2, .. }), "{err}");
}

#[test]
fn top_k_zero_is_invalid() {
    assert!(matches!(common_variables(&[], Selection::TopK(0)), Err(Error::InvalidParameter(_))));
}
