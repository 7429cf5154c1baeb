#![allow(dead_code)]

use std::collections::BTreeMap;

use gsn_engine::caseio::parse_native;
use gsn_engine::inference::{run_fixpoint, FlagAssignment, InferenceConfig};
use gsn_engine::model::Case;
use gsn_engine::store::Snapshot;

pub mod procedural;

pub const NOW: &str = "2025-05-13T00:00:00Z";

pub fn fixture_text(name: &str) -> String {
    let path = format!("{}/fixtures/{name}.gsn.json", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn fixture(name: &str) -> Case {
    parse_native(&fixture_text(name)).unwrap().case
}

pub fn snapshot(name: &str) -> Snapshot {
    Snapshot::new(fixture(name), 0)
}

pub fn infer(case: &Case) -> FlagAssignment {
    run_fixpoint(case, &InferenceConfig::default()).unwrap().assignment
}

pub fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn ids(v: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = v.iter().map(|s| s.to_string()).collect();
    out.sort();
    out
}

/// Expected rows of every catalogue query on the LLM fixture.
pub fn expected_rows() -> Vec<(&'static str, Vec<String>)> {
    vec![
        ("AE-01", ids(&["G-attack-resistance"])),
        ("AE-02", ids(&["Sn-redteam"])),
        ("AE-03", ids(&["G-benchmark-coverage"])),
        ("AE-04", ids(&["D-inj", "Sn-monitor-logs", "Sn-tpl"])),
        ("AE-05", ids(&["Sn-filter-tests", "Sn-perplexity-cal", "Sn-redteam"])),
        ("DE-01", ids(&["G-benchmark-coverage"])),
        ("DE-05", ids(&["G-exfiltration", "G-top"])),
        (
            "AU-02",
            ids(&[
                "G-jailbreak-filter",
                "G-injection",
                "Sn-filter-tests",
                "Sn-redteam",
                "ART-filter",
                "ART-redteam",
            ]),
        ),
        ("AU-03", ids(&["D-jailbreak", "G-jailbreak-filter", "Sn-filter-tests"])),
        ("AU-05", ids(&["Sn-benchmark-2"])),
    ]
}
