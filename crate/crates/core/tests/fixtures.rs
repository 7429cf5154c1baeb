mod common;

use common::*;
use gsn_engine::caseio::{parse_interchange, parse_native, serialize_interchange, serialize_native};
use gsn_engine::model::{Flag, Tri};
use gsn_engine::query::run_cq;

#[test]
fn catalogue_rows_on_llm_fixture() {
    procedural::catalogue_rows_on_llm_fixture();
}

#[test]
fn cutoff_can_be_given_directly() {
    let snap = snapshot("llm");
    let rows = run_cq(&snap, "AE-05", &params(&[("cutoff", "2024-11-14T00:00:00Z")])).unwrap();
    let got: Vec<String> = rows.into_iter().map(|r| r.id).collect();
    assert_eq!(got, ids(&["Sn-filter-tests", "Sn-perplexity-cal", "Sn-redteam"]));
}

#[test]
fn literal_parameter_overrides_default() {
    let snap = snapshot("llm");
    let rows = run_cq(&snap, "DE-05", &params(&[("literal", "black-box")])).unwrap();
    let got: Vec<String> = rows.into_iter().map(|r| r.id).collect();
    assert_eq!(got, ids(&["G-attack-resistance"]));
}

#[test]
fn llm_base_flags() {
    let a = infer(&fixture("llm"));
    for id in ["Sn-filter-tests", "Sn-benchmark", "Sn-benchmark-2", "G-jailbreak-filter", "G-benchmark"] {
        assert_eq!(a.get(id, Flag::Truth), Some(Tri::True), "{id}");
    }
    for id in ["Sn-redteam", "G-injection", "G-attack-resistance", "S-defence", "G-top"] {
        assert_eq!(a.get(id, Flag::Truth), Some(Tri::False), "{id}");
        assert_eq!(a.get(id, Flag::InDoubt), Some(Tri::True), "{id}");
    }
}

#[test]
fn overload_scenario_round_trip() {
    procedural::overload_scenario_round_trip();
}

#[test]
fn pattern_fixture_instances() {
    let a = infer(&fixture("pattern"));
    assert_eq!(a.get("A-inst", Flag::Uninstantiated), Some(Tri::True));
    assert_eq!(a.get("A-inst-ok", Flag::Uninstantiated), Some(Tri::False));
    assert_eq!(a.get("A-inst-ok", Flag::Final), Some(Tri::True));
}

#[test]
fn fixtures_are_canonical() {
    for name in ["llm", "car", "pattern"] {
        let text = fixture_text(name);
        let doc = parse_native(&text).unwrap();
        assert_eq!(serialize_native(&doc), text, "{name}");
        let ttl = serialize_interchange(&doc);
        let back = parse_interchange(&ttl).unwrap();
        assert!(back.record_eq(&doc), "{name}");
        assert_eq!(serialize_interchange(&back), ttl, "{name}");
    }
}
