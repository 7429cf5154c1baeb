//! Checks for the procedural catalogue entries. Each panics on mismatch.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use gsn_engine::caseio::parse_timestamp;
use gsn_engine::hooks::*;
use gsn_engine::query::{registry, run_cq};
use gsn_engine::model::{Container, ContainerKind, Flag, Predicate, Tri};
use gsn_engine::store::{CaseDelta, FlagAssertion, Store};

use super::*;

fn at(text: &str) -> DateTime<Utc> {
    parse_timestamp(text).unwrap()
}

fn rel_triples(delta: &CaseDelta) -> BTreeSet<(String, String, Predicate, String)> {
    delta
        .add_relationships
        .iter()
        .map(|r| (r.id.clone(), r.subject.clone(), r.predicate, r.object.clone()))
        .collect()
}

pub fn template_instantiation() {
    let snap = snapshot("llm");
    let bindings = params(&[("attack prompt", "DAN 7.0")]);
    let inst = instantiate_template(&snap, "TPL-attack", &bindings).unwrap();
    assert!(!inst.empty_target);
    let delta = inst.delta;
    let dan = "TPL-attack-57b518ec-ART-prompts-dan";
    let rp = "TPL-attack-57b518ec-ART-prompts-roleplay";
    let els: Vec<(String, String)> = delta
        .add_elements
        .iter()
        .map(|e| (e.id.clone(), e.statement.clone()))
        .collect();
    assert_eq!(
        els,
        vec![
            (dan.to_string(), "Test against DAN 7.0".to_string()),
            (rp.to_string(), "Test against DAN 7.0".to_string()),
        ]
    );
    let want: BTreeSet<_> = [
        (format!("{dan}-references"), dan, Predicate::References, "ART-prompts-dan"),
        (format!("{dan}-instantiates"), dan, Predicate::Instantiates, "Sn-tpl"),
        (format!("{rp}-references"), rp, Predicate::References, "ART-prompts-roleplay"),
        (format!("{rp}-instantiates"), rp, Predicate::Instantiates, "Sn-tpl"),
    ]
    .into_iter()
    .map(|(i, s, p, o)| (i, s.to_string(), p, o.to_string()))
    .collect();
    assert_eq!(rel_triples(&delta), want);

    let mut store = Store::new(snap.case().clone());
    store.commit(&delta, None).unwrap();
    let again = instantiate_template(&store.snapshot(), "TPL-attack", &bindings).unwrap();
    assert!(again.delta.is_empty());
}

const BENCH_LEAF: &str =
    r#"kind:Goal & statement~"Perturbation Robustness" & !((kind:Goal | kind:Strategy)/supportedBy<-)"#;

pub fn periodic_hook() -> Hook {
    Hook {
        id: "DE-03".into(),
        trigger: Trigger::OnTick {
            period_days: 30,
            selector: BENCH_LEAF.into(),
            anchor: Some(at("2024-11-14T00:00:00Z")),
        },
        action: Action::AttachArtefact {
            target: BENCH_LEAF.into(),
            artefact: "Benchmark rerun for {target} on {stamp}".into(),
        },
        enabled: true,
    }
}

pub fn periodic_evidence_refresh() {
    let mut store = Store::new(fixture("llm"));
    let mut reg = HookRegistry::new();
    reg.register(periodic_hook()).unwrap();

    let early = reg.fire(&mut store, HookEvent::Tick(at("2024-12-01T00:00:00Z"))).unwrap();
    assert!(early.actions.is_empty());
    assert_eq!(early.version, None);
    assert_eq!(store.version(), 0);

    let report = reg.fire(&mut store, HookEvent::Tick(at("2024-12-15T00:00:00Z"))).unwrap();
    assert_eq!(report.version, Some(1));
    let action = &report.actions[0];
    assert_eq!(action.targets, ids(&["G-benchmark"]));
    let art = "ART-DE-03-20241215-G-benchmark";
    let sn = "Sn-DE-03-20241215-G-benchmark";
    let created: BTreeSet<&str> = action.created.iter().map(String::as_str).collect();
    let want: BTreeSet<String> = [
        art.to_string(),
        sn.to_string(),
        format!("R-G-benchmark-supportedBy-{sn}"),
        format!("R-{sn}-references-{art}"),
    ]
    .into();
    assert_eq!(created, want.iter().map(String::as_str).collect());

    let snap = store.snapshot();
    let case = snap.case();
    assert_eq!(case.container(art).unwrap().kind, ContainerKind::Artefact);
    assert!(case.root.members.iter().any(|m| m == art));
    assert_eq!(
        snap.match_pattern(Some("G-benchmark"), Some(Predicate::SupportedBy), Some(sn)).len(),
        1
    );

    // Not due again until 30 days after the last firing.
    let soon = reg.fire(&mut store, HookEvent::Tick(at("2025-01-10T00:00:00Z"))).unwrap();
    assert!(soon.actions.is_empty());
    let later = reg.fire(&mut store, HookEvent::Tick(at("2025-01-14T00:00:00Z"))).unwrap();
    assert_eq!(later.actions.len(), 1);
}

pub fn commit_creates_defeater() {
    let mut store = Store::new(fixture("llm"));
    let mut reg = HookRegistry::new();
    reg.register(Hook {
        id: "DE-04".into(),
        trigger: Trigger::OnCommit {
            selector: r#"kind:Artefact & statement~"adversarialSample""#.into(),
        },
        action: Action::CreateDefeater {
            target: r#"kind:Goal & statement~"Attack Resistance""#.into(),
            statement: "Adversarial sample {trigger} defeats {target}".into(),
        },
        enabled: true,
    })
    .unwrap();

    let unrelated = CaseDelta {
        set_flags: vec![FlagAssertion {
            record: "ART-calibration".into(),
            flag: Flag::Valid,
            value: Tri::True,
        }],
        ..CaseDelta::default()
    };
    store.commit(&unrelated, None).unwrap();
    assert!(reg.fire(&mut store, HookEvent::Commit(&unrelated)).unwrap().actions.is_empty());

    let delta = CaseDelta {
        add_containers: vec![Container::new("adversarialSample-17", ContainerKind::Artefact, "adversarialSample-17")],
        add_members: vec![("LLM".into(), "adversarialSample-17".into())],
        ..CaseDelta::default()
    };
    store.commit(&delta, None).unwrap();
    let report = reg.fire(&mut store, HookEvent::Commit(&delta)).unwrap();
    let def = "DEF-adversarialSample-17-G-attack-resistance";
    assert_eq!(report.actions[0].triggers, ids(&["adversarialSample-17"]));
    assert_eq!(
        report.actions[0].created,
        vec![
            def.to_string(),
            format!("R-{def}-references-adversarialSample-17"),
            format!("R-{def}-challenges-G-attack-resistance"),
        ]
    );
    let snap = store.snapshot();
    assert_eq!(
        snap.case().element(def).unwrap().statement,
        "Adversarial sample adversarialSample-17 defeats G-attack-resistance"
    );
    assert_eq!(snap.version(), 3);
}

pub fn what_if_attack_resistance_fails() {
    let snap = snapshot("llm");
    let report = whatif_invalidate(&snap, r#"kind:Goal & statement~"Attack Resistance""#).unwrap();
    assert_eq!(report.targets, ids(&["G-attack-resistance"]));
    let got: BTreeSet<(String, Flag, Tri, Tri)> = report
        .changes
        .iter()
        .map(|c| (c.record.clone(), c.flag, c.before, c.after))
        .collect();
    let mut want = BTreeSet::new();
    for id in ["G-attack-resistance", "G-injection", "G-jailbreak-filter", "Sn-filter-tests", "Sn-redteam"] {
        want.insert((id.to_string(), Flag::Valid, Tri::Unset, Tri::False));
    }
    for id in ["G-jailbreak-filter", "Sn-filter-tests"] {
        want.insert((id.to_string(), Flag::Truth, Tri::True, Tri::False));
    }
    assert_eq!(got, want);
}

pub fn benchmark_dataset_validates_its_solutions() {
    let snap = snapshot("llm");
    let delta = propagate_valid_from(&snap, r#"kind:Artefact & statement~"BenchmarkDataset""#).unwrap();
    let got: Vec<(String, Flag, Tri)> = delta
        .set_flags
        .iter()
        .map(|a| (a.record.clone(), a.flag, a.value))
        .collect();
    assert_eq!(
        got,
        vec![
            ("Sn-benchmark".to_string(), Flag::Valid, Tri::True),
            ("Sn-benchmark-2".to_string(), Flag::Valid, Tri::True),
        ]
    );
    assert!(delta.add_elements.is_empty() && delta.add_relationships.is_empty());
    assert!(matches!(
        propagate_valid_from(&snap, "kind:Artefact & statement~\"Calibration\""),
        Err(HookError::PreconditionFailed(_))
    ));
    assert!(matches!(
        propagate_valid_from(&snap, "kind:Artefact & statement~\"nothing\""),
        Err(HookError::ActionTargetEmpty(_))
    ));
}

pub fn catalogue_rows_on_llm_fixture() {
    let snap = snapshot("llm");
    for (id, want) in expected_rows() {
        let got: Vec<String> = run_cq(&snap, id, &params(&[("now", NOW)]))
            .unwrap()
            .into_iter()
            .map(|r| r.id)
            .collect();
        assert_eq!(got, want, "{id}");
    }
    assert_eq!(registry().len(), expected_rows().len());
}

pub fn overload_scenario_round_trip() {
    let mut store = Store::new(fixture("car"));
    let before_case = store.snapshot().case().clone();
    let before = infer(&before_case);
    assert_eq!(before.get("G-roof", Flag::Defeated), Some(Tri::False));

    let on = scenario_toggle(&store.snapshot(), "SCN-overload", true).unwrap();
    assert_eq!(on.set_flags.len(), 1);
    store.commit(&on, None).unwrap();
    let active = infer(store.snapshot().case());
    assert_eq!(active.get("G-roof", Flag::Defeated), Some(Tri::True));
    assert_eq!(active.get("G-roof", Flag::Truth), Some(Tri::False));
    for id in ["G-roof", "S-load", "G-car"] {
        assert_eq!(active.get(id, Flag::InDoubt), Some(Tri::True), "{id}");
    }
    assert_eq!(active.get("G-payload", Flag::InDoubt), Some(Tri::False));

    let off = scenario_toggle(&store.snapshot(), "SCN-overload", false).unwrap();
    store.commit(&off, None).unwrap();
    assert_eq!(store.snapshot().case(), &before_case);
    assert_eq!(infer(store.snapshot().case()), before);
    assert!(scenario_toggle(&store.snapshot(), "SCN-overload", false)
        .unwrap()
        .is_empty());
}
