use super::*;
use crate::model::{Container, ContainerKind, ElementKind, FlagSet, Multiplicity, Predicate, Relationship};

fn flags(f: impl FnOnce(&mut FlagSet)) -> Option<FlagSet> {
    let mut s = FlagSet::default();
    f(&mut s);
    Some(s)
}

fn run(case: &Case) -> InferenceResult {
    let r = run_fixpoint(case, &InferenceConfig::default()).unwrap();
    assert_eq!(r.assignment, naive_oracle(case).unwrap(), "oracle disagrees");
    r
}

fn get(r: &InferenceResult, id: &str, flag: Flag) -> Tri {
    r.assignment.get(id, flag).unwrap()
}

fn defeater_case() -> Case {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "Vehicle is safe", None).unwrap();
    c.add_element(ElementKind::Goal, "D1", "Roof load exceeded", flags(|f| f.truth = Tri::True))
        .unwrap();
    c.add_edge("challenges", "D1", "G1").unwrap();
    c
}

#[test]
fn single_goal_is_top_level_and_undeveloped() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "Launch system is acceptably safe", None).unwrap();
    let r = run(&c);
    assert_eq!(get(&r, "G1", Flag::TopLevel), Tri::True);
    assert_eq!(get(&r, "G1", Flag::Undeveloped), Tri::True);
    assert!(r.converged);
}

#[test]
fn solution_with_valid_artefact_makes_goal_true() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "Hazards mitigated", None).unwrap();
    c.add_element(ElementKind::Solution, "Sn1", "Test report", None).unwrap();
    let mut a = Container::new("A1", ContainerKind::Artefact, "report.pdf");
    a.flags.valid = Tri::True;
    c.add_container(a).unwrap();
    c.add_edge("supportedBy", "G1", "Sn1").unwrap();
    c.add_edge("references", "Sn1", "A1").unwrap();
    let r = run(&c);
    assert_eq!(get(&r, "Sn1", Flag::Truth), Tri::True);
    assert_eq!(get(&r, "G1", Flag::Truth), Tri::True);
    assert_eq!(get(&r, "G1", Flag::Undeveloped), Tri::False);
}

#[test]
fn true_defeater_defeats_its_target() {
    let r = run(&defeater_case());
    assert_eq!(get(&r, "G1", Flag::Defeated), Tri::True);
    assert_eq!(get(&r, "G1", Flag::InDoubt), Tri::True);
    assert_eq!(get(&r, "G1", Flag::Truth), Tri::False);
    assert!(r.overlays["defeated-closure"].contains(&"G1".to_string()));
}

#[test]
fn invalid_assumption_invalidates_downwards() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "System safe", None).unwrap();
    c.add_element(ElementKind::Goal, "G2", "Subsystem safe", None).unwrap();
    c.add_element(ElementKind::Assumption, "As1", "Operators trained", flags(|f| f.valid = Tri::False))
        .unwrap();
    c.add_edge("inContextOf", "G1", "As1").unwrap();
    c.add_edge("supportedBy", "G1", "G2").unwrap();
    let r = run(&c);
    assert_eq!(get(&r, "G1", Flag::Valid), Tri::False);
    assert_eq!(get(&r, "G2", Flag::Valid), Tri::False);
}

#[test]
fn support_cycle_invalidates_its_edges() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "A", None).unwrap();
    c.add_element(ElementKind::Goal, "G2", "B", None).unwrap();
    c.add_edge("supportedBy", "G1", "G2").unwrap();
    c.add_edge("supportedBy", "G2", "G1").unwrap();
    let r = run(&c);
    assert_eq!(r.invalidated, vec!["R1".to_string(), "R2".to_string()]);
    assert!(r.diagnostics.iter().any(|d| d.rule == RuleId::R4));
}

#[test]
fn duplicate_identifier_reported() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "A", None).unwrap();
    c.elements.push(crate::model::Element::new("G1", ElementKind::Goal, "B"));
    let r = run(&c);
    assert!(r
        .diagnostics
        .iter()
        .any(|d| d.rule == RuleId::R11 && d.subjects == vec!["G1".to_string()]));
}

#[test]
fn away_goal_to_private_element_is_invalid() {
    let mut c = Case::new("case", "case");
    c.add_container(Container::new("M1", ContainerKind::Module, "one")).unwrap();
    c.add_container(Container::new("M2", ContainerKind::Module, "two")).unwrap();
    let mut g = crate::model::Element::new("G1", ElementKind::Goal, "Hidden");
    g.module = Some("M2".into());
    c.insert_element(g).unwrap();
    let mut away = crate::model::Element::new("AG1", ElementKind::Goal, "Hidden");
    away.module = Some("M1".into());
    away.away_target = Some(crate::model::AwayTarget {
        element: "G1".into(),
        module: "M2".into(),
    });
    c.insert_element(away).unwrap();
    let r = run(&c);
    assert_eq!(get(&r, "AG1", Flag::Valid), Tri::False);
    assert!(r.diagnostics.iter().any(|d| d.rule == RuleId::R11));

    c.element_mut("G1").unwrap().flags.public = true;
    let r = run(&c);
    assert_eq!(r.assignment.get("AG1", Flag::Valid), Some(Tri::Unset));
}

#[test]
fn explain_defeated_cites_challenge_and_truth() {
    let r = run(&defeater_case());
    let steps = r.explain("G1", Flag::Defeated).unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].rule, RuleId::R9);
    assert_eq!(
        steps[0].premises,
        vec![Premise::record("R1"), Premise::flag("D1", Flag::Truth)]
    );
}

#[test]
fn explain_asserted_flag_is_not_derived() {
    let r = run(&defeater_case());
    assert!(matches!(
        r.explain("D1", Flag::Truth),
        Err(ExplainError::NotDerived { .. })
    ));
}

#[test]
fn explain_top_level_is_one_step() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "Top", None).unwrap();
    let r = run(&c);
    let steps = r.explain("G1", Flag::TopLevel).unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].rule, RuleId::R2);
}

#[test]
fn applying_result_is_a_fixpoint() {
    let c = defeater_case();
    let r = run(&c);
    let again = run(&r.apply(&c));
    assert!(again.deltas.is_empty());
    assert_eq!(again.assignment, r.assignment);
}

#[test]
fn every_delta_cites_a_rule_and_changes_something() {
    let r = run(&defeater_case());
    assert!(!r.deltas.is_empty());
    for d in &r.deltas {
        assert_ne!(d.old, d.new);
    }
}

#[test]
fn choice_violation_marks_uninstantiated() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "PG", "Hazard {H} handled", None).unwrap();
    c.add_element(ElementKind::Solution, "PS1", "Test", None).unwrap();
    c.add_element(ElementKind::Solution, "PS2", "Analysis", None).unwrap();
    c.add_container(Container::new("P", ContainerKind::Pattern, "pattern").with_members(["PG", "PS1", "PS2"]))
        .unwrap();
    for (id, o) in [("PR1", "PS1"), ("PR2", "PS2")] {
        let mut rel = Relationship::new(id, "PG", Predicate::SupportedBy, o);
        rel.multiplicity = Some(Multiplicity::choice("g", 1, Some(1)));
        c.insert_relationship(rel).unwrap();
    }
    c.add_element(ElementKind::Goal, "G", "Hazard H1 handled", None).unwrap();
    c.add_element(ElementKind::Solution, "S1", "Test run", None).unwrap();
    c.add_element(ElementKind::Solution, "S2", "FMEA", None).unwrap();
    c.add_container(Container::new("A", ContainerKind::Argument, "inst").with_members(["G", "S1", "S2"]))
        .unwrap();
    for (s, o) in [("A", "P"), ("G", "PG"), ("S1", "PS1"), ("S2", "PS2")] {
        c.add_edge("instantiates", s, o).unwrap();
    }
    c.add_edge("supportedBy", "G", "S1").unwrap();
    let r = run(&c);
    assert_eq!(get(&r, "A", Flag::Uninstantiated), Tri::False);
    assert_eq!(get(&r, "A", Flag::Final), Tri::True);

    c.add_edge("supportedBy", "G", "S2").unwrap();
    let r = run(&c);
    assert_eq!(get(&r, "A", Flag::Uninstantiated), Tri::True);
}

#[test]
fn empty_case_has_empty_assignment() {
    let c = Case::new("case", "case");
    let a = naive_oracle(&c).unwrap();
    assert!(a.elements.is_empty() && a.relationships.is_empty());
    assert_eq!(run(&c).assignment, a);
}

#[test]
fn oracle_refuses_large_cases() {
    let mut c = Case::new("case", "case");
    for i in 0..ORACLE_RECORD_LIMIT {
        c.elements.push(crate::model::Element::new(format!("G{i}"), ElementKind::Goal, "x"));
    }
    assert!(matches!(naive_oracle(&c), Err(OracleError::TooLarge { .. })));
}

#[test]
fn disabled_rule_derives_nothing() {
    let mut c = Case::new("case", "case");
    c.add_element(ElementKind::Goal, "G1", "Top", None).unwrap();
    let mut cfg = InferenceConfig::default();
    cfg.enabled.remove(&RuleId::R2);
    let r = run_fixpoint(&c, &cfg).unwrap();
    assert_eq!(get(&r, "G1", Flag::TopLevel), Tri::False);
}

#[test]
fn tiny_iteration_cap_reports_non_termination() {
    let c = defeater_case();
    let cfg = InferenceConfig {
        iteration_cap: Some(1),
        ..InferenceConfig::default()
    };
    assert!(matches!(
        run_fixpoint(&c, &cfg),
        Err(InferenceError::NonTermination { cap: 1 })
    ));
}

#[test]
fn fast_route_matches_oracle_on_random_cases() {
    for seed in 0..200 {
        let c = crate::testing::random_case(seed);
        let fast = run_fixpoint(&c, &InferenceConfig::default()).unwrap();
        let slow = naive_oracle(&c).unwrap();
        let diff = fast.assignment.diff(&slow);
        assert!(diff.is_empty(), "seed {seed}: {diff:?}");
    }
}
