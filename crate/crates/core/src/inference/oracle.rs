//! Reference evaluator.
//!
//! Every rule is a function that scans the whole case and the current fact
//! set and returns the facts it can derive. A stratum is saturated by
//! applying all of its rules, in a given order, until a full pass adds
//! nothing. No indexes, no worklists. Only strata are ordered, because
//! later strata read earlier facts under negation.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{has_placeholder, FlagAssignment, RelFlags};
use crate::model::{
    Case, Container, ContainerKind, Element, ElementKind, MultiplicityIndicator, Predicate,
    RecordKind, Relationship, Tri,
};
use crate::typing::edge_type_allowed;

/// Largest case, in records, the oracle accepts.
pub const ORACLE_RECORD_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("case has {records} records, oracle limit is {limit}")]
    TooLarge { records: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Fact {
    Path(String, String),
    EdgeInvalid(String),
    AwayBad(String),
    Reach(String, String),
    Invalid(String),
    R6Invalid(String),
    TruthT(String),
    TopLevel(String),
    Undeveloped(String),
    Uninstantiated(String),
    Final(String),
    InDoubt(String),
    RelInDoubt(String),
    Blocked(String),
    Defeated(String),
}

type Facts = HashSet<Fact>;
type Rule = fn(&Case, &Facts) -> Vec<Fact>;

fn has(facts: &Facts, f: Fact) -> bool {
    facts.contains(&f)
}

fn first_elements(case: &Case) -> Vec<&Element> {
    case.elements
        .iter()
        .enumerate()
        .filter(|(i, e)| case.elements[..*i].iter().all(|x| x.id != e.id))
        .map(|(_, e)| e)
        .collect()
}

fn first_containers(case: &Case) -> Vec<&Container> {
    let all: Vec<&Container> = case.all_containers().collect();
    all.iter()
        .enumerate()
        .filter(|(i, c)| all[..*i].iter().all(|x| x.id != c.id))
        .map(|(_, c)| *c)
        .collect()
}

fn is_element(case: &Case, id: &str) -> bool {
    case.element(id).is_some()
}

fn kind_of(case: &Case, id: &str) -> Option<ElementKind> {
    case.element(id).map(|e| e.kind)
}

/// Static validity: not asserted invalid and not structurally invalid.
fn sv(case: &Case, facts: &Facts, r: &Relationship) -> bool {
    let asserted = case.relationship(&r.id).is_some_and(|x| x.valid.is_false());
    !asserted && !has(facts, Fact::EdgeInvalid(r.id.clone()))
}

/// sv edges of one predicate between two elements.
fn element_edges<'c>(case: &'c Case, facts: &Facts, p: Predicate) -> Vec<&'c Relationship> {
    case.relationships
        .iter()
        .filter(|r| {
            r.predicate == p
                && is_element(case, &r.subject)
                && is_element(case, &r.object)
                && sv(case, facts, r)
        })
        .collect()
}

fn members(case: &Case, start: &str) -> HashSet<String> {
    let mut out: HashSet<String> = HashSet::new();
    loop {
        let frontier: Vec<String> = std::iter::once(start.to_string())
            .chain(out.iter().cloned())
            .collect();
        let before = out.len();
        for c in &frontier {
            if let Some(k) = case.container(c) {
                out.extend(k.members.iter().cloned());
            }
            for r in &case.relationships {
                if r.predicate == Predicate::Contains && &r.subject == c {
                    out.insert(r.object.clone());
                }
            }
        }
        out.remove(start);
        if out.len() == before {
            return out;
        }
    }
}

// ---- stratum 0 ----

fn path_base(case: &Case, _: &Facts) -> Vec<Fact> {
    case.relationships
        .iter()
        .filter(|r| r.predicate == Predicate::SupportedBy)
        .map(|r| Fact::Path(r.subject.clone(), r.object.clone()))
        .collect()
}

fn path_step(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut out = Vec::new();
    for f in facts {
        if let Fact::Path(a, b) = f {
            for r in &case.relationships {
                if r.predicate == Predicate::SupportedBy && &r.subject == b {
                    out.push(Fact::Path(a.clone(), r.object.clone()));
                }
            }
        }
    }
    out
}

fn r1_duplicate_triple(case: &Case, _: &Facts) -> Vec<Fact> {
    let rels = &case.relationships;
    rels.iter()
        .filter(|r| {
            rels.iter().any(|x| {
                x.subject == r.subject
                    && x.predicate == r.predicate
                    && x.object == r.object
                    && x.id < r.id
            })
        })
        .map(|r| Fact::EdgeInvalid(r.id.clone()))
        .collect()
}

fn r3_typing(case: &Case, _: &Facts) -> Vec<Fact> {
    case.relationships
        .iter()
        .filter(|r| match (case.record_kind(&r.subject), case.record_kind(&r.object)) {
            (Some(s), Some(o)) => !edge_type_allowed(r.predicate, s, o),
            _ => true,
        })
        .map(|r| Fact::EdgeInvalid(r.id.clone()))
        .collect()
}

fn r4_cycle(case: &Case, facts: &Facts) -> Vec<Fact> {
    case.relationships
        .iter()
        .filter(|r| {
            r.predicate == Predicate::SupportedBy
                && (r.subject == r.object
                    || has(facts, Fact::Path(r.object.clone(), r.subject.clone())))
        })
        .map(|r| Fact::EdgeInvalid(r.id.clone()))
        .collect()
}

fn r11_duplicates(case: &Case, _: &Facts) -> Vec<Fact> {
    let ids: Vec<&str> = case.all_ids().collect();
    let dup = |id: &str| ids.iter().filter(|&&x| x == id).count() > 1;
    case.relationships
        .iter()
        .filter(|r| dup(&r.id) || dup(&r.subject) || dup(&r.object))
        .map(|r| Fact::EdgeInvalid(r.id.clone()))
        .collect()
}

fn r11_away(case: &Case, _: &Facts) -> Vec<Fact> {
    let mut out = Vec::new();
    for e in first_elements(case) {
        let Some(t) = &e.away_target else { continue };
        let ok = case.element(&t.element).is_some_and(|x| {
            let module_public = case.container(&t.module).is_some_and(|m| m.flags.public);
            x.id != e.id
                && x.module.as_ref() == Some(&t.module)
                && e.module.as_ref() != Some(&t.module)
                && (x.flags.public || module_public)
        });
        if !ok {
            out.push(Fact::AwayBad(e.id.clone()));
        }
    }
    out
}

fn r11_away_edges(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut out = Vec::new();
    for r in &case.relationships {
        let bad_end = [&r.subject, &r.object]
            .iter()
            .any(|id| is_element(case, id) && has(facts, Fact::AwayBad((*id).clone())));
        let away_support = r.predicate == Predicate::SupportedBy
            && case.element(&r.subject).is_some_and(|e| e.away_target.is_some());
        if bad_end || away_support {
            out.push(Fact::EdgeInvalid(r.id.clone()));
        }
    }
    out
}

// ---- stratum 1 ----

fn reach_self(case: &Case, _: &Facts) -> Vec<Fact> {
    first_elements(case)
        .iter()
        .map(|e| Fact::Reach(e.id.clone(), e.id.clone()))
        .collect()
}

fn reach_step(case: &Case, facts: &Facts) -> Vec<Fact> {
    let edges = element_edges(case, facts, Predicate::SupportedBy);
    let mut out = Vec::new();
    for f in facts {
        if let Fact::Reach(a, b) = f {
            for r in &edges {
                if &r.subject == b {
                    out.push(Fact::Reach(a.clone(), r.object.clone()));
                }
            }
        }
    }
    out
}

fn r5_seed(case: &Case, facts: &Facts) -> Vec<Fact> {
    first_elements(case)
        .iter()
        .filter(|e| e.flags.valid.is_false() || has(facts, Fact::AwayBad(e.id.clone())))
        .map(|e| Fact::Invalid(e.id.clone()))
        .collect()
}

fn r5_down(case: &Case, facts: &Facts) -> Vec<Fact> {
    element_edges(case, facts, Predicate::SupportedBy)
        .iter()
        .filter(|r| has(facts, Fact::Invalid(r.subject.clone())))
        .map(|r| Fact::Invalid(r.object.clone()))
        .collect()
}

fn r5_context(case: &Case, facts: &Facts) -> Vec<Fact> {
    element_edges(case, facts, Predicate::InContextOf)
        .iter()
        .filter(|r| {
            matches!(
                kind_of(case, &r.object),
                Some(ElementKind::Context | ElementKind::Assumption)
            ) && has(facts, Fact::Invalid(r.object.clone()))
        })
        .map(|r| Fact::Invalid(r.subject.clone()))
        .collect()
}

fn r6_conflict(case: &Case, facts: &Facts) -> Vec<Fact> {
    let ctx = element_edges(case, facts, Predicate::InContextOf);
    let elems = first_elements(case);
    let mut out = Vec::new();
    for c in element_edges(case, facts, Predicate::ConflictsWith) {
        for r1 in ctx.iter().filter(|r| r.object == c.subject) {
            for r2 in ctx.iter().filter(|r| r.object == c.object) {
                let shared = elems.iter().any(|x| {
                    has(facts, Fact::Reach(x.id.clone(), r1.subject.clone()))
                        && has(facts, Fact::Reach(x.id.clone(), r2.subject.clone()))
                });
                if shared {
                    out.push(Fact::R6Invalid(r1.id.clone()));
                    out.push(Fact::R6Invalid(r2.id.clone()));
                }
            }
        }
    }
    out
}

fn r7_seed(case: &Case, _: &Facts) -> Vec<Fact> {
    first_elements(case)
        .iter()
        .filter(|e| e.flags.truth.is_true())
        .map(|e| Fact::TruthT(e.id.clone()))
        .collect()
}

fn r7_solution(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut out = Vec::new();
    for e in first_elements(case) {
        if e.kind != ElementKind::Solution || e.flags.truth.is_false() {
            continue;
        }
        let backed = case.relationships.iter().any(|r| {
            r.predicate == Predicate::References
                && r.subject == e.id
                && sv(case, facts, r)
                && case
                    .container(&r.object)
                    .is_some_and(|a| a.kind == ContainerKind::Artefact && a.flags.valid.is_true())
        });
        if backed {
            out.push(Fact::TruthT(e.id.clone()));
        }
    }
    out
}

fn r7_support(case: &Case, facts: &Facts) -> Vec<Fact> {
    let edges = element_edges(case, facts, Predicate::SupportedBy);
    let mut out = Vec::new();
    for e in first_elements(case) {
        if !matches!(e.kind, ElementKind::Goal | ElementKind::Strategy) || e.flags.truth.is_false() {
            continue;
        }
        let kids: Vec<&&Relationship> = edges.iter().filter(|r| r.subject == e.id).collect();
        if !kids.is_empty() && kids.iter().all(|r| has(facts, Fact::TruthT(r.object.clone()))) {
            out.push(Fact::TruthT(e.id.clone()));
        }
    }
    out
}

fn r2_top_level(case: &Case, _: &Facts) -> Vec<Fact> {
    first_elements(case)
        .iter()
        .filter(|e| {
            e.kind == ElementKind::Goal
                && !case.relationships.iter().any(|r| {
                    r.predicate == Predicate::SupportedBy
                        && r.object == e.id
                        && matches!(case.record_kind(&r.subject), Some(RecordKind::Element(_)))
                })
        })
        .map(|e| Fact::TopLevel(e.id.clone()))
        .collect()
}

fn r8_undeveloped(case: &Case, facts: &Facts) -> Vec<Fact> {
    let edges = element_edges(case, facts, Predicate::SupportedBy);
    first_elements(case)
        .iter()
        .filter(|e| {
            matches!(e.kind, ElementKind::Goal | ElementKind::Strategy)
                && e.away_target.is_none()
                && !edges.iter().any(|r| r.subject == e.id)
        })
        .map(|e| Fact::Undeveloped(e.id.clone()))
        .collect()
}

// ---- stratum 2 ----

fn r12_patterns(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut out = Vec::new();
    for c in first_containers(case) {
        if !matches!(c.kind, ContainerKind::Argument | ContainerKind::Template) {
            continue;
        }
        let patterns: Vec<&str> = case
            .relationships
            .iter()
            .filter(|r| {
                r.predicate == Predicate::Instantiates
                    && r.subject == c.id
                    && sv(case, facts, r)
                    && case
                        .container(&r.object)
                        .is_some_and(|p| p.kind == ContainerKind::Pattern)
            })
            .map(|r| r.object.as_str())
            .collect();
        if patterns.is_empty() {
            continue;
        }
        let inst: HashSet<String> = members(case, &c.id)
            .into_iter()
            .filter(|m| is_element(case, m))
            .collect();
        let mut broken = inst
            .iter()
            .any(|m| has_placeholder(&case.element(m).unwrap().statement));
        for p in patterns {
            broken |= !pattern_met(case, facts, &inst, p);
        }
        if broken {
            out.push(Fact::Uninstantiated(c.id.clone()));
        } else if inst.iter().all(|m| {
            !case.element(m).unwrap().flags.undeveloped && !has(facts, Fact::Undeveloped(m.clone()))
        }) {
            out.push(Fact::Final(c.id.clone()));
        }
    }
    out
}

fn pattern_met(case: &Case, facts: &Facts, inst: &HashSet<String>, pattern: &str) -> bool {
    let pmem: HashSet<String> = members(case, pattern)
        .into_iter()
        .filter(|m| is_element(case, m))
        .collect();
    let image = |e: &str, pe: &str| {
        inst.contains(e)
            && pmem.contains(pe)
            && case.relationships.iter().any(|r| {
                r.predicate == Predicate::Instantiates
                    && r.subject == e
                    && r.object == pe
                    && sv(case, facts, r)
            })
    };
    let prels: Vec<&Relationship> = case
        .relationships
        .iter()
        .filter(|r| {
            !matches!(r.predicate, Predicate::Instantiates | Predicate::Contains)
                && pmem.contains(&r.subject)
                && pmem.contains(&r.object)
                && sv(case, facts, r)
        })
        .collect();
    let realized = |s: &str, pr: &Relationship| {
        case.relationships
            .iter()
            .filter(|r| {
                r.subject == s
                    && r.predicate == pr.predicate
                    && sv(case, facts, r)
                    && image(&r.object, &pr.object)
            })
            .count() as u32
    };
    let within = |n: u32, min: u32, max: Option<u32>| n >= min && max.is_none_or(|m| n <= m);

    for pr in &prels {
        let choice = pr
            .multiplicity
            .as_ref()
            .is_some_and(|m| m.indicator == MultiplicityIndicator::Choice);
        if choice {
            continue;
        }
        let (min, max) = pr.multiplicity.as_ref().map_or((1, None), |m| (m.min, m.max));
        for s in inst {
            if image(s, &pr.subject) && !within(realized(s, pr), min, max) {
                return false;
            }
        }
    }

    let group_of = |pr: &Relationship| -> Option<(String, Predicate, String)> {
        let m = pr.multiplicity.as_ref()?;
        (m.indicator == MultiplicityIndicator::Choice).then(|| {
            (
                pr.subject.clone(),
                pr.predicate,
                m.group.clone().unwrap_or_else(|| pr.id.clone()),
            )
        })
    };
    let mut groups: BTreeMap<(String, Predicate, String), Vec<&Relationship>> = BTreeMap::new();
    for pr in &prels {
        if let Some(key) = group_of(pr) {
            groups.entry(key).or_default().push(pr);
        }
    }
    for ((subject, _, _), alts) in &groups {
        let lead = alts.iter().min_by(|a, b| a.id.cmp(&b.id)).unwrap();
        let m = lead.multiplicity.as_ref().unwrap();
        for s in inst {
            if image(s, subject) {
                let n = alts.iter().filter(|pr| realized(s, pr) >= 1).count() as u32;
                if !within(n, m.min, m.max) {
                    return false;
                }
            }
        }
    }

    pmem.iter()
        .filter(|pe| !prels.iter().any(|pr| &pr.object == *pe))
        .all(|root| inst.iter().any(|e| image(e, root)))
}

// ---- stratum 3 ----

fn doubt_seed(case: &Case, _: &Facts) -> Vec<Fact> {
    let mut out: Vec<Fact> = first_elements(case)
        .iter()
        .filter(|e| e.flags.in_doubt())
        .map(|e| Fact::InDoubt(e.id.clone()))
        .collect();
    for r in &case.relationships {
        if case.relationship(&r.id).is_some_and(|x| x.in_doubt) {
            out.push(Fact::RelInDoubt(r.id.clone()));
        }
    }
    out
}

fn r9_challenge(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut out = Vec::new();
    for r in &case.relationships {
        if r.predicate != Predicate::Challenges || !is_element(case, &r.subject) || !sv(case, facts, r) {
            continue;
        }
        if is_element(case, &r.object) {
            out.push(Fact::InDoubt(r.object.clone()));
        } else if case.relationship(&r.object).is_some() {
            out.push(Fact::RelInDoubt(r.object.clone()));
        }
    }
    out
}

fn r10_up(case: &Case, facts: &Facts) -> Vec<Fact> {
    element_edges(case, facts, Predicate::SupportedBy)
        .iter()
        .filter(|r| has(facts, Fact::InDoubt(r.object.clone())))
        .map(|r| Fact::InDoubt(r.subject.clone()))
        .collect()
}

fn r10_edge_subject(case: &Case, facts: &Facts) -> Vec<Fact> {
    case.relationships
        .iter()
        .filter(|r| has(facts, Fact::RelInDoubt(r.id.clone())) && is_element(case, &r.subject))
        .map(|r| Fact::InDoubt(r.subject.clone()))
        .collect()
}

fn blocked_seed(case: &Case, facts: &Facts) -> Vec<Fact> {
    first_elements(case)
        .iter()
        .filter(|e| {
            has(facts, Fact::Invalid(e.id.clone())) || has(facts, Fact::InDoubt(e.id.clone()))
        })
        .map(|e| Fact::Blocked(e.id.clone()))
        .collect()
}

fn blocked_up(case: &Case, facts: &Facts) -> Vec<Fact> {
    element_edges(case, facts, Predicate::SupportedBy)
        .iter()
        .filter(|r| has(facts, Fact::Blocked(r.object.clone())))
        .map(|r| Fact::Blocked(r.subject.clone()))
        .collect()
}

fn r13_confidence(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut links: Vec<(&str, &str)> = Vec::new();
    for r in &case.relationships {
        if let Some(a) = &r.confidence_argument {
            links.push((&r.id, a));
        }
        if r.predicate == Predicate::AssociatedWith
            && case.relationship(&r.subject).is_some()
            && sv(case, facts, r)
        {
            links.push((&r.subject, &r.object));
        }
    }
    let mut out = Vec::new();
    for (rel, arg) in links {
        let failing = members(case, arg).iter().any(|g| {
            let Some(e) = case.element(g) else { return false };
            let top = e.flags.top_level || has(facts, Fact::TopLevel(g.clone()));
            e.kind == ElementKind::Goal
                && top
                && (e.flags.truth.is_false()
                    || has(facts, Fact::InDoubt(g.clone()))
                    || (has(facts, Fact::Blocked(g.clone())) && has(facts, Fact::TruthT(g.clone()))))
        });
        if failing {
            out.push(Fact::RelInDoubt(rel.to_string()));
        }
    }
    out
}

// ---- stratum 4 ----

fn r9_defeat(case: &Case, facts: &Facts) -> Vec<Fact> {
    let mut out: Vec<Fact> = first_elements(case)
        .iter()
        .filter(|e| e.flags.defeated())
        .map(|e| Fact::Defeated(e.id.clone()))
        .collect();
    for r in &case.relationships {
        if r.predicate == Predicate::Challenges
            && is_element(case, &r.subject)
            && is_element(case, &r.object)
            && sv(case, facts, r)
            && has(facts, Fact::TruthT(r.subject.clone()))
            && !has(facts, Fact::Blocked(r.subject.clone()))
        {
            out.push(Fact::Defeated(r.object.clone()));
        }
    }
    out
}

fn strata() -> Vec<Vec<Rule>> {
    vec![
        vec![
            path_base,
            path_step,
            r1_duplicate_triple,
            r3_typing,
            r4_cycle,
            r11_duplicates,
            r11_away,
            r11_away_edges,
        ],
        vec![
            reach_self,
            reach_step,
            r5_seed,
            r5_down,
            r5_context,
            r6_conflict,
            r7_seed,
            r7_solution,
            r7_support,
            r2_top_level,
            r8_undeveloped,
        ],
        vec![r12_patterns],
        vec![
            doubt_seed,
            r9_challenge,
            r10_up,
            r10_edge_subject,
            blocked_seed,
            blocked_up,
            r13_confidence,
        ],
        vec![r9_defeat],
    ]
}

fn saturate(case: &Case, facts: &mut Facts, rules: &[Rule]) {
    loop {
        let mut changed = false;
        for rule in rules {
            for f in rule(case, facts) {
                changed |= facts.insert(f);
            }
        }
        if !changed {
            return;
        }
    }
}

fn run(case: &Case, mut rng: Option<ChaCha8Rng>) -> Result<FlagAssignment, OracleError> {
    let records = case.record_count();
    if records > ORACLE_RECORD_LIMIT {
        return Err(OracleError::TooLarge {
            records,
            limit: ORACLE_RECORD_LIMIT,
        });
    }
    let mut facts = Facts::new();
    for mut stratum in strata() {
        if let Some(rng) = rng.as_mut() {
            stratum.shuffle(rng);
        }
        saturate(case, &mut facts, &stratum);
    }
    Ok(read_out(case, &facts))
}

fn read_out(case: &Case, facts: &Facts) -> FlagAssignment {
    let mut out = FlagAssignment::default();
    for e in first_elements(case) {
        let id = &e.id;
        let mut f = e.flags;
        if has(facts, Fact::Invalid(id.clone())) {
            f.valid = Tri::False;
        }
        if has(facts, Fact::InDoubt(id.clone())) {
            f.set_in_doubt(true);
        }
        if has(facts, Fact::Defeated(id.clone())) {
            f.set_defeated(true);
        }
        if !e.flags.truth.is_false() {
            if f.in_doubt() {
                f.truth = Tri::False;
            } else if has(facts, Fact::TruthT(id.clone())) {
                f.truth = if has(facts, Fact::Blocked(id.clone())) {
                    Tri::False
                } else {
                    Tri::True
                };
            }
        }
        f.top_level |= has(facts, Fact::TopLevel(id.clone()));
        f.undeveloped |= has(facts, Fact::Undeveloped(id.clone()));
        out.elements.insert(id.clone(), f);
    }
    for c in first_containers(case) {
        let mut f = c.flags;
        f.uninstantiated |= has(facts, Fact::Uninstantiated(c.id.clone()));
        f.final_ |= has(facts, Fact::Final(c.id.clone()));
        out.containers.insert(c.id.clone(), f);
    }
    for r in &case.relationships {
        if out.relationships.contains_key(&r.id) {
            continue;
        }
        let mut f = RelFlags {
            valid: r.valid,
            in_doubt: r.in_doubt,
        };
        if has(facts, Fact::EdgeInvalid(r.id.clone())) || has(facts, Fact::R6Invalid(r.id.clone())) {
            f.valid = Tri::False;
        }
        f.in_doubt |= has(facts, Fact::RelInDoubt(r.id.clone()));
        out.relationships.insert(r.id.clone(), f);
    }
    out
}

/// Final flags by naive saturation, rules in catalogue order.
pub fn naive_oracle(case: &Case) -> Result<FlagAssignment, OracleError> {
    run(case, None)
}

/// As [`naive_oracle`], with each stratum's rule order shuffled by `seed`.
pub fn naive_oracle_shuffled(case: &Case, seed: u64) -> Result<FlagAssignment, OracleError> {
    run(case, Some(ChaCha8Rng::seed_from_u64(seed)))
}
