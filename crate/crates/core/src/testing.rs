//! Seeded case generators for property tests and benchmarks.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AwayTarget, Case, Container, ContainerKind, Element, ElementKind, FlagSet, Multiplicity,
    Predicate, RecordKind, Relationship, Tri,
};
use crate::typing::edge_type_allowed;

const KINDS: [ElementKind; 11] = [
    ElementKind::Goal,
    ElementKind::Goal,
    ElementKind::Goal,
    ElementKind::Strategy,
    ElementKind::Solution,
    ElementKind::Solution,
    ElementKind::Context,
    ElementKind::Context,
    ElementKind::Assumption,
    ElementKind::Justification,
    ElementKind::InstantiationDataReference,
];

const PREDICATES: [Predicate; 11] = [
    Predicate::SupportedBy,
    Predicate::InContextOf,
    Predicate::Challenges,
    Predicate::Contains,
    Predicate::AttachedTo,
    Predicate::RelatedTo,
    Predicate::ConsistentWith,
    Predicate::ConflictsWith,
    Predicate::AssociatedWith,
    Predicate::Instantiates,
    Predicate::References,
];

fn tri(rng: &mut ChaCha8Rng, p_true: f64, p_false: f64) -> Tri {
    let x: f64 = rng.gen();
    if x < p_true {
        Tri::True
    } else if x < p_true + p_false {
        Tri::False
    } else {
        Tri::Unset
    }
}

fn seed_flags(rng: &mut ChaCha8Rng) -> FlagSet {
    let mut f = FlagSet::default();
    f.valid = tri(rng, 0.1, 0.06);
    f.truth = tri(rng, 0.15, 0.05);
    f.set_in_doubt(rng.gen_bool(0.05));
    f.set_defeated(rng.gen_bool(0.03));
    f.public = rng.gen_bool(0.2);
    f.top_level = rng.gen_bool(0.05);
    f.undeveloped = rng.gen_bool(0.05);
    f
}

/// A small random case: up to 25 elements and 40 relationships, every
/// predicate used at least once, every flag seeded somewhere with high
/// probability. Some records are deliberately malformed (duplicate ids,
/// duplicate triples, ill-typed edges, cycles, broken away references).
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut case = Case::new("case", "random");

    let n = rng.gen_range(6..=23);
    for i in 0..n {
        let kind = *KINDS.choose(rng).unwrap();
        let statement = if rng.gen_bool(0.05) {
            format!("claim {i} about {{X}}")
        } else {
            format!("claim {i}")
        };
        let mut e = Element::new(format!("E{i}"), kind, statement);
        e.flags = seed_flags(rng);
        case.elements.push(e);
    }
    if rng.gen_bool(0.15) {
        let mut dup = case.elements[rng.gen_range(0..n)].clone();
        dup.statement = "duplicate".into();
        case.elements.push(dup);
    }

    let mut artefact = Container::new("A0", ContainerKind::Artefact, "evidence");
    artefact.flags.valid = tri(rng, 0.7, 0.2);
    case.containers.push(artefact);
    for m in ["M0", "M1"] {
        let mut module = Container::new(m, ContainerKind::Module, m);
        module.flags.public = rng.gen_bool(0.3);
        case.containers.push(module);
    }
    let elem_ids: Vec<String> = case.elements.iter().map(|e| e.id.clone()).collect();
    for e in case.elements.iter_mut() {
        if rng.gen_bool(0.3) {
            e.module = Some(if rng.gen_bool(0.5) { "M0" } else { "M1" }.into());
        }
    }
    if rng.gen_bool(0.5) {
        let target = elem_ids.choose(rng).unwrap().clone();
        let mut away = Element::new(format!("E{n}"), ElementKind::Goal, "away claim");
        away.module = Some("M0".into());
        away.away_target = Some(AwayTarget {
            element: target,
            module: "M1".into(),
        });
        case.elements.push(away);
    }

    let split = rng.gen_range(1..n);
    case.containers.push(
        Container::new("P0", ContainerKind::Pattern, "pattern")
            .with_members(elem_ids[..split].iter().cloned()),
    );
    let mut instance = Container::new("I0", ContainerKind::Argument, "instance")
        .with_members(elem_ids[split..].iter().cloned());
    instance.flags.final_ = rng.gen_bool(0.1);
    instance.flags.uninstantiated = rng.gen_bool(0.1);
    case.containers.push(instance);
    case.containers.push(
        Container::new("C0", ContainerKind::Argument, "confidence")
            .with_members(elem_ids.choose_multiple(rng, 3).cloned()),
    );

    case.containers
        .push(Container::new("P1", ContainerKind::Pattern, "other pattern"));
    case.containers
        .push(Container::new("T0", ContainerKind::Template, "template"));

    let kinds: Vec<(String, ElementKind)> =
        case.elements.iter().map(|e| (e.id.clone(), e.kind)).collect();
    let pattern_side: HashSet<&str> = elem_ids[..split].iter().map(String::as_str).collect();
    let pick = |rng: &mut ChaCha8Rng, want: &[ElementKind]| -> String {
        let pool: Vec<&String> = kinds
            .iter()
            .filter(|(_, k)| want.contains(k))
            .map(|(id, _)| id)
            .collect();
        match pool.choose(rng) {
            Some(id) => (*id).clone(),
            None => kinds.choose(rng).unwrap().0.clone(),
        }
    };
    use ElementKind as K;
    let edges = rng.gen_range(PREDICATES.len()..=39);
    for k in 0..edges {
        let predicate = if let Some(&p) = PREDICATES.get(k) {
            p
        } else if rng.gen_bool(0.4) {
            Predicate::SupportedBy
        } else {
            *PREDICATES.choose(rng).unwrap()
        };
        let rel_ids: Vec<String> = case.relationships.iter().map(|r| r.id.clone()).collect();
        let (subject, object) = match predicate {
            Predicate::SupportedBy => {
                if rng.gen_bool(0.75) {
                    (pick(rng, &[K::Goal]), pick(rng, &[K::Goal, K::Strategy, K::Solution]))
                } else {
                    (pick(rng, &[K::Strategy]), pick(rng, &[K::Goal]))
                }
            }
            Predicate::InContextOf => (
                pick(rng, &[K::Goal, K::Strategy]),
                pick(rng, &[K::Context, K::Assumption, K::Justification]),
            ),
            Predicate::Challenges => {
                let object = if !rel_ids.is_empty() && rng.gen_bool(0.25) {
                    rel_ids.choose(rng).unwrap().clone()
                } else {
                    pick(rng, &KINDS)
                };
                (pick(rng, &[K::Goal, K::Solution]), object)
            }
            Predicate::References => (pick(rng, &[K::Solution, K::Context]), "A0".into()),
            Predicate::Contains => (
                ["I0", "C0", "M0"].choose(rng).unwrap().to_string(),
                pick(rng, &KINDS),
            ),
            Predicate::ConsistentWith | Predicate::ConflictsWith => {
                (pick(rng, &[K::Context]), pick(rng, &[K::Context]))
            }
            Predicate::AssociatedWith if !rel_ids.is_empty() => {
                (rel_ids.choose(rng).unwrap().clone(), "C0".into())
            }
            Predicate::AttachedTo => ("T0".into(), pick(rng, &[K::InstantiationDataReference])),
            Predicate::RelatedTo => ("P0".into(), "P1".into()),
            Predicate::Instantiates if rng.gen_bool(0.3) => {
                (["I0", "T0"].choose(rng).unwrap().to_string(), "P0".into())
            }
            _ => {
                let s = kinds.choose(rng).unwrap();
                let same: Vec<&String> = kinds
                    .iter()
                    .filter(|(id, k)| *k == s.1 && pattern_side.contains(id.as_str()))
                    .map(|(id, _)| id)
                    .collect();
                let o = same.choose(rng).map_or_else(|| s.0.clone(), |id| (*id).clone());
                (s.0.clone(), o)
            }
        };
        let (subject, object) = if rng.gen_bool(0.05) {
            let all: Vec<String> = case.all_ids().map(str::to_string).collect();
            (all.choose(rng).unwrap().clone(), all.choose(rng).unwrap().clone())
        } else {
            (subject, object)
        };
        let id = if rng.gen_bool(0.03) && !rel_ids.is_empty() {
            rel_ids.choose(rng).unwrap().clone()
        } else {
            format!("R{k}")
        };
        let mut rel = Relationship::new(id, subject, predicate, object);
        rel.valid = tri(rng, 0.05, 0.05);
        rel.in_doubt = rng.gen_bool(0.05);
        if rng.gen_bool(0.15) {
            rel.multiplicity = Some(match rng.gen_range(0..3) {
                0 => Multiplicity::optional(),
                1 => Multiplicity::multiple(rng.gen_range(0..2), Some(rng.gen_range(2..4))),
                _ => Multiplicity::choice(if rng.gen_bool(0.5) { "g" } else { "h" }, 1, Some(1)),
            });
        }
        if rng.gen_bool(0.05) {
            rel.confidence_argument = Some("C0".into());
        }
        case.relationships.push(rel);
    }
    if rng.gen_bool(0.2) && !case.relationships.is_empty() {
        let mut twin = case.relationships.choose(rng).unwrap().clone();
        twin.id = format!("R{edges}");
        case.relationships.push(twin);
    }
    case
}

/// A layered, acyclic case with exactly `elements` elements and `edges`
/// relationships. About a tenth of the elements are contexts; the rest form
/// a supportedBy tree with extra downward cross links.
pub fn balanced_case(elements: usize, edges: usize, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case = Case::new("case", "balanced");
    let contexts = elements / 10;
    let tree = elements - contexts;
    let fanout = 3;

    let mut artefact = Container::new("A0", ContainerKind::Artefact, "evidence");
    artefact.flags.valid = Tri::True;
    case.containers.push(artefact);

    let mut depth = vec![0usize; tree];
    let mut kinds = Vec::with_capacity(tree);
    for i in 0..tree {
        if i > 0 {
            depth[i] = depth[(i - 1) / fanout] + 1;
        }
        let leaf = i * fanout + 1 >= tree;
        let kind = if leaf {
            ElementKind::Solution
        } else if depth[i] % 2 == 1 && (i * fanout + fanout) * fanout + 1 < tree {
            ElementKind::Strategy
        } else {
            ElementKind::Goal
        };
        kinds.push(kind);
        let mut e = Element::new(format!("N{i}"), kind, format!("node {i}"));
        if leaf && rng.gen_bool(0.02) {
            e.flags.truth = Tri::True;
        }
        case.elements.push(e);
    }
    for i in 0..contexts {
        let mut e = Element::new(format!("C{i}"), ElementKind::Context, format!("context {i}"));
        if rng.gen_bool(0.01) {
            e.flags.valid = Tri::False;
        }
        case.elements.push(e);
    }

    let mut seen: HashSet<(usize, Predicate, String)> = HashSet::new();
    let mut push = |case: &mut Case, s: usize, p: Predicate, o: String| -> bool {
        let object = match o.strip_prefix('N') {
            Some(n) => RecordKind::Element(kinds[n.parse::<usize>().unwrap()]),
            None if o == "A0" => RecordKind::Container(ContainerKind::Artefact),
            None => RecordKind::Element(ElementKind::Context),
        };
        if case.relationships.len() >= edges
            || !edge_type_allowed(p, RecordKind::Element(kinds[s]), object)
            || !seen.insert((s, p, o.clone()))
        {
            return false;
        }
        let id = format!("R{}", case.relationships.len());
        case.relationships
            .push(Relationship::new(id, format!("N{s}"), p, o));
        true
    };
    for child in 1..tree {
        push(&mut case, (child - 1) / fanout, Predicate::SupportedBy, format!("N{child}"));
    }
    let internal = tree.div_ceil(fanout).max(1);
    for i in internal..tree {
        if rng.gen_bool(0.5) {
            push(&mut case, i, Predicate::References, "A0".into());
        }
    }
    let mut guard = 0;
    while case.relationships.len() < edges && guard < edges * 20 {
        guard += 1;
        let s = rng.gen_range(0..internal);
        match rng.gen_range(0..10) {
            0..=4 if contexts > 0 => {
                let c = rng.gen_range(0..contexts);
                push(&mut case, s, Predicate::InContextOf, format!("C{c}"));
            }
            5 => {
                let o = rng.gen_range(0..tree);
                push(&mut case, s, Predicate::Challenges, format!("N{o}"));
            }
            _ => {
                if s + 1 < tree {
                    let o = rng.gen_range(s + 1..tree);
                    push(&mut case, s, Predicate::SupportedBy, format!("N{o}"));
                }
            }
        }
    }
    case
}
