//! Edge-typing table: which (subject kind, predicate, object kind) triples
//! are well-typed.

use crate::model::{ContainerKind as C, ElementKind as E, Predicate, RecordKind};

/// Pure lookup over the finite predicate × kind × kind domain.
pub fn edge_type_allowed(predicate: Predicate, subject: RecordKind, object: RecordKind) -> bool {
    use RecordKind::{Container, Element, Relationship};
    match predicate {
        Predicate::SupportedBy => matches!(
            (subject, object),
            (Element(E::Goal), Element(E::Goal | E::Strategy | E::Solution))
                | (Element(E::Strategy), Element(E::Goal))
        ),
        Predicate::InContextOf => matches!(
            (subject, object),
            (
                Element(E::Goal | E::Strategy),
                Element(E::Context | E::Assumption | E::Justification)
            )
        ),
        Predicate::Challenges => {
            matches!(subject, Element(E::Goal | E::Solution))
                && matches!(object, Element(_) | Relationship)
        }
        Predicate::References => {
            matches!(subject, Element(k) if k.is_artefact_reference())
                && object == Container(C::Artefact)
        }
        Predicate::Contains => match subject {
            Container(C::AssuranceCase) => matches!(
                object,
                Container(C::Argument | C::Artefact | C::Module | C::View | C::Catalogue)
            ),
            Container(C::Argument) => matches!(object, Element(_) | Container(C::Argument)),
            Container(C::Module) => {
                matches!(object, Element(_) | Container(C::Module | C::Argument))
            }
            Container(C::View) => matches!(object, Container(C::Module | C::Argument)),
            Container(C::Catalogue) => object == Container(C::Pattern),
            _ => false,
        },
        Predicate::ConsistentWith | Predicate::ConflictsWith => {
            subject == Element(E::Context) && object == Element(E::Context)
        }
        Predicate::AssociatedWith => subject == Relationship && object == Container(C::Argument),
        Predicate::AttachedTo => {
            subject == Container(C::Template) && object == Element(E::InstantiationDataReference)
        }
        Predicate::RelatedTo => {
            subject == Container(C::Pattern) && object == Container(C::Pattern)
        }
        Predicate::Instantiates => match (subject, object) {
            (Container(C::Argument | C::Template), Container(C::Pattern)) => true,
            (Element(a), Element(b)) => a == b,
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContainerKind, ElementKind};

    fn el(k: ElementKind) -> RecordKind {
        RecordKind::Element(k)
    }

    #[test]
    fn listed_examples() {
        assert!(edge_type_allowed(
            Predicate::InContextOf,
            el(ElementKind::Goal),
            el(ElementKind::Context)
        ));
        assert!(!edge_type_allowed(
            Predicate::SupportedBy,
            el(ElementKind::Solution),
            el(ElementKind::Goal)
        ));
        assert!(edge_type_allowed(
            Predicate::SupportedBy,
            el(ElementKind::Goal),
            el(ElementKind::Strategy)
        ));
    }

    #[test]
    fn challenges_may_target_relationships() {
        assert!(edge_type_allowed(
            Predicate::Challenges,
            el(ElementKind::Solution),
            RecordKind::Relationship
        ));
        assert!(!edge_type_allowed(
            Predicate::Challenges,
            el(ElementKind::Strategy),
            el(ElementKind::Goal)
        ));
        assert!(!edge_type_allowed(
            Predicate::Challenges,
            el(ElementKind::Goal),
            RecordKind::Container(ContainerKind::Argument)
        ));
    }

    #[test]
    fn solutions_and_contexts_reference_artefacts() {
        let art = RecordKind::Container(ContainerKind::Artefact);
        for k in [ElementKind::Solution, ElementKind::Context, ElementKind::ArtefactReference] {
            assert!(edge_type_allowed(Predicate::References, el(k), art));
        }
        assert!(!edge_type_allowed(Predicate::References, el(ElementKind::Goal), art));
    }

    /// Independent enumeration of the allowed cells, compared cell by cell.
    #[test]
    fn table_matches_enumeration() {
        use ElementKind::*;
        let e = |k| RecordKind::Element(k);
        let c = |k| RecordKind::Container(k);
        let mut allowed: Vec<(Predicate, RecordKind, RecordKind)> = vec![
            (Predicate::SupportedBy, e(Goal), e(Goal)),
            (Predicate::SupportedBy, e(Goal), e(Strategy)),
            (Predicate::SupportedBy, e(Goal), e(Solution)),
            (Predicate::SupportedBy, e(Strategy), e(Goal)),
        ];
        for s in [Goal, Strategy] {
            for o in [Context, Assumption, Justification] {
                allowed.push((Predicate::InContextOf, e(s), e(o)));
            }
        }
        for s in [Goal, Solution] {
            for &o in ElementKind::ALL {
                allowed.push((Predicate::Challenges, e(s), e(o)));
            }
            allowed.push((Predicate::Challenges, e(s), RecordKind::Relationship));
        }
        for s in [ArtefactReference, Context, Solution] {
            allowed.push((Predicate::References, e(s), c(ContainerKind::Artefact)));
        }
        use ContainerKind as K;
        for o in [K::Argument, K::Artefact, K::Module, K::View, K::Catalogue] {
            allowed.push((Predicate::Contains, c(K::AssuranceCase), c(o)));
        }
        for &o in ElementKind::ALL {
            allowed.push((Predicate::Contains, c(K::Argument), e(o)));
            allowed.push((Predicate::Contains, c(K::Module), e(o)));
        }
        allowed.push((Predicate::Contains, c(K::Argument), c(K::Argument)));
        allowed.push((Predicate::Contains, c(K::Module), c(K::Module)));
        allowed.push((Predicate::Contains, c(K::Module), c(K::Argument)));
        allowed.push((Predicate::Contains, c(K::View), c(K::Module)));
        allowed.push((Predicate::Contains, c(K::View), c(K::Argument)));
        allowed.push((Predicate::Contains, c(K::Catalogue), c(K::Pattern)));
        allowed.push((Predicate::ConsistentWith, e(Context), e(Context)));
        allowed.push((Predicate::ConflictsWith, e(Context), e(Context)));
        allowed.push((Predicate::AssociatedWith, RecordKind::Relationship, c(K::Argument)));
        allowed.push((Predicate::AttachedTo, c(K::Template), e(InstantiationDataReference)));
        allowed.push((Predicate::RelatedTo, c(K::Pattern), c(K::Pattern)));
        allowed.push((Predicate::Instantiates, c(K::Argument), c(K::Pattern)));
        allowed.push((Predicate::Instantiates, c(K::Template), c(K::Pattern)));
        for &k in ElementKind::ALL {
            allowed.push((Predicate::Instantiates, e(k), e(k)));
        }

        let kinds = RecordKind::all();
        let mut count = 0;
        for &p in Predicate::ALL {
            for &s in &kinds {
                for &o in &kinds {
                    let expected = allowed.contains(&(p, s, o));
                    assert_eq!(edge_type_allowed(p, s, o), expected, "{p} {s} {o}");
                    count += 1;
                }
            }
        }
        assert_eq!(count, 11 * 17 * 17);
    }
}
