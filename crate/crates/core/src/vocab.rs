//! Vocabulary registry: class and property names with their IRIs.

use crate::model::{ContainerKind, ElementKind, Flag, Predicate};

pub const GSN_NS: &str = "https://w3id.org/OntoGSN/ontology#";
pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const SCHEMA_NS: &str = "https://schema.org/";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
/// Namespace for case-local record names in the interchange format.
pub const CASE_NS: &str = "urn:gsn:case:";

/// Classes that are not record kinds but belong to the vocabulary.
pub const EXTRA_CLASSES: &[&str] = &[
    "GSNElement",
    "Relationship",
    "RelationshipWithConfidence",
    "Defeater",
    "AssuranceClaimPoint",
];

/// Datatype and annotation properties outside the predicate and flag sets.
pub const DATA_PROPERTIES: &[&str] = &[
    "statement",
    "published",
    "viewType",
    "coreOrExtension",
    "assuranceClaimPoint",
    "module",
    "awayElement",
    "awayModule",
    "multiplicity",
    "min",
    "max",
    "choiceGroup",
    "instantiationData",
    "artefactUri",
    "annotation",
];

/// Kind of vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Class,
    ObjectProperty,
    Flag,
    DataProperty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub name: &'static str,
    pub kind: TermKind,
}

impl Term {
    pub fn iri(&self) -> String {
        format!("{GSN_NS}{}", self.name)
    }
}

/// Every term of the vocabulary.
pub fn registry() -> Vec<Term> {
    let mut terms = Vec::new();
    let class = |name| Term { name, kind: TermKind::Class };
    terms.extend(ElementKind::ALL.iter().map(|k| class(k.as_str())));
    terms.extend(ContainerKind::ALL.iter().map(|k| class(k.as_str())));
    terms.extend(EXTRA_CLASSES.iter().map(|&n| class(n)));
    terms.extend(Predicate::ALL.iter().map(|p| Term {
        name: p.as_str(),
        kind: TermKind::ObjectProperty,
    }));
    terms.extend(Flag::ALL.iter().map(|f| Term {
        name: f.as_str(),
        kind: TermKind::Flag,
    }));
    // `published` doubles as a timestamp and a pattern-state flag.
    terms.push(Term {
        name: "published",
        kind: TermKind::Flag,
    });
    terms.extend(
        DATA_PROPERTIES
            .iter()
            .filter(|&&n| n != "published")
            .map(|&name| Term {
                name,
                kind: TermKind::DataProperty,
            }),
    );
    terms
}

pub fn lookup(name: &str) -> Option<Term> {
    registry().into_iter().find(|t| t.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let reg = registry();
        let n = |k| reg.iter().filter(|t| t.kind == k).count();
        assert_eq!(n(TermKind::Class), 21);
        assert_eq!(n(TermKind::ObjectProperty), 11);
        assert_eq!(n(TermKind::Flag), 10);
        assert_eq!(lookup("supportedBy").unwrap().iri(), format!("{GSN_NS}supportedBy"));
    }
}
