//! Native `.gsn.json` documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{format_timestamp, parse_timestamp, resolve_references, CaseDocument, CaseIoError};
use crate::store::{CaseDelta, FlagAssertion};
use crate::model::{
    AwayTarget, Case, Container, ContainerKind, Element, ElementKind, FlagSet, Multiplicity,
    MultiplicityIndicator, Predicate, Relationship, Tri, ViewType,
};

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentDto {
    format_version: String,
    case: ContainerDto,
    #[serde(default)]
    elements: Vec<ElementDto>,
    #[serde(default)]
    relationships: Vec<RelationshipDto>,
    #[serde(default)]
    containers: Vec<ContainerDto>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FlagsDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<bool>,
    #[serde(rename = "true", default, skip_serializing_if = "Option::is_none")]
    truth: Option<bool>,
    #[serde(rename = "inDoubt", default, skip_serializing_if = "is_false")]
    in_doubt: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    defeated: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    undeveloped: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    public: bool,
    #[serde(rename = "topLevel", default, skip_serializing_if = "is_false")]
    top_level: bool,
    #[serde(rename = "final", default, skip_serializing_if = "is_false")]
    final_: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    uninstantiated: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AwayDto {
    element: String,
    module: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementDto {
    id: String,
    kind: String,
    statement: String,
    #[serde(default)]
    flags: FlagsDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    published: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    away_target: Option<AwayDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    module: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiplicityDto {
    indicator: String,
    min: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationshipDto {
    id: String,
    subject: String,
    predicate: String,
    object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<bool>,
    #[serde(default, skip_serializing_if = "is_false")]
    in_doubt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    multiplicity: Option<MultiplicityDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence_argument: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerDto {
    id: String,
    kind: String,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    view_type: Option<String>,
    #[serde(default)]
    members: Vec<String>,
    #[serde(default)]
    flags: FlagsDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instantiation_data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    artefact_uri: Option<String>,
}

impl From<&FlagSet> for FlagsDto {
    fn from(f: &FlagSet) -> Self {
        FlagsDto {
            valid: f.valid.as_option(),
            truth: f.truth.as_option(),
            in_doubt: f.in_doubt(),
            defeated: f.defeated(),
            undeveloped: f.undeveloped,
            public: f.public,
            top_level: f.top_level,
            final_: f.final_,
            uninstantiated: f.uninstantiated,
        }
    }
}

impl From<&FlagsDto> for FlagSet {
    fn from(d: &FlagsDto) -> Self {
        let mut f = FlagSet::default();
        f.valid = Tri::from(d.valid);
        f.truth = Tri::from(d.truth);
        f.undeveloped = d.undeveloped;
        f.public = d.public;
        f.top_level = d.top_level;
        f.final_ = d.final_;
        f.uninstantiated = d.uninstantiated;
        f.set_in_doubt(d.in_doubt);
        if d.defeated {
            f.set_defeated(true);
        }
        f
    }
}

fn kind<T: std::str::FromStr>(s: &str) -> Result<T, CaseIoError> {
    s.parse().map_err(|_| CaseIoError::UnknownKind(s.to_string()))
}

fn container_from(dto: &ContainerDto) -> Result<Container, CaseIoError> {
    let kind: ContainerKind = kind(&dto.kind)?;
    let view_type = dto
        .view_type
        .as_deref()
        .map(|v| {
            v.parse::<ViewType>()
                .map_err(|_| CaseIoError::InvalidValue(format!("view type `{v}`")))
        })
        .transpose()?;
    Ok(Container {
        id: dto.id.clone(),
        kind,
        name: dto.name.clone(),
        view_type,
        members: dto.members.clone(),
        flags: (&dto.flags).into(),
        instantiation_data: dto.instantiation_data.clone(),
        artefact_uri: dto.artefact_uri.clone(),
    })
}

fn container_to(c: &Container) -> ContainerDto {
    let mut members = c.members.clone();
    members.sort();
    ContainerDto {
        id: c.id.clone(),
        kind: c.kind.to_string(),
        name: c.name.clone(),
        view_type: c.view_type.map(|v| v.to_string()),
        members,
        flags: (&c.flags).into(),
        instantiation_data: c.instantiation_data.clone(),
        artefact_uri: c.artefact_uri.clone(),
    }
}

fn element_from(e: &ElementDto) -> Result<Element, CaseIoError> {
    let published = e
        .published
        .as_deref()
        .map(|p| parse_timestamp(p).ok_or_else(|| CaseIoError::InvalidValue(format!("timestamp `{p}`"))))
        .transpose()?;
    Ok(Element {
        id: e.id.clone(),
        kind: kind::<ElementKind>(&e.kind)?,
        statement: e.statement.clone(),
        flags: (&e.flags).into(),
        published,
        away_target: e.away_target.as_ref().map(|a| AwayTarget {
            element: a.element.clone(),
            module: a.module.clone(),
        }),
        module: e.module.clone(),
        metadata: e.metadata.clone(),
    })
}

fn element_to(e: &Element) -> ElementDto {
    ElementDto {
        id: e.id.clone(),
        kind: e.kind.to_string(),
        statement: e.statement.clone(),
        flags: (&e.flags).into(),
        published: e.published.as_ref().map(format_timestamp),
        away_target: e.away_target.as_ref().map(|a| AwayDto {
            element: a.element.clone(),
            module: a.module.clone(),
        }),
        module: e.module.clone(),
        metadata: e.metadata.clone(),
    }
}

fn relationship_from(r: &RelationshipDto) -> Result<Relationship, CaseIoError> {
    let predicate: Predicate = r
        .predicate
        .parse()
        .map_err(|_| CaseIoError::UnknownPredicate(r.predicate.clone()))?;
    let multiplicity = r
        .multiplicity
        .as_ref()
        .map(|m| {
            Ok::<_, CaseIoError>(Multiplicity {
                indicator: kind::<MultiplicityIndicator>(&m.indicator)?,
                min: m.min,
                max: m.max,
                group: m.group.clone(),
            })
        })
        .transpose()?;
    Ok(Relationship {
        id: r.id.clone(),
        subject: r.subject.clone(),
        predicate,
        object: r.object.clone(),
        valid: Tri::from(r.valid),
        in_doubt: r.in_doubt,
        multiplicity,
        acp: r.acp.clone(),
        confidence_argument: r.confidence_argument.clone(),
    })
}

fn relationship_to(r: &Relationship) -> RelationshipDto {
    RelationshipDto {
        id: r.id.clone(),
        subject: r.subject.clone(),
        predicate: r.predicate.to_string(),
        object: r.object.clone(),
        valid: r.valid.as_option(),
        in_doubt: r.in_doubt,
        multiplicity: r.multiplicity.as_ref().map(|m| MultiplicityDto {
            indicator: m.indicator.to_string(),
            min: m.min,
            max: m.max,
            group: m.group.clone(),
        }),
        acp: r.acp.clone(),
        confidence_argument: r.confidence_argument.clone(),
    }
}

/// Parses a native document and resolves every reference.
pub fn parse_native(text: &str) -> Result<CaseDocument, CaseIoError> {
    let dto: DocumentDto = serde_json::from_str(text).map_err(|e| CaseIoError::Syntax {
        line: e.line(),
        col: e.column(),
        message: e.to_string(),
    })?;
    if dto.format_version != super::FORMAT_VERSION {
        return Err(CaseIoError::UnsupportedVersion(dto.format_version));
    }
    let root = container_from(&dto.case)?;
    let elements = dto
        .elements
        .iter()
        .map(element_from)
        .collect::<Result<Vec<_>, _>>()?;
    let relationships = dto
        .relationships
        .iter()
        .map(relationship_from)
        .collect::<Result<Vec<_>, _>>()?;
    let containers = dto
        .containers
        .iter()
        .map(container_from)
        .collect::<Result<Vec<_>, _>>()?;
    let case = Case {
        root,
        elements,
        relationships,
        containers,
    };
    resolve_references(&case)?;
    Ok(CaseDocument {
        format_version: dto.format_version,
        case,
    })
}

/// Canonical text: records and members sorted by id, fixed key order,
/// two-space indentation, trailing newline.
pub fn serialize_native(doc: &CaseDocument) -> String {
    let case = doc.case.canonical();
    let dto = DocumentDto {
        format_version: doc.format_version.clone(),
        case: container_to(&case.root),
        elements: case.elements.iter().map(element_to).collect(),
        relationships: case.relationships.iter().map(relationship_to).collect(),
        containers: case.containers.iter().map(container_to).collect(),
    };
    let mut out = serde_json::to_string_pretty(&dto).expect("document serializes");
    out.push('\n');
    out
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DeltaDto {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    add_elements: Vec<ElementDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    add_containers: Vec<ContainerDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    add_relationships: Vec<RelationshipDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    add_members: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    set_flags: Vec<FlagAssertion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    remove_elements: Vec<String>,
}

fn value_error(e: serde_json::Error) -> CaseIoError {
    CaseIoError::Syntax {
        line: e.line(),
        col: e.column(),
        message: e.to_string(),
    }
}

/// One element in native field layout.
pub fn element_from_json(v: Value) -> Result<Element, CaseIoError> {
    element_from(&serde_json::from_value(v).map_err(value_error)?)
}

pub fn element_to_json(e: &Element) -> Value {
    serde_json::to_value(element_to(e)).expect("element serializes")
}

pub fn relationship_from_json(v: Value) -> Result<Relationship, CaseIoError> {
    relationship_from(&serde_json::from_value(v).map_err(value_error)?)
}

pub fn relationship_to_json(r: &Relationship) -> Value {
    serde_json::to_value(relationship_to(r)).expect("relationship serializes")
}

pub fn container_from_json(v: Value) -> Result<Container, CaseIoError> {
    container_from(&serde_json::from_value(v).map_err(value_error)?)
}

pub fn container_to_json(c: &Container) -> Value {
    serde_json::to_value(container_to(c)).expect("container serializes")
}

/// A change set: any of `add_elements`, `add_containers`,
/// `add_relationships`, `add_members` (`[container, member]` pairs),
/// `set_flags` (`{record, flag, value}`) and `remove_elements`.
pub fn delta_from_json(v: Value) -> Result<CaseDelta, CaseIoError> {
    let dto: DeltaDto = serde_json::from_value(v).map_err(value_error)?;
    Ok(CaseDelta {
        add_elements: dto.add_elements.iter().map(element_from).collect::<Result<_, _>>()?,
        add_containers: dto.add_containers.iter().map(container_from).collect::<Result<_, _>>()?,
        add_relationships: dto
            .add_relationships
            .iter()
            .map(relationship_from)
            .collect::<Result<_, _>>()?,
        add_members: dto.add_members,
        set_flags: dto.set_flags,
        remove_elements: dto.remove_elements,
    })
}

pub fn delta_to_json(d: &CaseDelta) -> Value {
    let dto = DeltaDto {
        add_elements: d.add_elements.iter().map(element_to).collect(),
        add_containers: d.add_containers.iter().map(container_to).collect(),
        add_relationships: d.add_relationships.iter().map(relationship_to).collect(),
        add_members: d.add_members.clone(),
        set_flags: d.set_flags.clone(),
        remove_elements: d.remove_elements.clone(),
    };
    serde_json::to_value(dto).expect("delta serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Case;

    const MINIMAL: &str = r#"{
  "format_version": "1.0",
  "case": { "id": "C", "kind": "AssuranceCase", "name": "c" },
  "elements": [ { "id": "G1", "kind": "Goal", "statement": "Rocket is safe" } ],
  "relationships": [],
  "containers": []
}"#;

    #[test]
    fn minimal_document() {
        let doc = parse_native(MINIMAL).unwrap();
        assert_eq!(doc.case.elements.len(), 1);
        assert!(doc.case.relationships.is_empty());
    }

    #[test]
    fn dangling_reference() {
        let text = MINIMAL.replace(
            "\"relationships\": []",
            r#""relationships": [ { "id": "R1", "subject": "G1", "predicate": "supportedBy", "object": "G9" } ]"#,
        );
        assert_eq!(
            parse_native(&text),
            Err(CaseIoError::DanglingReference("G9".into()))
        );
    }

    #[test]
    fn unknown_kind() {
        let text = MINIMAL.replace("\"Goal\"", "\"Claim\"");
        assert_eq!(parse_native(&text), Err(CaseIoError::UnknownKind("Claim".into())));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_native("{\n  \"format_version\": ").unwrap_err();
        assert!(matches!(err, CaseIoError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn empty_case_is_header_and_empty_sections() {
        let text = serialize_native(&CaseDocument::new(Case::new("C", "empty")));
        assert_eq!(
            text,
            "{\n  \"format_version\": \"1.0\",\n  \"case\": {\n    \"id\": \"C\",\n    \"kind\": \"AssuranceCase\",\n    \"name\": \"empty\",\n    \"members\": [],\n    \"flags\": {}\n  },\n  \"elements\": [],\n  \"relationships\": [],\n  \"containers\": []\n}\n"
        );
        assert_eq!(serialize_native(&parse_native(&text).unwrap()), text);
    }

    #[test]
    fn record_order_does_not_change_output() {
        let mut a = Case::new("C", "c");
        a.add_element(ElementKind::Goal, "G1", "one", None).unwrap();
        a.add_element(ElementKind::Goal, "G2", "two", None).unwrap();
        let mut b = a.clone();
        b.elements.reverse();
        assert_eq!(
            serialize_native(&CaseDocument::new(a)),
            serialize_native(&CaseDocument::new(b))
        );
    }

    #[test]
    fn delta_json_round_trip() {
        let v = serde_json::json!({
            "add_elements": [{ "id": "G9", "kind": "Goal", "statement": "New claim" }],
            "add_relationships": [{ "id": "R9", "subject": "G1", "predicate": "supportedBy", "object": "G9" }],
            "add_members": [["C", "G9"]],
            "set_flags": [{ "record": "G1", "flag": "valid", "value": false }]
        });
        let d = delta_from_json(v.clone()).unwrap();
        assert_eq!(d.add_elements[0].kind, ElementKind::Goal);
        assert_eq!(d.set_flags[0].value, Tri::False);
        assert_eq!(delta_from_json(delta_to_json(&d)).unwrap(), d);
        assert!(delta_from_json(serde_json::json!({ "add_goals": [] })).is_err());
    }
}
