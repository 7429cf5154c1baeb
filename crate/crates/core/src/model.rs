//! Typed GSN vocabulary and the record types every other module works on.
//!
//! A [`Case`] holds three record collections: [`Element`]s (argument nodes),
//! [`Relationship`]s (reified, addressable edges) and [`Container`]s
//! (assurance cases, arguments, modules, views, patterns and so on).
//! Identifiers share one namespace across all three collections.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use thiserror::Error;

/// Errors raised while building a case through the checked constructors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate identifier `{0}`")]
    DuplicateIdentifier(String),
    #[error("element `{0}` has an empty statement")]
    EmptyStatement(String),
    #[error("empty identifier")]
    EmptyIdentifier,
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("duplicate triple ({0}, {1}, {2})")]
    DuplicateTriple(String, Predicate, String),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("invalid multiplicity: {0}")]
    InvalidMultiplicity(String),
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ModelError::UnknownKind(other.to_string())),
                }
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

named_enum! {
    /// Node kinds of an argument.
    ElementKind {
        Goal => "Goal",
        Strategy => "Strategy",
        Solution => "Solution",
        Context => "Context",
        Assumption => "Assumption",
        Justification => "Justification",
        ArtefactReference => "ArtefactReference",
        InstantiationDataReference => "InstantiationDataReference",
    }
}

named_enum! {
    /// Kinds of grouping records.
    ContainerKind {
        AssuranceCase => "AssuranceCase",
        Argument => "Argument",
        Module => "Module",
        View => "View",
        Pattern => "Pattern",
        Catalogue => "Catalogue",
        Template => "Template",
        Artefact => "Artefact",
    }
}

named_enum! {
    /// The closed predicate vocabulary.
    Predicate {
        SupportedBy => "supportedBy",
        InContextOf => "inContextOf",
        Challenges => "challenges",
        Contains => "contains",
        AttachedTo => "attachedTo",
        RelatedTo => "relatedTo",
        ConsistentWith => "consistentWith",
        ConflictsWith => "conflictsWith",
        AssociatedWith => "associatedWith",
        Instantiates => "instantiates",
        References => "references",
    }
}

named_enum! {
    /// Visual projection type of a View container.
    ViewType {
        Argument => "argument",
        Architecture => "architecture",
    }
}

named_enum! {
    /// Instantiation indicator of a pattern relationship.
    MultiplicityIndicator {
        Optional => "optional",
        Multiple => "multiple",
        Choice => "choice",
    }
}

named_enum! {
    /// Flags carried by records. `Truth` is the vocabulary's `true` flag.
    Flag {
        Valid => "valid",
        Truth => "true",
        InDoubt => "inDoubt",
        Defeated => "defeated",
        Undeveloped => "undeveloped",
        Public => "public",
        TopLevel => "topLevel",
        Final => "final",
        Uninstantiated => "uninstantiated",
    }
}

impl ElementKind {
    /// Context and Solution are artefact references for linking purposes.
    pub fn is_artefact_reference(self) -> bool {
        matches!(
            self,
            ElementKind::ArtefactReference | ElementKind::Context | ElementKind::Solution
        )
    }

    /// Kinds that may act as defeaters when they challenge something.
    pub fn can_defeat(self) -> bool {
        matches!(self, ElementKind::Goal | ElementKind::Solution)
    }
}

impl Predicate {
    /// Which part of the standard the predicate comes from. Carried as an
    /// annotation only; nothing filters on it.
    pub fn core_or_extension(self) -> &'static str {
        match self {
            Predicate::SupportedBy | Predicate::InContextOf | Predicate::References => "core",
            Predicate::Challenges => "dialectic",
            Predicate::Contains | Predicate::ConsistentWith | Predicate::ConflictsWith => {
                "modular"
            }
            Predicate::AttachedTo | Predicate::RelatedTo | Predicate::Instantiates => "pattern",
            Predicate::AssociatedWith => "confidence",
        }
    }
}

impl Flag {
    /// Tri-state flags distinguish "unset" from "false".
    pub fn is_tri_state(self) -> bool {
        matches!(self, Flag::Valid | Flag::Truth)
    }
}

/// Three-valued boolean: absence of a value is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Tri {
    #[default]
    Unset,
    True,
    False,
}

impl Tri {
    pub fn is_true(self) -> bool {
        self == Tri::True
    }

    pub fn is_false(self) -> bool {
        self == Tri::False
    }

    pub fn as_option(self) -> Option<bool> {
        match self {
            Tri::Unset => None,
            Tri::True => Some(true),
            Tri::False => Some(false),
        }
    }
}

impl From<bool> for Tri {
    fn from(b: bool) -> Self {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }
}

impl From<Option<bool>> for Tri {
    fn from(b: Option<bool>) -> Self {
        b.map(Tri::from).unwrap_or(Tri::Unset)
    }
}

/// Serialized as `true`, `false` or `null`.
impl serde::Serialize for Tri {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_option().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Tri {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Option::<bool>::deserialize(d).map(Tri::from)
    }
}

impl fmt::Display for Tri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tri::Unset => "unset",
            Tri::True => "true",
            Tri::False => "false",
        })
    }
}

/// Flag state of an element or container.
///
/// `defeated` implies `in_doubt`; the setter keeps that invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FlagSet {
    pub valid: Tri,
    pub truth: Tri,
    in_doubt: bool,
    defeated: bool,
    pub undeveloped: bool,
    pub public: bool,
    pub top_level: bool,
    pub final_: bool,
    pub uninstantiated: bool,
}

impl FlagSet {
    pub fn in_doubt(&self) -> bool {
        self.in_doubt || self.defeated
    }

    pub fn defeated(&self) -> bool {
        self.defeated
    }

    pub fn set_in_doubt(&mut self, v: bool) {
        self.in_doubt = v;
        if !v {
            self.defeated = false;
        }
    }

    pub fn set_defeated(&mut self, v: bool) {
        self.defeated = v;
        if v {
            self.in_doubt = true;
        }
    }

    /// Reads any flag as a [`Tri`]; plain booleans map to `True`/`False`.
    pub fn get(&self, flag: Flag) -> Tri {
        match flag {
            Flag::Valid => self.valid,
            Flag::Truth => self.truth,
            Flag::InDoubt => self.in_doubt().into(),
            Flag::Defeated => self.defeated.into(),
            Flag::Undeveloped => self.undeveloped.into(),
            Flag::Public => self.public.into(),
            Flag::TopLevel => self.top_level.into(),
            Flag::Final => self.final_.into(),
            Flag::Uninstantiated => self.uninstantiated.into(),
        }
    }

    /// Writes a flag. Boolean flags treat `Unset` as `false`.
    pub fn set(&mut self, flag: Flag, value: Tri) {
        let b = value.is_true();
        match flag {
            Flag::Valid => self.valid = value,
            Flag::Truth => self.truth = value,
            Flag::InDoubt => self.set_in_doubt(b),
            Flag::Defeated => self.set_defeated(b),
            Flag::Undeveloped => self.undeveloped = b,
            Flag::Public => self.public = b,
            Flag::TopLevel => self.top_level = b,
            Flag::Final => self.final_ = b,
            Flag::Uninstantiated => self.uninstantiated = b,
        }
    }

    pub fn with(mut self, flag: Flag, value: Tri) -> Self {
        self.set(flag, value);
        self
    }

    /// Flags that carry a value other than the default, in declaration order.
    pub fn set_flags(&self) -> Vec<(Flag, Tri)> {
        Flag::ALL
            .iter()
            .filter_map(|&f| {
                let v = self.get(f);
                let default = if f.is_tri_state() { Tri::Unset } else { Tri::False };
                (v != default).then_some((f, v))
            })
            .collect()
    }
}

/// Reference from an away element to the element it stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AwayTarget {
    pub element: String,
    pub module: String,
}

/// One argument node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    pub statement: String,
    pub flags: FlagSet,
    pub published: Option<DateTime<Utc>>,
    pub away_target: Option<AwayTarget>,
    pub module: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

impl Element {
    pub fn new(id: impl Into<String>, kind: ElementKind, statement: impl Into<String>) -> Self {
        Element {
            id: id.into(),
            kind,
            statement: statement.into(),
            flags: FlagSet::default(),
            published: None,
            away_target: None,
            module: None,
            metadata: BTreeMap::new(),
        }
    }
}

/// Cardinality descriptor on a pattern relationship.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Multiplicity {
    pub indicator: MultiplicityIndicator,
    pub min: u32,
    /// `None` means unbounded.
    pub max: Option<u32>,
    /// Choice alternatives sharing a subject and group form one choice.
    pub group: Option<String>,
}

impl Multiplicity {
    pub fn optional() -> Self {
        Multiplicity {
            indicator: MultiplicityIndicator::Optional,
            min: 0,
            max: Some(1),
            group: None,
        }
    }

    pub fn multiple(min: u32, max: Option<u32>) -> Self {
        Multiplicity {
            indicator: MultiplicityIndicator::Multiple,
            min,
            max,
            group: None,
        }
    }

    pub fn choice(group: impl Into<String>, min: u32, max: Option<u32>) -> Self {
        Multiplicity {
            indicator: MultiplicityIndicator::Choice,
            min,
            max,
            group: Some(group.into()),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if let Some(max) = self.max {
            if self.min > max {
                return Err(ModelError::InvalidMultiplicity(format!(
                    "min {} exceeds max {}",
                    self.min, max
                )));
            }
        }
        match self.indicator {
            MultiplicityIndicator::Optional if (self.min, self.max) != (0, Some(1)) => Err(
                ModelError::InvalidMultiplicity("optional must be 0..1".into()),
            ),
            MultiplicityIndicator::Choice if self.group.is_none() => Err(
                ModelError::InvalidMultiplicity("choice requires a group".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn admits(&self, count: u32) -> bool {
        count >= self.min && self.max.is_none_or(|m| count <= m)
    }
}

/// A reified edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relationship {
    pub id: String,
    pub subject: String,
    pub predicate: Predicate,
    pub object: String,
    pub valid: Tri,
    pub in_doubt: bool,
    pub multiplicity: Option<Multiplicity>,
    /// Assurance claim point; set together with `confidence_argument`.
    pub acp: Option<String>,
    pub confidence_argument: Option<String>,
}

impl Relationship {
    pub fn new(
        id: impl Into<String>,
        subject: impl Into<String>,
        predicate: Predicate,
        object: impl Into<String>,
    ) -> Self {
        Relationship {
            id: id.into(),
            subject: subject.into(),
            predicate,
            object: object.into(),
            valid: Tri::Unset,
            in_doubt: false,
            multiplicity: None,
            acp: None,
            confidence_argument: None,
        }
    }

    /// A relationship with an assurance claim point and confidence argument.
    pub fn has_confidence(&self) -> bool {
        self.acp.is_some() && self.confidence_argument.is_some()
    }
}

/// A grouping record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub id: String,
    pub kind: ContainerKind,
    pub name: String,
    pub view_type: Option<ViewType>,
    pub members: Vec<String>,
    pub flags: FlagSet,
    pub instantiation_data: Option<String>,
    pub artefact_uri: Option<String>,
}

impl Container {
    pub fn new(id: impl Into<String>, kind: ContainerKind, name: impl Into<String>) -> Self {
        Container {
            id: id.into(),
            kind,
            name: name.into(),
            view_type: (kind == ContainerKind::View).then_some(ViewType::Argument),
            members: Vec::new(),
            flags: FlagSet::default(),
            instantiation_data: None,
            artefact_uri: None,
        }
    }

    pub fn with_members<I, S>(mut self, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.members.extend(members.into_iter().map(Into::into));
        self
    }
}

/// What kind of record an identifier denotes; the domain of the typing table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordKind {
    Element(ElementKind),
    Container(ContainerKind),
    Relationship,
}

impl RecordKind {
    /// Every record kind, for exhaustive table checks.
    pub fn all() -> Vec<RecordKind> {
        ElementKind::ALL
            .iter()
            .map(|&k| RecordKind::Element(k))
            .chain(ContainerKind::ALL.iter().map(|&k| RecordKind::Container(k)))
            .chain(std::iter::once(RecordKind::Relationship))
            .collect()
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordKind::Element(k) => k.fmt(f),
            RecordKind::Container(k) => k.fmt(f),
            RecordKind::Relationship => f.write_str("Relationship"),
        }
    }
}

/// Severity of a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// A minimum-membership finding from [`Case::completeness_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletenessWarning {
    pub container: String,
    pub message: String,
}

/// Description of a required member kind and its test.
type Requirement = (&'static str, fn(RecordKind) -> bool);

/// An assurance case: the root container plus all records.
///
/// The checked constructors (`add_*`) reject duplicates and dangling
/// references. Documents loaded from disk may still contain duplicate
/// identifiers; the inference rules report those.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    pub root: Container,
    pub elements: Vec<Element>,
    pub relationships: Vec<Relationship>,
    pub containers: Vec<Container>,
}

impl Case {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Case {
            root: Container::new(id, ContainerKind::AssuranceCase, name),
            elements: Vec::new(),
            relationships: Vec::new(),
            containers: Vec::new(),
        }
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn element_mut(&mut self, id: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.id == id)
    }

    pub fn relationship(&self, id: &str) -> Option<&Relationship> {
        self.relationships.iter().find(|r| r.id == id)
    }

    /// Looks up a container, including the root.
    pub fn container(&self, id: &str) -> Option<&Container> {
        if self.root.id == id {
            return Some(&self.root);
        }
        self.containers.iter().find(|c| c.id == id)
    }

    pub fn container_mut(&mut self, id: &str) -> Option<&mut Container> {
        if self.root.id == id {
            return Some(&mut self.root);
        }
        self.containers.iter_mut().find(|c| c.id == id)
    }

    /// All containers, root first.
    pub fn all_containers(&self) -> impl Iterator<Item = &Container> {
        std::iter::once(&self.root).chain(self.containers.iter())
    }

    pub fn record_kind(&self, id: &str) -> Option<RecordKind> {
        if let Some(e) = self.element(id) {
            return Some(RecordKind::Element(e.kind));
        }
        if let Some(c) = self.container(id) {
            return Some(RecordKind::Container(c.kind));
        }
        self.relationship(id).map(|_| RecordKind::Relationship)
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.record_kind(id).is_some()
    }

    /// Number of records of all types, root included.
    pub fn record_count(&self) -> usize {
        1 + self.elements.len() + self.relationships.len() + self.containers.len()
    }

    /// Every record identifier in storage order, root first.
    pub fn all_ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.root.id.as_str())
            .chain(self.elements.iter().map(|e| e.id.as_str()))
            .chain(self.containers.iter().map(|c| c.id.as_str()))
            .chain(self.relationships.iter().map(|r| r.id.as_str()))
    }

    /// Adds an element after checking identifier uniqueness and statement.
    pub fn add_element(
        &mut self,
        kind: ElementKind,
        id: impl Into<String>,
        statement: impl Into<String>,
        flags: Option<FlagSet>,
    ) -> Result<String, ModelError> {
        let mut element = Element::new(id, kind, statement);
        if let Some(flags) = flags {
            element.flags = flags;
        }
        self.insert_element(element)
    }

    /// Inserts a fully formed element under the same checks as `add_element`.
    pub fn insert_element(&mut self, element: Element) -> Result<String, ModelError> {
        if element.id.is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        if element.statement.trim().is_empty() {
            return Err(ModelError::EmptyStatement(element.id));
        }
        if self.contains_id(&element.id) {
            return Err(ModelError::DuplicateIdentifier(element.id));
        }
        let id = element.id.clone();
        self.elements.push(element);
        Ok(id)
    }

    pub fn add_container(&mut self, container: Container) -> Result<String, ModelError> {
        if container.id.is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        if self.contains_id(&container.id) {
            return Err(ModelError::DuplicateIdentifier(container.id));
        }
        for member in &container.members {
            if !self.contains_id(member) {
                return Err(ModelError::UnknownEndpoint(member.clone()));
            }
        }
        let id = container.id.clone();
        self.containers.push(container);
        Ok(id)
    }

    /// Adds a reified edge with a generated identifier (`R1`, `R2`, ...).
    pub fn add_edge(
        &mut self,
        predicate: &str,
        subject: &str,
        object: &str,
    ) -> Result<String, ModelError> {
        let predicate: Predicate = predicate
            .parse()
            .map_err(|_| ModelError::UnknownPredicate(predicate.to_string()))?;
        let mut n = self.relationships.len() + 1;
        let id = loop {
            let candidate = format!("R{n}");
            if !self.contains_id(&candidate) {
                break candidate;
            }
            n += 1;
        };
        self.insert_relationship(Relationship::new(id, subject, predicate, object))
    }

    /// Inserts a fully formed relationship with endpoint and triple checks.
    pub fn insert_relationship(&mut self, rel: Relationship) -> Result<String, ModelError> {
        if rel.id.is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        if self.contains_id(&rel.id) {
            return Err(ModelError::DuplicateIdentifier(rel.id));
        }
        for endpoint in [&rel.subject, &rel.object] {
            if !self.contains_id(endpoint) {
                return Err(ModelError::UnknownEndpoint(endpoint.clone()));
            }
        }
        if let Some(arg) = &rel.confidence_argument {
            if !self.contains_id(arg) {
                return Err(ModelError::UnknownEndpoint(arg.clone()));
            }
        }
        if let Some(m) = &rel.multiplicity {
            m.validate()?;
        }
        if self.relationships.iter().any(|r| {
            r.subject == rel.subject && r.predicate == rel.predicate && r.object == rel.object
        }) {
            return Err(ModelError::DuplicateTriple(
                rel.subject,
                rel.predicate,
                rel.object,
            ));
        }
        let id = rel.id.clone();
        self.relationships.push(rel);
        Ok(id)
    }

    /// Direct members of a container: its member list plus `contains` edges.
    pub fn members_of(&self, container: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .container(container)
            .map(|c| c.members.iter().map(String::as_str).collect())
            .unwrap_or_default();
        out.extend(
            self.relationships
                .iter()
                .filter(|r| r.predicate == Predicate::Contains && r.subject == container)
                .map(|r| r.object.as_str()),
        );
        out
    }

    /// Transitive members of a container, excluding the container itself.
    pub fn members_closure(&self, container: &str) -> HashSet<String> {
        let mut seen = HashSet::new();
        let mut stack = vec![container.to_string()];
        while let Some(c) = stack.pop() {
            for m in self.members_of(&c) {
                if m != container && seen.insert(m.to_string()) {
                    stack.push(m.to_string());
                }
            }
        }
        seen
    }

    /// Minimum-membership warnings: an Argument needs a Goal and an
    /// ArtefactReference, an AssuranceCase needs an Argument and an Artefact.
    /// Membership is transitive through nested containers.
    pub fn completeness_check(&self) -> Vec<CompletenessWarning> {
        let mut out = Vec::new();
        for c in self.all_containers() {
            let needs: &[Requirement] = match c.kind {
                ContainerKind::Argument => &[
                    ("a Goal", |k| k == RecordKind::Element(ElementKind::Goal)),
                    ("an ArtefactReference", |k| {
                        matches!(k, RecordKind::Element(e) if e.is_artefact_reference())
                    }),
                ],
                ContainerKind::AssuranceCase => &[
                    ("an Argument", |k| {
                        k == RecordKind::Container(ContainerKind::Argument)
                    }),
                    ("an Artefact", |k| {
                        k == RecordKind::Container(ContainerKind::Artefact)
                    }),
                ],
                _ => continue,
            };
            let kinds: Vec<RecordKind> = self
                .members_closure(&c.id)
                .iter()
                .filter_map(|m| self.record_kind(m))
                .collect();
            let missing: Vec<String> = needs
                .iter()
                .filter(|(_, pred)| !kinds.iter().any(|&k| pred(k)))
                .map(|(what, _)| format!("lacks {what}"))
                .collect();
            if !missing.is_empty() {
                out.push(CompletenessWarning {
                    container: c.id.clone(),
                    message: format!("{} {}", c.id, missing.join("; ")),
                });
            }
        }
        out
    }

    /// Sorts records and container members by identifier.
    pub fn canonicalize(&mut self) {
        self.elements.sort_by(|a, b| a.id.cmp(&b.id));
        self.relationships.sort_by(|a, b| a.id.cmp(&b.id));
        self.containers.sort_by(|a, b| a.id.cmp(&b.id));
        self.root.members.sort();
        for c in &mut self.containers {
            c.members.sort();
        }
    }

    pub fn canonical(&self) -> Case {
        let mut c = self.clone();
        c.canonicalize();
        c
    }

    /// Identifiers used by more than one record.
    pub fn duplicate_ids(&self) -> Vec<String> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for id in self.all_ids() {
            *counts.entry(id).or_default() += 1;
        }
        let mut dups: Vec<String> = counts
            .into_iter()
            .filter(|&(_, n)| n > 1)
            .map(|(id, _)| id.to_string())
            .collect();
        dups.sort();
        dups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_element_stores_goal() {
        let mut case = Case::new("C", "rocket");
        let id = case
            .add_element(ElementKind::Goal, "G1", "Launch system is acceptably safe", None)
            .unwrap();
        assert_eq!(id, "G1");
        let g = case.element("G1").unwrap();
        assert_eq!(g.flags, FlagSet::default());
        assert!(!g.flags.undeveloped);
    }

    #[test]
    fn empty_statement_rejected() {
        let mut case = Case::new("C", "c");
        assert_eq!(
            case.add_element(ElementKind::Goal, "G1", "", None),
            Err(ModelError::EmptyStatement("G1".into()))
        );
    }

    #[test]
    fn duplicate_element_rejected() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "a", None).unwrap();
        assert_eq!(
            case.add_element(ElementKind::Goal, "G1", "b", None),
            Err(ModelError::DuplicateIdentifier("G1".into()))
        );
    }

    #[test]
    fn add_edge_reifies_and_rejects_duplicates() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "g", None).unwrap();
        case.add_element(ElementKind::Strategy, "S1", "s", None).unwrap();
        case.add_element(ElementKind::Goal, "D1", "d", None).unwrap();
        let r1 = case.add_edge("supportedBy", "G1", "S1").unwrap();
        let r = case.relationship(&r1).unwrap();
        assert_eq!((r.subject.as_str(), r.object.as_str()), ("G1", "S1"));

        let r2 = case.add_edge("challenges", "D1", &r1).unwrap();
        assert_eq!(case.relationship(&r2).unwrap().object, r1);

        assert!(matches!(
            case.add_edge("supportedBy", "G1", "S1"),
            Err(ModelError::DuplicateTriple(..))
        ));
        assert_eq!(
            case.add_edge("supportedBy", "G1", "nowhere"),
            Err(ModelError::UnknownEndpoint("nowhere".into()))
        );
        assert_eq!(
            case.add_edge("refutes", "G1", "S1"),
            Err(ModelError::UnknownPredicate("refutes".into()))
        );
        assert_eq!(case.relationships.len(), 2);
    }

    #[test]
    fn defeated_implies_in_doubt() {
        let mut f = FlagSet::default();
        f.set_defeated(true);
        assert!(f.in_doubt());
        assert_eq!(f.get(Flag::InDoubt), Tri::True);
        f.set_in_doubt(false);
        assert!(!f.defeated());
    }

    #[test]
    fn completeness_empty_argument() {
        let mut case = Case::new("C", "c");
        case.add_container(Container::new("A1", ContainerKind::Argument, "arg"))
            .unwrap();
        let warnings = case.completeness_check();
        let a1 = warnings.iter().find(|w| w.container == "A1").unwrap();
        assert_eq!(a1.message, "A1 lacks a Goal; lacks an ArtefactReference");
    }

    #[test]
    fn completeness_goal_and_solution_is_enough() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "g", None).unwrap();
        case.add_element(ElementKind::Solution, "Sn1", "s", None).unwrap();
        case.add_container(
            Container::new("A1", ContainerKind::Argument, "arg").with_members(["G1", "Sn1"]),
        )
        .unwrap();
        assert!(case.completeness_check().iter().all(|w| w.container != "A1"));
    }

    #[test]
    fn completeness_case_without_artefact() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "g", None).unwrap();
        case.add_element(ElementKind::Solution, "Sn1", "s", None).unwrap();
        case.add_container(
            Container::new("A1", ContainerKind::Argument, "arg").with_members(["G1", "Sn1"]),
        )
        .unwrap();
        case.root.members.push("A1".into());
        let warnings = case.completeness_check();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].container, "C");
        assert!(warnings[0].message.contains("lacks an Artefact"));
    }

    #[test]
    fn multiplicity_bounds() {
        assert!(Multiplicity::optional().validate().is_ok());
        assert!(Multiplicity::multiple(3, Some(1)).validate().is_err());
        let c = Multiplicity::choice("g", 1, Some(1));
        assert!(c.admits(1) && !c.admits(0) && !c.admits(2));
        assert!(Multiplicity::multiple(1, None).admits(40));
    }
}
