//! Reading and writing assurance cases.
//!
//! Two formats are supported: the native `.gsn.json` document, which is the
//! authoring and persistence format, and a Turtle subset bound to the GSN
//! vocabulary namespace for interchange.

mod native;
mod turtle;

use std::collections::HashSet;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::model::{Case, ContainerKind};

pub use native::{
    container_from_json, container_to_json, delta_from_json, delta_to_json, element_from_json,
    element_to_json, parse_native, relationship_from_json, relationship_to_json, serialize_native,
};
pub use turtle::{parse_interchange, serialize_interchange};

pub const FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseIoError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("dangling reference `{0}`")]
    DanglingReference(String),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown predicate IRI `{0}`")]
    UnknownPredicateIri(String),
    #[error("bad literal for `{property}`: {literal}")]
    BadLiteralType { property: String, literal: String },
    #[error("unsupported format version `{0}`")]
    UnsupportedVersion(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

/// A parsed document: a format version and the case it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseDocument {
    pub format_version: String,
    pub case: Case,
}

impl CaseDocument {
    pub fn new(case: Case) -> Self {
        CaseDocument {
            format_version: FORMAT_VERSION.to_string(),
            case,
        }
    }

    /// Record equality: equal after canonical ordering.
    pub fn record_eq(&self, other: &CaseDocument) -> bool {
        self.format_version == other.format_version && self.case.canonical() == other.case.canonical()
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

/// Checks that every reference inside the case resolves.
pub(crate) fn resolve_references(case: &Case) -> Result<(), CaseIoError> {
    if case.root.kind != ContainerKind::AssuranceCase {
        return Err(CaseIoError::InvalidValue(format!(
            "root `{}` must be an AssuranceCase",
            case.root.id
        )));
    }
    let ids: HashSet<&str> = case.all_ids().collect();
    let check = |id: &str| {
        if ids.contains(id) {
            Ok(())
        } else {
            Err(CaseIoError::DanglingReference(id.to_string()))
        }
    };
    for r in &case.relationships {
        check(&r.subject)?;
        check(&r.object)?;
        if let Some(a) = &r.confidence_argument {
            check(a)?;
        }
        if r.acp.is_some() != r.confidence_argument.is_some() {
            return Err(CaseIoError::InvalidValue(format!(
                "relationship `{}` needs both acp and confidence_argument or neither",
                r.id
            )));
        }
        if let Some(m) = &r.multiplicity {
            m.validate()
                .map_err(|e| CaseIoError::InvalidValue(format!("{}: {e}", r.id)))?;
        }
    }
    for c in case.all_containers() {
        for m in &c.members {
            check(m)?;
        }
        if let Some(d) = &c.instantiation_data {
            check(d)?;
        }
        if c.view_type.is_some() != (c.kind == ContainerKind::View) {
            return Err(CaseIoError::InvalidValue(format!(
                "container `{}`: view_type is set exactly on View containers",
                c.id
            )));
        }
    }
    for e in &case.elements {
        if e.statement.trim().is_empty() {
            return Err(CaseIoError::InvalidValue(format!(
                "element `{}` has an empty statement",
                e.id
            )));
        }
        if let Some(m) = &e.module {
            check(m)?;
        }
    }
    Ok(())
}
