//! Named competency queries, loaded from the `queries/*.sel` files.
//!
//! A query file is a selector body preceded by `#` header lines:
//!
//! ```text
//! # AE-01 Title text
//! # param literal text = Jailbreak
//! # param cutoff timestamp = now-180d
//! # post confidence-attached
//! ```
//!
//! `$name` in the body is replaced by the parameter value, quoted for text
//! parameters and verbatim for timestamps.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{eval_selector, parse_selector, Selector, SyntaxError};
use crate::caseio::{format_timestamp, parse_timestamp};
use crate::inference::{run_fixpoint, InferenceConfig, InferenceError};
use crate::model::{ElementKind, Predicate};
use crate::store::Snapshot;

const SOURCES: [&str; 10] = [
    include_str!("../../queries/AE-01.sel"),
    include_str!("../../queries/AE-02.sel"),
    include_str!("../../queries/AE-03.sel"),
    include_str!("../../queries/AE-04.sel"),
    include_str!("../../queries/AE-05.sel"),
    include_str!("../../queries/DE-01.sel"),
    include_str!("../../queries/DE-05.sel"),
    include_str!("../../queries/AU-02.sel"),
    include_str!("../../queries/AU-03.sel"),
    include_str!("../../queries/AU-05.sel"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Text,
    Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub default: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Post {
    /// Maps selected confidence arguments to the Solutions at either end of
    /// relationships that carry them.
    ConfidenceAttached,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedQuery {
    pub id: String,
    pub title: String,
    pub params: Vec<Param>,
    pub body: String,
    pub post: Option<Post>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("query {query} needs parameter `{param}`")]
    MissingParameter { query: String, param: String },
    #[error("parameter `{param}`: {message}")]
    BadParameter { param: String, message: String },
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

fn parse_source(src: &str) -> NamedQuery {
    let mut lines = src.lines();
    let header = lines.next().and_then(|l| l.strip_prefix("# ")).expect("query header");
    let (id, title) = header.split_once(' ').expect("query id and title");
    let mut params = Vec::new();
    let mut post = None;
    let mut body = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("# param ") {
            let (decl, default) = match rest.split_once(" = ") {
                Some((d, v)) => (d, Some(v.to_string())),
                None => (rest, None),
            };
            let (name, kind) = decl.split_once(' ').expect("param name and kind");
            let kind = match kind {
                "text" => ParamKind::Text,
                "timestamp" => ParamKind::Timestamp,
                other => panic!("bad param kind {other}"),
            };
            params.push(Param {
                name: name.to_string(),
                kind,
                default,
            });
        } else if line.trim() == "# post confidence-attached" {
            post = Some(Post::ConfidenceAttached);
        } else {
            body.push(line.trim());
        }
    }
    NamedQuery {
        id: id.to_string(),
        title: title.to_string(),
        params,
        body: body.join(" "),
        post,
    }
}

/// All named queries, in catalogue order.
pub fn registry() -> &'static [NamedQuery] {
    static REGISTRY: OnceLock<Vec<NamedQuery>> = OnceLock::new();
    REGISTRY.get_or_init(|| SOURCES.iter().map(|s| parse_source(s)).collect())
}

fn quote(text: &str) -> String {
    format!("\"{}\"", text.replace('\\', "\\\\").replace('"', "\\\""))
}

impl NamedQuery {
    /// Resolved parameter values, defaults applied.
    fn bind(&self, given: &BTreeMap<String, String>) -> Result<BTreeMap<String, String>, QueryError> {
        let mut out = BTreeMap::new();
        for p in &self.params {
            let value = match (given.get(&p.name), &p.default) {
                (Some(v), _) => Some(v.clone()),
                (None, Some(d)) => self.derive_default(d, given)?,
                (None, None) => None,
            };
            if let Some(v) = value {
                out.insert(p.name.clone(), v);
            }
        }
        Ok(out)
    }

    /// `now-Nd` defaults are computed from the `now` parameter; any other
    /// default is a literal.
    fn derive_default(&self, default: &str, given: &BTreeMap<String, String>) -> Result<Option<String>, QueryError> {
        let Some(days) = default
            .strip_prefix("now-")
            .and_then(|d| d.strip_suffix('d'))
            .and_then(|d| d.parse::<i64>().ok())
        else {
            return Ok(Some(default.to_string()));
        };
        let Some(now) = given.get("now") else {
            return Ok(None);
        };
        let now = parse_timestamp(now).ok_or_else(|| QueryError::BadParameter {
            param: "now".into(),
            message: format!("`{now}` is not a timestamp"),
        })?;
        Ok(Some(format_timestamp(&(now - Duration::days(days)))))
    }

    /// The selector with parameters substituted.
    pub fn selector(&self, given: &BTreeMap<String, String>) -> Result<Selector, QueryError> {
        let values = self.bind(given)?;
        let mut params: Vec<&Param> = self.params.iter().collect();
        params.sort_by_key(|p| std::cmp::Reverse(p.name.len()));
        let mut text = self.body.clone();
        for p in params {
            let token = format!("${}", p.name);
            if !text.contains(&token) {
                continue;
            }
            let Some(v) = values.get(&p.name) else {
                return Err(QueryError::MissingParameter {
                    query: self.id.clone(),
                    param: p.name.clone(),
                });
            };
            let replacement = match p.kind {
                ParamKind::Text => quote(v),
                ParamKind::Timestamp => {
                    let ts = parse_timestamp(v).ok_or_else(|| QueryError::BadParameter {
                        param: p.name.clone(),
                        message: format!("`{v}` is not a timestamp"),
                    })?;
                    format_timestamp(&ts)
                }
            };
            text = text.replace(&token, &replacement);
        }
        Ok(parse_selector(&text)?)
    }
}

fn row(snap: &Snapshot, id: &str) -> Row {
    let case = snap.case();
    let statement = if let Some(e) = case.element(id) {
        e.statement.clone()
    } else if let Some(c) = case.container(id) {
        c.name.clone()
    } else if let Some(r) = case.relationship(id) {
        format!("{} {} {}", r.subject, r.predicate, r.object)
    } else {
        String::new()
    };
    Row {
        id: id.to_string(),
        statement,
    }
}

fn confidence_attached(snap: &Snapshot, arguments: &[String]) -> Vec<String> {
    let case = snap.case();
    let args: BTreeSet<&str> = arguments.iter().map(String::as_str).collect();
    let mut carriers: BTreeSet<&str> = case
        .relationships
        .iter()
        .filter(|r| r.confidence_argument.as_deref().is_some_and(|a| args.contains(a)))
        .map(|r| r.id.as_str())
        .collect();
    for a in &args {
        for r in snap.match_pattern(None, Some(Predicate::AssociatedWith), Some(a)) {
            carriers.insert(r.subject.as_str());
        }
    }
    let mut out = BTreeSet::new();
    for id in carriers {
        if let Some(r) = case.relationship(id) {
            for end in [&r.subject, &r.object] {
                if case.element(end).is_some_and(|e| e.kind == ElementKind::Solution) {
                    out.insert(end.clone());
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Runs a named query. Queries that read flags see the derived flags of a
/// fresh inference run; the snapshot itself is not touched.
pub fn run_cq(snap: &Snapshot, id: &str, params: &BTreeMap<String, String>) -> Result<Vec<Row>, QueryError> {
    let q = registry()
        .iter()
        .find(|q| q.id == id)
        .ok_or_else(|| QueryError::UnknownQuery(id.to_string()))?;
    let sel = q.selector(params)?;
    let derived;
    let view = if sel.reads_flags() {
        let result = run_fixpoint(snap.case(), &InferenceConfig::default())?;
        derived = Snapshot::new(result.apply(snap.case()), snap.version());
        &derived
    } else {
        snap
    };
    let mut ids = eval_selector(view, &sel);
    if q.post == Some(Post::ConfidenceAttached) {
        ids = confidence_attached(view, &ids);
    }
    Ok(ids.iter().map(|i| row(view, i)).collect())
}
