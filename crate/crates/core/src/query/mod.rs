//! Selector language over snapshots and the competency-query catalogue.
//!
//! A selector denotes a set of record ids. Terms filter the universe of
//! elements and containers; traversals map a set along one predicate.
//! Results are always ordered by id.

mod cq;
mod parse;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use chrono::{DateTime, Utc};

pub use cq::{registry, run_cq, NamedQuery, Param, ParamKind, QueryError, Row};
pub use parse::{parse_selector, SyntaxError};

use crate::caseio::format_timestamp;
use crate::model::{ContainerKind, ElementKind, Flag, Predicate, RecordKind};
use crate::store::Snapshot;

/// Kind names accepted by `kind:`. `Defeater` is a role, not a stored kind:
/// any element that is the subject of a `challenges` relationship.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindName {
    Element(ElementKind),
    Container(ContainerKind),
    Defeater,
}

impl KindName {
    pub fn parse(name: &str) -> Option<Self> {
        if name == "Defeater" {
            return Some(KindName::Defeater);
        }
        name.parse()
            .map(KindName::Element)
            .or_else(|_| name.parse().map(KindName::Container))
            .ok()
    }
}

impl fmt::Display for KindName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KindName::Element(k) => write!(f, "{k}"),
            KindName::Container(k) => write!(f, "{k}"),
            KindName::Defeater => f.write_str("Defeater"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Subject to object.
    Out,
    /// Object to subject.
    In,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    /// Every element and container.
    All,
    ByKind(KindName),
    /// Case-insensitive substring of the statement (elements) or name
    /// (containers).
    StatementContains(String),
    PublishedBefore(DateTime<Utc>),
    /// Records whose flag reads true.
    HasFlag(Flag),
    InContainer {
        container: String,
        transitive: bool,
    },
    /// Members of the container's closure that contain nothing themselves.
    LeafOf(String),
    Not(Box<Selector>),
    And(Box<Selector>, Box<Selector>),
    Or(Box<Selector>, Box<Selector>),
    Traverse {
        from: Box<Selector>,
        predicate: Predicate,
        direction: Direction,
        transitive: bool,
    },
}

impl Selector {
    pub fn and(a: Selector, b: Selector) -> Selector {
        Selector::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Selector, b: Selector) -> Selector {
        Selector::Or(Box::new(a), Box::new(b))
    }

    pub fn negate(a: Selector) -> Selector {
        Selector::Not(Box::new(a))
    }

    pub fn traverse(from: Selector, predicate: Predicate, direction: Direction, transitive: bool) -> Selector {
        Selector::Traverse {
            from: Box::new(from),
            predicate,
            direction,
            transitive,
        }
    }

    /// True if evaluation reads flags, so callers know derived flags matter.
    pub fn reads_flags(&self) -> bool {
        match self {
            Selector::HasFlag(_) => true,
            Selector::Not(a) => a.reads_flags(),
            Selector::And(a, b) | Selector::Or(a, b) => a.reads_flags() || b.reads_flags(),
            Selector::Traverse { from, .. } => from.reads_flags(),
            _ => false,
        }
    }

    fn is_compound(&self) -> bool {
        matches!(
            self,
            Selector::And(..) | Selector::Or(..) | Selector::Traverse { .. }
        )
    }
}

fn simple_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn write_quoted(f: &mut fmt::Formatter<'_>, text: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in text.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

fn write_id(f: &mut fmt::Formatter<'_>, id: &str) -> fmt::Result {
    if simple_id(id) {
        f.write_str(id)
    } else {
        write_quoted(f, id)
    }
}

struct AsTerm<'a>(&'a Selector);

impl fmt::Display for AsTerm<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_compound() {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::All => f.write_str("*"),
            Selector::ByKind(k) => write!(f, "kind:{k}"),
            Selector::StatementContains(t) => {
                f.write_str("statement~")?;
                write_quoted(f, t)
            }
            Selector::PublishedBefore(ts) => write!(f, "published<{}", format_timestamp(ts)),
            Selector::HasFlag(flag) => write!(f, "flag:{flag}"),
            Selector::InContainer {
                container,
                transitive,
            } => {
                f.write_str("in:")?;
                write_id(f, container)?;
                if *transitive {
                    f.write_str("+")?;
                }
                Ok(())
            }
            Selector::LeafOf(c) => {
                f.write_str("leaf:")?;
                write_id(f, c)
            }
            Selector::Not(a) => write!(f, "!{}", AsTerm(a)),
            Selector::And(a, b) => write!(f, "{a} & {}", AsTerm(b)),
            Selector::Or(a, b) => write!(f, "{a} | {}", AsTerm(b)),
            Selector::Traverse {
                from,
                predicate,
                direction,
                transitive,
            } => {
                let arrow = match direction {
                    Direction::Out => "->",
                    Direction::In => "<-",
                };
                let plus = if *transitive { "+" } else { "" };
                write!(f, "{from}/{predicate}{arrow}{plus}")
            }
        }
    }
}

fn universe(snap: &Snapshot) -> BTreeSet<String> {
    let case = snap.case();
    case.elements
        .iter()
        .map(|e| e.id.clone())
        .chain(case.all_containers().map(|c| c.id.clone()))
        .collect()
}

fn neighbours(snap: &Snapshot, id: &str, predicate: Predicate, direction: Direction) -> Vec<String> {
    let mut out: Vec<String> = match direction {
        Direction::Out => snap
            .match_pattern(Some(id), Some(predicate), None)
            .into_iter()
            .map(|r| r.object.clone())
            .collect(),
        Direction::In => snap
            .match_pattern(None, Some(predicate), Some(id))
            .into_iter()
            .map(|r| r.subject.clone())
            .collect(),
    };
    if predicate == Predicate::Contains {
        let case = snap.case();
        match direction {
            Direction::Out => {
                if let Some(c) = case.container(id) {
                    out.extend(c.members.iter().cloned());
                }
            }
            Direction::In => out.extend(
                case.all_containers()
                    .filter(|c| c.members.iter().any(|m| m == id))
                    .map(|c| c.id.clone()),
            ),
        }
    }
    out
}

fn traverse(
    snap: &Snapshot,
    start: &BTreeSet<String>,
    predicate: Predicate,
    direction: Direction,
    transitive: bool,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut queue: VecDeque<String> = start.iter().cloned().collect();
    while let Some(id) = queue.pop_front() {
        for n in neighbours(snap, &id, predicate, direction) {
            if out.insert(n.clone()) && transitive {
                queue.push_back(n);
            }
        }
    }
    out
}

fn eval_set(snap: &Snapshot, sel: &Selector) -> BTreeSet<String> {
    let case = snap.case();
    match sel {
        Selector::All => universe(snap),
        Selector::ByKind(KindName::Element(k)) => snap
            .ids_of_kind(RecordKind::Element(*k))
            .iter()
            .cloned()
            .collect(),
        Selector::ByKind(KindName::Container(k)) => snap
            .ids_of_kind(RecordKind::Container(*k))
            .iter()
            .cloned()
            .collect(),
        Selector::ByKind(KindName::Defeater) => snap
            .match_pattern(None, Some(Predicate::Challenges), None)
            .into_iter()
            .filter(|r| case.element(&r.subject).is_some())
            .map(|r| r.subject.clone())
            .collect(),
        Selector::StatementContains(text) => {
            let needle = text.to_lowercase();
            universe(snap)
                .into_iter()
                .filter(|id| snap.folded_text(id).is_some_and(|t| t.contains(&needle)))
                .collect()
        }
        Selector::PublishedBefore(ts) => case
            .elements
            .iter()
            .filter(|e| e.published.is_some_and(|p| p < *ts))
            .map(|e| e.id.clone())
            .collect(),
        Selector::HasFlag(flag) => {
            let mut out: BTreeSet<String> = case
                .elements
                .iter()
                .filter(|e| e.flags.get(*flag).is_true())
                .map(|e| e.id.clone())
                .collect();
            out.extend(
                case.all_containers()
                    .filter(|c| c.flags.get(*flag).is_true())
                    .map(|c| c.id.clone()),
            );
            out
        }
        Selector::InContainer {
            container,
            transitive,
        } => {
            let start = BTreeSet::from([container.clone()]);
            traverse(snap, &start, Predicate::Contains, Direction::Out, *transitive)
        }
        Selector::LeafOf(container) => {
            let start = BTreeSet::from([container.clone()]);
            traverse(snap, &start, Predicate::Contains, Direction::Out, true)
                .into_iter()
                .filter(|m| neighbours(snap, m, Predicate::Contains, Direction::Out).is_empty())
                .collect()
        }
        Selector::Not(a) => {
            let inner = eval_set(snap, a);
            universe(snap).difference(&inner).cloned().collect()
        }
        Selector::And(a, b) => {
            let left = eval_set(snap, a);
            let right = eval_set(snap, b);
            left.intersection(&right).cloned().collect()
        }
        Selector::Or(a, b) => {
            let mut left = eval_set(snap, a);
            left.extend(eval_set(snap, b));
            left
        }
        Selector::Traverse {
            from,
            predicate,
            direction,
            transitive,
        } => traverse(snap, &eval_set(snap, from), *predicate, *direction, *transitive),
    }
}

/// Ids selected by `sel`, ordered by id. Read-only.
pub fn eval_selector(snap: &Snapshot, sel: &Selector) -> Vec<String> {
    eval_set(snap, sel).into_iter().collect()
}
