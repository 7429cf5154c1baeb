//! Rule inference over a case.
//!
//! [`run_fixpoint`] evaluates the rule catalogue stratum by stratum with
//! graph algorithms. [`naive_oracle`] evaluates the same catalogue by blind
//! repeated rule application and exists as a testing reference.
//!
//! Strata, in order:
//!
//! 1. structural: R1 duplicate triples, R2 top-level goals, R3 typing,
//!    R4 support cycles, R11 identifier uniqueness and away references;
//! 2. validity: R5 invalid contexts, R6 conflicting contexts;
//! 3. support: R7 truth, R8 undeveloped;
//! 4. patterns: R12;
//! 5. doubt: R13 confidence, R9 challenges, R10 upward propagation, as one
//!    monotone closure;
//! 6. defeat: R9 with a settled defeater;
//! 7. truth readout: doubt and blocked support revoke derived truth.

mod oracle;
mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Case, Flag, FlagSet, Severity, Tri};

pub use oracle::{naive_oracle, naive_oracle_shuffled, OracleError, ORACLE_RECORD_LIMIT};

/// Rule identifiers of the catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
    R11,
    R12,
    R13,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleGroup {
    Structural,
    Information,
    Dialectic,
}

impl RuleId {
    pub const ALL: [RuleId; 13] = [
        RuleId::R1,
        RuleId::R2,
        RuleId::R3,
        RuleId::R4,
        RuleId::R5,
        RuleId::R6,
        RuleId::R7,
        RuleId::R8,
        RuleId::R9,
        RuleId::R10,
        RuleId::R11,
        RuleId::R12,
        RuleId::R13,
    ];

    pub fn group(self) -> RuleGroup {
        use RuleId::*;
        match self {
            R1 | R2 | R3 | R4 | R6 => RuleGroup::Structural,
            R5 | R7 | R8 | R11 | R12 => RuleGroup::Information,
            R9 | R10 | R13 => RuleGroup::Dialectic,
        }
    }

    /// Zero-based stratum index.
    pub fn stratum(self) -> usize {
        use RuleId::*;
        match self {
            R1 | R2 | R3 | R4 | R11 => 0,
            R5 | R6 => 1,
            R7 | R8 => 2,
            R12 => 3,
            R13 => 4,
            R9 | R10 => 5,
        }
    }

    pub fn description(self) -> &'static str {
        use RuleId::*;
        match self {
            R1 => "one relationship per asserted triple",
            R2 => "goals without incoming support are top-level",
            R3 => "edges must satisfy the typing table",
            R4 => "support edges on a cycle are invalid",
            R5 => "invalid context or assumption invalidates the element and its support descendants",
            R6 => "conflicting contexts within one support closure invalidate their attachments",
            R7 => "truth from valid artefacts and fully true support",
            R8 => "goals and strategies without valid support are undeveloped",
            R9 => "challenged elements are in doubt, or defeated by a true defeater",
            R10 => "doubt propagates to support ancestors and revokes truth",
            R11 => "identifier uniqueness and away-reference resolution",
            R12 => "pattern instances meet their multiplicities",
            R13 => "a failing confidence argument puts its relationship in doubt",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Evaluation options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceConfig {
    pub enabled: BTreeSet<RuleId>,
    /// Derivation-step cap; defaults to ten times the record count.
    pub iteration_cap: Option<usize>,
    /// Error-severity diagnostics fail the run.
    pub strict: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            enabled: RuleId::ALL.into_iter().collect(),
            iteration_cap: None,
            strict: false,
        }
    }
}

impl InferenceConfig {
    pub fn is_enabled(&self, rule: RuleId) -> bool {
        self.enabled.contains(&rule)
    }
}

/// Flag state of a relationship.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RelFlags {
    pub valid: Tri,
    pub in_doubt: bool,
}

/// Final flags of every record, keyed by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlagAssignment {
    pub elements: BTreeMap<String, FlagSet>,
    pub relationships: BTreeMap<String, RelFlags>,
    pub containers: BTreeMap<String, FlagSet>,
}

impl FlagAssignment {
    /// Reads one flag of any record.
    pub fn get(&self, record: &str, flag: Flag) -> Option<Tri> {
        if let Some(f) = self.elements.get(record) {
            return Some(f.get(flag));
        }
        if let Some(f) = self.containers.get(record) {
            return Some(f.get(flag));
        }
        self.relationships.get(record).map(|r| match flag {
            Flag::Valid => r.valid,
            Flag::InDoubt => r.in_doubt.into(),
            _ => Tri::Unset,
        })
    }

    /// Flags as found in the case, before any rule runs.
    pub fn asserted(case: &Case) -> Self {
        let mut out = FlagAssignment::default();
        for e in &case.elements {
            out.elements.entry(e.id.clone()).or_insert(e.flags);
        }
        for c in case.all_containers() {
            out.containers.entry(c.id.clone()).or_insert(c.flags);
        }
        for r in &case.relationships {
            out.relationships.entry(r.id.clone()).or_insert(RelFlags {
                valid: r.valid,
                in_doubt: r.in_doubt,
            });
        }
        out
    }

    /// Per-flag differences from `self` to `other`, sorted by record then flag.
    pub fn diff(&self, other: &FlagAssignment) -> Vec<(String, Flag, Tri, Tri)> {
        let mut out = Vec::new();
        let mut push = |id: &str, a: Option<&FlagSet>, b: Option<&FlagSet>| {
            for &flag in Flag::ALL {
                let old = a.map(|f| f.get(flag)).unwrap_or_default();
                let new = b.map(|f| f.get(flag)).unwrap_or_default();
                if old != new {
                    out.push((id.to_string(), flag, old, new));
                }
            }
        };
        let ids: BTreeSet<&String> = self.elements.keys().chain(other.elements.keys()).collect();
        for id in ids {
            push(id, self.elements.get(id), other.elements.get(id));
        }
        let ids: BTreeSet<&String> =
            self.containers.keys().chain(other.containers.keys()).collect();
        for id in ids {
            push(id, self.containers.get(id), other.containers.get(id));
        }
        let ids: BTreeSet<&String> = self
            .relationships
            .keys()
            .chain(other.relationships.keys())
            .collect();
        for id in ids {
            let a = self.relationships.get(id).copied().unwrap_or_default();
            let b = other.relationships.get(id).copied().unwrap_or_default();
            if a.valid != b.valid {
                out.push((id.to_string(), Flag::Valid, a.valid, b.valid));
            }
            if a.in_doubt != b.in_doubt {
                out.push((id.to_string(), Flag::InDoubt, a.in_doubt.into(), b.in_doubt.into()));
            }
        }
        out.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        out
    }
}

/// One derived flag change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagDelta {
    pub record: String,
    pub flag: Flag,
    pub old: Tri,
    pub new: Tri,
    pub rule: RuleId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub rule: RuleId,
    pub subjects: Vec<String>,
    pub message: String,
}

impl Serialize for Severity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "warning" => Ok(Severity::Warning),
            "error" => Ok(Severity::Error),
            other => Err(serde::de::Error::custom(format!("unknown severity `{other}`"))),
        }
    }
}

/// A fact a derivation rests on: a record, or one flag of a record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Premise {
    pub record: String,
    pub flag: Option<Flag>,
}

impl Premise {
    pub fn record(id: impl Into<String>) -> Self {
        Premise {
            record: id.into(),
            flag: None,
        }
    }

    pub fn flag(id: impl Into<String>, flag: Flag) -> Self {
        Premise {
            record: id.into(),
            flag: Some(flag),
        }
    }
}

impl fmt::Display for Premise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.flag {
            Some(flag) => write!(f, "{}.{}", self.record, flag),
            None => f.write_str(&self.record),
        }
    }
}

impl Serialize for Premise {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Premise {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Ok(match text.rsplit_once('.') {
            Some((id, flag)) => match flag.parse::<Flag>() {
                Ok(flag) => Premise::flag(id, flag),
                Err(_) => Premise::record(text),
            },
            None => Premise::record(text),
        })
    }
}

/// How one derived flag came about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub record: String,
    pub flag: Flag,
    pub rule: RuleId,
    pub premises: Vec<Premise>,
}

/// Result of [`run_fixpoint`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub deltas: Vec<FlagDelta>,
    pub invalidated: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
    pub overlays: BTreeMap<String, Vec<String>>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub assignment: FlagAssignment,
    /// Sorted by record, then flag.
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("no fixpoint within {cap} derivation steps")]
    NonTermination { cap: usize },
    #[error("{} error diagnostic(s) in strict mode", .0.len())]
    Strict(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplainError {
    #[error("{record}.{flag} was not derived")]
    NotDerived { record: String, flag: Flag },
}

impl InferenceResult {
    pub fn trace(&self, record: &str, flag: Flag) -> Option<&Trace> {
        self.traces
            .binary_search_by(|t| (t.record.as_str(), t.flag).cmp(&(record, flag)))
            .ok()
            .map(|i| &self.traces[i])
    }

    /// Derivation steps leading to `record.flag`, premises before
    /// conclusions.
    pub fn explain(&self, record: &str, flag: Flag) -> Result<Vec<Trace>, ExplainError> {
        let root = self.trace(record, flag).ok_or_else(|| ExplainError::NotDerived {
            record: record.to_string(),
            flag,
        })?;
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        self.collect(root, &mut seen, &mut out);
        Ok(out)
    }

    fn collect(&self, t: &Trace, seen: &mut BTreeSet<(String, Flag)>, out: &mut Vec<Trace>) {
        if !seen.insert((t.record.clone(), t.flag)) {
            return;
        }
        for p in &t.premises {
            if let Some(flag) = p.flag {
                if let Some(sub) = self.trace(&p.record, flag) {
                    self.collect(sub, seen, out);
                }
            }
        }
        out.push(t.clone());
    }

    /// The case with every record's flags replaced by the derived ones.
    pub fn apply(&self, case: &Case) -> Case {
        let mut out = case.clone();
        let a = &self.assignment;
        for e in &mut out.elements {
            if let Some(f) = a.elements.get(&e.id) {
                e.flags = *f;
            }
        }
        for c in std::iter::once(&mut out.root).chain(out.containers.iter_mut()) {
            if let Some(f) = a.containers.get(&c.id) {
                c.flags = *f;
            }
        }
        for r in &mut out.relationships {
            if let Some(f) = a.relationships.get(&r.id) {
                r.valid = f.valid;
                r.in_doubt = f.in_doubt;
            }
        }
        out
    }
}

/// Evaluates all enabled rules to a fixpoint.
pub fn run_fixpoint(case: &Case, config: &InferenceConfig) -> Result<InferenceResult, InferenceError> {
    let result = rules::evaluate(case, config)?;
    if config.strict {
        let errors: Vec<Diagnostic> = result
            .diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .cloned()
            .collect();
        if !errors.is_empty() {
            return Err(InferenceError::Strict(errors));
        }
    }
    Ok(result)
}

/// Returns true when `text` still contains a `{placeholder}` token.
pub(crate) fn has_placeholder(text: &str) -> bool {
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        match tail.find(['{', '}']) {
            Some(i) if tail.as_bytes()[i] == b'}' && i > 0 => return true,
            Some(i) => rest = &tail[i..],
            None => return false,
        }
    }
    false
}

#[cfg(test)]
mod tests;
