//! Automation over a store: commit and tick hooks, template instantiation,
//! sandboxed what-if runs, validity propagation from artefacts, and
//! scenario switches.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::inference::{run_fixpoint, InferenceConfig, InferenceError};
use crate::model::{
    Case, Container, ContainerKind, Element, ElementKind, Flag, Predicate, Relationship, Tri,
};
use crate::query::{eval_selector, parse_selector, Selector, SyntaxError};
use crate::store::{CaseDelta, FlagAssertion, Snapshot, Store, StoreError};

#[derive(Debug, Error)]
pub enum HookError {
    #[error("invalid selector `{text}`: {source}")]
    InvalidSelector { text: String, source: SyntaxError },
    #[error("hook `{0}` is already registered")]
    DuplicateHook(String),
    #[error("hook `{0}`: period must be positive")]
    BadPeriod(String),
    #[error("no template `{0}`")]
    UnknownTemplate(String),
    #[error("placeholder `{{{0}}}` has no binding")]
    UnboundPlaceholder(String),
    #[error("selector matched nothing: {0}")]
    ActionTargetEmpty(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("hook file: {0}")]
    File(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

fn selector(text: &str) -> Result<Selector, HookError> {
    parse_selector(text).map_err(|source| HookError::InvalidSelector {
        text: text.to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    /// Fires when the selector matches a record created or flagged by the
    /// commit.
    OnCommit { selector: String },
    /// Fires on a tick once `period_days` have passed since the last firing
    /// (or since `anchor`), provided the selector matches something.
    OnTick {
        period_days: u32,
        selector: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<DateTime<Utc>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// One Solution defeater per (trigger, target) pair. `{trigger}` and
    /// `{target}` in the statement are replaced by ids.
    CreateDefeater { target: String, statement: String },
    /// A new Artefact and a Solution referencing it under each target.
    /// `{target}` and `{stamp}` in the name are replaced.
    AttachArtefact { target: String, artefact: String },
    /// Asserts `valid=true` on elements referencing the selected artefacts.
    MarkValidFrom { artefacts: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hook {
    pub id: String,
    pub trigger: Trigger,
    pub action: Action,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, Copy)]
pub enum HookEvent<'a> {
    Commit(&'a CaseDelta),
    Tick(DateTime<Utc>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionReport {
    pub hook: String,
    pub triggers: Vec<String>,
    pub targets: Vec<String>,
    pub created: Vec<String>,
    pub flagged: Vec<String>,
    /// Set when the action selector matched nothing.
    pub empty_target: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FireReport {
    pub actions: Vec<ActionReport>,
    /// Version published by the hook commit, if anything changed.
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct HookRegistry {
    hooks: Vec<Hook>,
    last_fired: BTreeMap<String, DateTime<Utc>>,
}

fn rel_id(s: &str, p: Predicate, o: &str) -> String {
    format!("R-{s}-{p}-{o}")
}

fn stamp(now: DateTime<Utc>) -> String {
    now.format("%Y%m%d").to_string()
}

/// Collects records for one delta, skipping ids that already exist.
struct DeltaBuilder<'a> {
    case: &'a Case,
    delta: CaseDelta,
    taken: BTreeSet<String>,
}

impl<'a> DeltaBuilder<'a> {
    fn new(case: &'a Case) -> Self {
        DeltaBuilder {
            case,
            delta: CaseDelta::default(),
            taken: BTreeSet::new(),
        }
    }

    fn fresh(&mut self, id: &str) -> bool {
        !self.case.contains_id(id) && self.taken.insert(id.to_string())
    }

    fn triple_exists(&self, s: &str, p: Predicate, o: &str) -> bool {
        let same = |r: &Relationship| r.subject == s && r.predicate == p && r.object == o;
        self.case.relationships.iter().any(same) || self.delta.add_relationships.iter().any(same)
    }

    fn element(&mut self, e: Element) -> bool {
        if self.fresh(&e.id) {
            self.delta.add_elements.push(e);
            true
        } else {
            false
        }
    }

    fn container(&mut self, c: Container) -> bool {
        if self.fresh(&c.id) {
            self.delta.add_containers.push(c);
            true
        } else {
            false
        }
    }

    fn edge(&mut self, id: String, s: &str, p: Predicate, o: &str) -> bool {
        if self.triple_exists(s, p, o) || !self.fresh(&id) {
            return false;
        }
        self.delta.add_relationships.push(Relationship::new(id, s, p, o));
        true
    }
}

impl HookRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hooks(&self) -> &[Hook] {
        &self.hooks
    }

    pub fn register(&mut self, hook: Hook) -> Result<String, HookError> {
        if self.hooks.iter().any(|h| h.id == hook.id) {
            return Err(HookError::DuplicateHook(hook.id));
        }
        match &hook.trigger {
            Trigger::OnCommit { selector: s } => {
                selector(s)?;
            }
            Trigger::OnTick {
                period_days,
                selector: s,
                ..
            } => {
                if *period_days == 0 {
                    return Err(HookError::BadPeriod(hook.id));
                }
                selector(s)?;
            }
        }
        match &hook.action {
            Action::CreateDefeater { target, .. } | Action::AttachArtefact { target, .. } => {
                selector(target)?;
            }
            Action::MarkValidFrom { artefacts } => {
                selector(artefacts)?;
            }
        }
        let id = hook.id.clone();
        self.hooks.push(hook);
        Ok(id)
    }

    /// Parses a hook file: a JSON list of hook records.
    pub fn from_json(text: &str) -> Result<Self, HookError> {
        let hooks: Vec<Hook> =
            serde_json::from_str(text).map_err(|e| HookError::File(e.to_string()))?;
        let mut reg = HookRegistry::new();
        for h in hooks {
            reg.register(h)?;
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self, HookError> {
        let text = std::fs::read_to_string(path).map_err(|e| HookError::File(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.hooks).expect("hooks serialize") + "\n"
    }

    /// Runs every enabled hook that the event triggers, at most once each,
    /// and commits all resulting changes as one further commit. Hook
    /// commits do not trigger hooks.
    pub fn fire(&mut self, store: &mut Store, event: HookEvent<'_>) -> Result<FireReport, HookError> {
        let snap = store.snapshot();
        let case = snap.case();
        let mut builder = DeltaBuilder::new(case);
        let mut report = FireReport::default();
        let mut fired_at = Vec::new();

        for hook in self.hooks.iter().filter(|h| h.enabled) {
            let triggers: Vec<String> = match (&hook.trigger, event) {
                (Trigger::OnCommit { selector: s }, HookEvent::Commit(delta)) => {
                    let touched: BTreeSet<&str> = delta
                        .created_ids()
                        .into_iter()
                        .chain(delta.set_flags.iter().map(|a| a.record.as_str()))
                        .collect();
                    eval_selector(&snap, &selector(s)?)
                        .into_iter()
                        .filter(|id| touched.contains(id.as_str()))
                        .collect()
                }
                (
                    Trigger::OnTick {
                        period_days,
                        selector: s,
                        anchor,
                    },
                    HookEvent::Tick(now),
                ) => {
                    let last = self.last_fired.get(&hook.id).copied().or(*anchor);
                    let due = last.is_none_or(|t| now - t >= Duration::days(i64::from(*period_days)));
                    if !due {
                        continue;
                    }
                    let hits = eval_selector(&snap, &selector(s)?);
                    if hits.is_empty() {
                        continue;
                    }
                    fired_at.push((hook.id.clone(), now));
                    hits
                }
                _ => continue,
            };
            if triggers.is_empty() {
                continue;
            }
            let stamp = match event {
                HookEvent::Tick(now) => stamp(now),
                HookEvent::Commit(_) => format!("v{}", snap.version()),
            };
            let action = run_action(&snap, &mut builder, hook, &triggers, &stamp)?;
            report.actions.push(action);
        }

        for (id, at) in fired_at {
            self.last_fired.insert(id, at);
        }
        let delta = builder.delta;
        if !delta.is_empty() {
            report.version = Some(store.commit(&delta, None)?.version());
        }
        Ok(report)
    }
}

fn run_action(
    snap: &Snapshot,
    b: &mut DeltaBuilder<'_>,
    hook: &Hook,
    triggers: &[String],
    stamp: &str,
) -> Result<ActionReport, HookError> {
    let case = snap.case();
    let mut report = ActionReport {
        hook: hook.id.clone(),
        triggers: triggers.to_vec(),
        ..ActionReport::default()
    };
    match &hook.action {
        Action::CreateDefeater { target, statement } => {
            let targets = eval_selector(snap, &selector(target)?);
            for t in triggers {
                for g in &targets {
                    let id = format!("DEF-{t}-{g}");
                    let text = statement.replace("{trigger}", t).replace("{target}", g);
                    if b.element(Element::new(id.clone(), ElementKind::Solution, text)) {
                        report.created.push(id.clone());
                    }
                    if case.container(t).is_some_and(|c| c.kind == ContainerKind::Artefact)
                        && b.edge(rel_id(&id, Predicate::References, t), &id, Predicate::References, t)
                    {
                        report.created.push(rel_id(&id, Predicate::References, t));
                    }
                    if b.edge(rel_id(&id, Predicate::Challenges, g), &id, Predicate::Challenges, g) {
                        report.created.push(rel_id(&id, Predicate::Challenges, g));
                    }
                }
            }
            report.empty_target = targets.is_empty();
            report.targets = targets;
        }
        Action::AttachArtefact { target, artefact } => {
            let targets = eval_selector(snap, &selector(target)?);
            for g in &targets {
                let art = format!("ART-{}-{stamp}-{g}", hook.id);
                let sol = format!("Sn-{}-{stamp}-{g}", hook.id);
                let mut c = Container::new(
                    art.clone(),
                    ContainerKind::Artefact,
                    artefact.replace("{target}", g).replace("{stamp}", stamp),
                );
                c.artefact_uri = Some(format!("pending://{art}"));
                if b.container(c) {
                    report.created.push(art.clone());
                    b.delta.add_members.push((case.root.id.clone(), art.clone()));
                }
                if b.element(Element::new(sol.clone(), ElementKind::Solution, format!("Evidence for {g} ({stamp})"))) {
                    report.created.push(sol.clone());
                }
                for (s, p, o) in [(g.as_str(), Predicate::SupportedBy, sol.as_str()), (&sol, Predicate::References, &art)] {
                    if b.edge(rel_id(s, p, o), s, p, o) {
                        report.created.push(rel_id(s, p, o));
                    }
                }
            }
            report.empty_target = targets.is_empty();
            report.targets = targets;
        }
        Action::MarkValidFrom { artefacts } => match propagate_valid_from(snap, artefacts) {
            Ok(delta) => {
                report.flagged = delta.set_flags.iter().map(|a| a.record.clone()).collect();
                b.delta.set_flags.extend(delta.set_flags);
            }
            Err(HookError::ActionTargetEmpty(_)) => report.empty_target = true,
            Err(e) => return Err(e),
        },
    }
    Ok(report)
}

/// `{name}` tokens in a statement, in order of appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find(['{', '}']) {
            Some(close) if after.as_bytes()[close] == b'}' && close > 0 => {
                out.push(after[..close].to_string());
                rest = &after[close + 1..];
            }
            Some(close) => rest = &after[close..],
            None => break,
        }
    }
    out
}

/// Stable short hash of a binding map.
pub fn binding_hash(bindings: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in bindings {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..4])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateInstance {
    pub delta: CaseDelta,
    /// True when the template lists no artefacts.
    pub empty_target: bool,
}

/// Builds the delta that instantiates a template: one Solution per
/// (template Solution, listed Artefact) with placeholders substituted, each
/// referencing its artefact and linked to the template member it
/// instantiates. Ids already present are skipped, so re-running with the
/// same bindings yields an empty delta.
pub fn instantiate_template(
    snap: &Snapshot,
    template: &str,
    bindings: &BTreeMap<String, String>,
) -> Result<TemplateInstance, HookError> {
    let case = snap.case();
    let tpl = case
        .container(template)
        .filter(|c| c.kind == ContainerKind::Template)
        .ok_or_else(|| HookError::UnknownTemplate(template.to_string()))?;
    let members = case.members_of(template);
    let solutions: Vec<&Element> = members
        .iter()
        .filter_map(|m| case.element(m))
        .filter(|e| e.kind == ElementKind::Solution)
        .collect();
    for e in members.iter().filter_map(|m| case.element(m)) {
        for p in placeholders(&e.statement) {
            if !bindings.contains_key(&p) {
                return Err(HookError::UnboundPlaceholder(p));
            }
        }
    }
    let artefacts: Vec<&str> = members
        .iter()
        .copied()
        .filter(|m| case.container(m).is_some_and(|c| c.kind == ContainerKind::Artefact))
        .collect();
    let hash = binding_hash(bindings);
    let mut b = DeltaBuilder::new(case);
    for s in &solutions {
        let mut text = s.statement.clone();
        for (k, v) in bindings {
            text = text.replace(&format!("{{{k}}}"), v);
        }
        for a in &artefacts {
            let id = if solutions.len() == 1 {
                format!("{}-{hash}-{a}", tpl.id)
            } else {
                format!("{}-{hash}-{}-{a}", tpl.id, s.id)
            };
            b.element(Element::new(id.clone(), ElementKind::Solution, text.clone()));
            b.edge(format!("{id}-references"), &id, Predicate::References, a);
            b.edge(format!("{id}-instantiates"), &id, Predicate::Instantiates, &s.id);
        }
    }
    Ok(TemplateInstance {
        delta: b.delta,
        empty_target: artefacts.is_empty(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagChange {
    pub record: String,
    pub flag: Flag,
    pub before: Tri,
    pub after: Tri,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub targets: Vec<String>,
    pub changes: Vec<FlagChange>,
    /// Records with at least one change, sorted.
    pub affected: Vec<String>,
}

/// Asserts `valid=false` on the selected elements in a private copy, reruns
/// inference and reports every flag that differs from the unmodified run.
pub fn whatif_invalidate(snap: &Snapshot, target: &str) -> Result<WhatIfReport, HookError> {
    let case = snap.case();
    let targets: Vec<String> = eval_selector(snap, &selector(target)?)
        .into_iter()
        .filter(|id| case.element(id).is_some())
        .collect();
    if targets.is_empty() {
        return Err(HookError::ActionTargetEmpty(target.to_string()));
    }
    let config = InferenceConfig::default();
    let before = run_fixpoint(case, &config)?.assignment;
    let mut sandbox = case.clone();
    for e in sandbox.elements.iter_mut().filter(|e| targets.contains(&e.id)) {
        e.flags.valid = Tri::False;
    }
    let after = run_fixpoint(&sandbox, &config)?.assignment;
    let changes: Vec<FlagChange> = before
        .diff(&after)
        .into_iter()
        .map(|(record, flag, before, after)| FlagChange {
            record,
            flag,
            before,
            after,
        })
        .collect();
    let affected: BTreeSet<String> = changes.iter().map(|c| c.record.clone()).collect();
    Ok(WhatIfReport {
        targets,
        changes,
        affected: affected.into_iter().collect(),
    })
}

/// Delta asserting `valid=true` on every element with a `references` edge
/// to a selected artefact. Each selected artefact must itself be valid.
pub fn propagate_valid_from(snap: &Snapshot, artefacts: &str) -> Result<CaseDelta, HookError> {
    let case = snap.case();
    let matched: Vec<&Container> = eval_selector(snap, &selector(artefacts)?)
        .iter()
        .filter_map(|id| case.container(id))
        .filter(|c| c.kind == ContainerKind::Artefact)
        .collect();
    if matched.is_empty() {
        return Err(HookError::ActionTargetEmpty(artefacts.to_string()));
    }
    if let Some(bad) = matched.iter().find(|c| !c.flags.valid.is_true()) {
        return Err(HookError::PreconditionFailed(format!(
            "artefact `{}` is not valid",
            bad.id
        )));
    }
    let mut targets = BTreeSet::new();
    for a in &matched {
        for r in snap.match_pattern(None, Some(Predicate::References), Some(&a.id)) {
            if case.element(&r.subject).is_some_and(|e| !e.flags.valid.is_true()) {
                targets.insert(r.subject.clone());
            }
        }
    }
    Ok(CaseDelta {
        set_flags: targets
            .into_iter()
            .map(|record| FlagAssertion {
                record,
                flag: Flag::Valid,
                value: Tri::True,
            })
            .collect(),
        ..CaseDelta::default()
    })
}

/// A scenario is a View container whose member elements argue against the
/// main case. While inactive, the `challenges` relationships leaving its
/// members are asserted invalid, so they take no part in inference.
pub fn scenario_toggle(snap: &Snapshot, scenario: &str, active: bool) -> Result<CaseDelta, HookError> {
    let case = snap.case();
    case.container(scenario)
        .filter(|c| c.kind == ContainerKind::View)
        .ok_or_else(|| HookError::PreconditionFailed(format!("`{scenario}` is not a scenario view")))?;
    let members = case.members_closure(scenario);
    let value = if active { Tri::Unset } else { Tri::False };
    let set_flags = case
        .relationships
        .iter()
        .filter(|r| r.predicate == Predicate::Challenges && members.contains(&r.subject))
        .filter(|r| r.valid != value)
        .map(|r| FlagAssertion {
            record: r.id.clone(),
            flag: Flag::Valid,
            value,
        })
        .collect();
    Ok(CaseDelta {
        set_flags,
        ..CaseDelta::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_scan() {
        assert_eq!(placeholders("Test against {attack prompt}"), vec!["attack prompt"]);
        assert_eq!(placeholders("{a} and {b}"), vec!["a", "b"]);
        assert!(placeholders("no {} {unclosed").is_empty());
    }

    #[test]
    fn hash_is_order_free_and_short() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), "1".to_string());
        a.insert("y".to_string(), "2".to_string());
        let mut b = BTreeMap::new();
        b.insert("y".to_string(), "2".to_string());
        b.insert("x".to_string(), "1".to_string());
        assert_eq!(binding_hash(&a), binding_hash(&b));
        assert_eq!(binding_hash(&a).len(), 8);
    }

    #[test]
    fn registration_checks() {
        let mut reg = HookRegistry::new();
        let hook = Hook {
            id: "h".into(),
            trigger: Trigger::OnTick {
                period_days: 0,
                selector: "*".into(),
                anchor: None,
            },
            action: Action::MarkValidFrom {
                artefacts: "kind:Artefact".into(),
            },
            enabled: true,
        };
        assert!(matches!(reg.register(hook.clone()), Err(HookError::BadPeriod(_))));
        let bad = Hook {
            trigger: Trigger::OnCommit {
                selector: "kind:".into(),
            },
            ..hook.clone()
        };
        assert!(matches!(reg.register(bad), Err(HookError::InvalidSelector { .. })));
        let ok = Hook {
            trigger: Trigger::OnCommit {
                selector: "*".into(),
            },
            ..hook
        };
        reg.register(ok.clone()).unwrap();
        assert!(matches!(reg.register(ok), Err(HookError::DuplicateHook(_))));
        let back = HookRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back.hooks(), reg.hooks());
    }

    #[test]
    fn whatif_leaves_snapshot_alone() {
        let mut c = Case::new("case", "case");
        c.add_element(ElementKind::Goal, "G1", "Top", None).unwrap();
        c.add_element(ElementKind::Context, "C1", "Isolated", None).unwrap();
        let snap = Snapshot::new(c.clone(), 3);
        let report = whatif_invalidate(&snap, "kind:Context").unwrap();
        assert_eq!(report.affected, vec!["C1".to_string()]);
        assert_eq!(snap.case(), &c);
        assert_eq!(snap.version(), 3);
        assert!(matches!(
            whatif_invalidate(&snap, "kind:Strategy"),
            Err(HookError::ActionTargetEmpty(_))
        ));
    }
}
