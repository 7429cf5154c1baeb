//! Versioned in-memory store with copy-on-write snapshots.
//!
//! A [`Store`] is the single writer; every successful [`Store::commit`]
//! produces a new immutable [`Snapshot`] with the next version number.
//! Snapshots are cheap to clone and can be read from any thread.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caseio::{parse_native, serialize_native, CaseDocument, CaseIoError};
use crate::model::{
    Case, Container, Element, Flag, ModelError, Predicate, RecordKind, Relationship, Tri,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("dangling reference `{0}`")]
    DanglingReference(String),
    #[error("duplicate identifier `{0}`")]
    DuplicateIdentifier(String),
    #[error("duplicate triple ({0}, {1}, {2})")]
    DuplicateTriple(String, Predicate, String),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("version conflict: expected {expected}, store is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Format(#[from] CaseIoError),
}

impl From<ModelError> for StoreError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::DuplicateIdentifier(id) => StoreError::DuplicateIdentifier(id),
            ModelError::UnknownEndpoint(id) => StoreError::DanglingReference(id),
            ModelError::DuplicateTriple(s, p, o) => StoreError::DuplicateTriple(s, p, o),
            other => StoreError::Invalid(other.to_string()),
        }
    }
}

/// Frozen view of a case at one version, with lookup indexes.
#[derive(Debug)]
pub struct Snapshot {
    version: u64,
    case: Arc<Case>,
    by_kind: HashMap<RecordKind, Vec<String>>,
    by_predicate: HashMap<Predicate, Vec<usize>>,
    by_subject: HashMap<String, Vec<usize>>,
    by_object: HashMap<String, Vec<usize>>,
    folded: HashMap<String, String>,
    tokens: HashMap<String, BTreeSet<String>>,
}

fn fold(text: &str) -> String {
    text.to_lowercase()
}

impl Snapshot {
    pub fn new(case: Case, version: u64) -> Self {
        Self::from_arc(Arc::new(case), version)
    }

    fn from_arc(case: Arc<Case>, version: u64) -> Self {
        let mut by_kind: HashMap<RecordKind, Vec<String>> = HashMap::new();
        let mut folded = HashMap::new();
        let mut tokens: HashMap<String, BTreeSet<String>> = HashMap::new();
        for e in &case.elements {
            by_kind
                .entry(RecordKind::Element(e.kind))
                .or_default()
                .push(e.id.clone());
            let f = fold(&e.statement);
            for tok in f.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
                tokens.entry(tok.to_string()).or_default().insert(e.id.clone());
            }
            folded.entry(e.id.clone()).or_insert(f);
        }
        for c in case.all_containers() {
            by_kind
                .entry(RecordKind::Container(c.kind))
                .or_default()
                .push(c.id.clone());
            folded.entry(c.id.clone()).or_insert_with(|| fold(&c.name));
        }
        let mut by_predicate: HashMap<Predicate, Vec<usize>> = HashMap::new();
        let mut by_subject: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_object: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, r) in case.relationships.iter().enumerate() {
            by_kind
                .entry(RecordKind::Relationship)
                .or_default()
                .push(r.id.clone());
            by_predicate.entry(r.predicate).or_default().push(i);
            by_subject.entry(r.subject.clone()).or_default().push(i);
            by_object.entry(r.object.clone()).or_default().push(i);
        }
        for ids in by_kind.values_mut() {
            ids.sort();
        }
        Snapshot {
            version,
            case,
            by_kind,
            by_predicate,
            by_subject,
            by_object,
            folded,
            tokens,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn case(&self) -> &Case {
        &self.case
    }

    pub fn case_arc(&self) -> Arc<Case> {
        Arc::clone(&self.case)
    }

    /// Record ids of one kind, sorted.
    pub fn ids_of_kind(&self, kind: RecordKind) -> &[String] {
        self.by_kind.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Relationships matching every bound position, ordered by id.
    pub fn match_pattern(
        &self,
        subject: Option<&str>,
        predicate: Option<Predicate>,
        object: Option<&str>,
    ) -> Vec<&Relationship> {
        let rels = &self.case.relationships;
        let empty: &[usize] = &[];
        let lists = [
            subject.map(|s| self.by_subject.get(s)),
            predicate.map(|p| self.by_predicate.get(&p)),
            object.map(|o| self.by_object.get(o)),
        ];
        let candidates: Option<&[usize]> = lists
            .into_iter()
            .flatten()
            .map(|l| l.map(Vec::as_slice).unwrap_or(empty))
            .min_by_key(|l| l.len());
        let matches = |r: &Relationship| {
            subject.is_none_or(|s| r.subject == s)
                && predicate.is_none_or(|p| r.predicate == p)
                && object.is_none_or(|o| r.object == o)
        };
        let mut out: Vec<&Relationship> = match candidates {
            Some(idx) => idx.iter().map(|&i| &rels[i]).filter(|r| matches(r)).collect(),
            None => rels.iter().collect(),
        };
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Case-folded statement (element) or name (container).
    pub fn folded_text(&self, id: &str) -> Option<&str> {
        self.folded.get(id).map(String::as_str)
    }

    /// Element ids whose statement contains `token` as a whole word.
    pub fn ids_with_token(&self, token: &str) -> Vec<String> {
        self.tokens
            .get(&fold(token))
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }
}

/// A change set applied atomically by [`Store::commit`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseDelta {
    pub add_elements: Vec<Element>,
    pub add_containers: Vec<Container>,
    pub add_relationships: Vec<Relationship>,
    /// `(container, member)` pairs appended to existing containers.
    pub add_members: Vec<(String, String)>,
    pub set_flags: Vec<FlagAssertion>,
    /// Removed with every relationship that touches them.
    pub remove_elements: Vec<String>,
}

impl CaseDelta {
    pub fn is_empty(&self) -> bool {
        self.add_elements.is_empty()
            && self.add_containers.is_empty()
            && self.add_relationships.is_empty()
            && self.add_members.is_empty()
            && self.set_flags.is_empty()
            && self.remove_elements.is_empty()
    }

    /// Ids of every record this delta creates.
    pub fn created_ids(&self) -> Vec<&str> {
        self.add_elements
            .iter()
            .map(|e| e.id.as_str())
            .chain(self.add_containers.iter().map(|c| c.id.as_str()))
            .chain(self.add_relationships.iter().map(|r| r.id.as_str()))
            .collect()
    }
}

/// Asserts a flag value on any record. Relationships accept `valid` and
/// `inDoubt` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagAssertion {
    pub record: String,
    pub flag: Flag,
    pub value: Tri,
}

/// Applies a delta to a case in place. On error the case may be partially
/// modified; callers work on a copy.
pub fn apply_delta(case: &mut Case, delta: &CaseDelta) -> Result<(), StoreError> {
    for e in &delta.add_elements {
        case.insert_element(e.clone())?;
    }
    let mut pending_members = Vec::new();
    for c in &delta.add_containers {
        let mut shell = c.clone();
        pending_members.push((c.id.clone(), std::mem::take(&mut shell.members)));
        case.add_container(shell)?;
    }
    for (cid, members) in pending_members {
        for m in &members {
            if !case.contains_id(m) {
                return Err(StoreError::DanglingReference(m.clone()));
            }
        }
        if let Some(c) = case.container_mut(&cid) {
            c.members = members;
        }
    }
    for (cid, member) in &delta.add_members {
        if !case.contains_id(member) {
            return Err(StoreError::DanglingReference(member.clone()));
        }
        let c = case
            .container_mut(cid)
            .ok_or_else(|| StoreError::DanglingReference(cid.clone()))?;
        if !c.members.contains(member) {
            c.members.push(member.clone());
        }
    }
    for r in &delta.add_relationships {
        case.insert_relationship(r.clone())?;
    }
    for a in &delta.set_flags {
        set_flag(case, a)?;
    }
    if !delta.remove_elements.is_empty() {
        remove_elements(case, &delta.remove_elements)?;
    }
    Ok(())
}

fn set_flag(case: &mut Case, a: &FlagAssertion) -> Result<(), StoreError> {
    let mut hit = false;
    for e in case.elements.iter_mut().filter(|e| e.id == a.record) {
        e.flags.set(a.flag, a.value);
        hit = true;
    }
    for c in std::iter::once(&mut case.root)
        .chain(case.containers.iter_mut())
        .filter(|c| c.id == a.record)
    {
        c.flags.set(a.flag, a.value);
        hit = true;
    }
    for r in case.relationships.iter_mut().filter(|r| r.id == a.record) {
        match a.flag {
            Flag::Valid => r.valid = a.value,
            Flag::InDoubt => r.in_doubt = a.value.is_true(),
            other => {
                return Err(StoreError::Invalid(format!(
                    "relationship `{}` has no `{other}` flag",
                    r.id
                )))
            }
        }
        hit = true;
    }
    if hit {
        Ok(())
    } else {
        Err(StoreError::DanglingReference(a.record.clone()))
    }
}

fn remove_elements(case: &mut Case, ids: &[String]) -> Result<(), StoreError> {
    let mut gone: HashSet<String> = HashSet::new();
    for id in ids {
        if case.element(id).is_none() {
            return Err(StoreError::DanglingReference(id.clone()));
        }
        gone.insert(id.clone());
    }
    case.elements.retain(|e| !gone.contains(&e.id));
    // Relationships may point at relationships, so cascade to a fixpoint.
    loop {
        let before = case.relationships.len();
        let mut removed = Vec::new();
        case.relationships.retain(|r| {
            let drop = gone.contains(&r.subject)
                || gone.contains(&r.object)
                || r.confidence_argument.as_ref().is_some_and(|a| gone.contains(a));
            if drop {
                removed.push(r.id.clone());
            }
            !drop
        });
        gone.extend(removed);
        if case.relationships.len() == before {
            break;
        }
    }
    for c in std::iter::once(&mut case.root).chain(case.containers.iter_mut()) {
        c.members.retain(|m| !gone.contains(m));
        if c.instantiation_data.as_ref().is_some_and(|d| gone.contains(d)) {
            c.instantiation_data = None;
        }
    }
    Ok(())
}

/// Where an overlay came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayOrigin {
    Rule,
    Query,
    Manual,
}

/// Named id set for coordinated highlighting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlay {
    pub name: String,
    pub members: BTreeSet<String>,
    pub origin: OverlayOrigin,
    /// Version of the snapshot the members were checked against.
    pub version: u64,
}

impl Overlay {
    /// Builds an overlay, rejecting ids absent from `snapshot`.
    pub fn new<I, S>(
        snapshot: &Snapshot,
        name: impl Into<String>,
        members: I,
        origin: OverlayOrigin,
    ) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let members: BTreeSet<String> = members.into_iter().map(Into::into).collect();
        let ids: HashSet<&str> = snapshot.case().all_ids().collect();
        if let Some(bad) = members.iter().find(|m| !ids.contains(m.as_str())) {
            return Err(StoreError::DanglingReference(bad.clone()));
        }
        Ok(Overlay {
            name: name.into(),
            members,
            origin,
            version: snapshot.version(),
        })
    }
}

/// Notification sent to commit listeners.
#[derive(Debug, Clone)]
pub struct CommitEvent {
    pub version: u64,
    pub delta: CaseDelta,
}

type Listener = Box<dyn Fn(&CommitEvent) + Send + Sync>;

/// Single-writer store holding the current snapshot.
pub struct Store {
    current: Arc<Snapshot>,
    overlays: BTreeMap<String, Overlay>,
    listeners: Vec<Listener>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("version", &self.current.version)
            .field("overlays", &self.overlays.len())
            .field("listeners", &self.listeners.len())
            .finish()
    }
}

impl Store {
    /// Starts a store at version 0.
    pub fn new(case: Case) -> Self {
        Store {
            current: Arc::new(Snapshot::new(case, 0)),
            overlays: BTreeMap::new(),
            listeners: Vec::new(),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current)
    }

    pub fn version(&self) -> u64 {
        self.current.version
    }

    pub fn subscribe(&mut self, listener: impl Fn(&CommitEvent) + Send + Sync + 'static) {
        self.listeners.push(Box::new(listener));
    }

    /// Applies `delta` atomically and publishes the next version. With
    /// `expected` set, fails with `Conflict` when the store has moved on.
    pub fn commit(
        &mut self,
        delta: &CaseDelta,
        expected: Option<u64>,
    ) -> Result<Arc<Snapshot>, StoreError> {
        if let Some(expected) = expected {
            if expected != self.current.version {
                return Err(StoreError::Conflict {
                    expected,
                    actual: self.current.version,
                });
            }
        }
        let mut next = self.current.case().clone();
        apply_delta(&mut next, delta)?;
        let version = self.current.version + 1;
        self.current = Arc::new(Snapshot::new(next, version));
        self.overlays.clear();
        let event = CommitEvent {
            version,
            delta: delta.clone(),
        };
        for l in &self.listeners {
            l(&event);
        }
        Ok(self.snapshot())
    }

    /// Replaces the whole case (import), as one commit.
    pub fn replace(&mut self, case: Case) -> Arc<Snapshot> {
        let version = self.current.version + 1;
        self.current = Arc::new(Snapshot::new(case, version));
        self.overlays.clear();
        self.snapshot()
    }

    /// Stores an overlay checked against the current snapshot.
    pub fn set_overlay(&mut self, overlay: Overlay) -> Result<(), StoreError> {
        if overlay.version != self.current.version {
            return Err(StoreError::Conflict {
                expected: overlay.version,
                actual: self.current.version,
            });
        }
        self.overlays.insert(overlay.name.clone(), overlay);
        Ok(())
    }

    pub fn overlays(&self) -> impl Iterator<Item = &Overlay> {
        self.overlays.values()
    }
}

/// Writes the snapshot's case in canonical native form.
pub fn save(snapshot: &Snapshot, path: &Path) -> Result<(), StoreError> {
    let text = serialize_native(&CaseDocument::new(snapshot.case().clone()));
    std::fs::write(path, text).map_err(|e| StoreError::Io(e.to_string()))
}

/// Reads a native document into a version-0 snapshot.
pub fn load(path: &Path) -> Result<Snapshot, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io(e.to_string()))?;
    let doc = parse_native(&text)?;
    Ok(Snapshot::new(doc.case, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContainerKind, ElementKind};

    fn small() -> Case {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "Top claim", None).unwrap();
        case.add_element(ElementKind::Solution, "Sn1", "Test report", None)
            .unwrap();
        case.add_element(ElementKind::Goal, "G2", "Isolated", None).unwrap();
        case.add_edge("supportedBy", "G1", "Sn1").unwrap();
        case
    }

    #[test]
    fn commit_increments_version() {
        let mut store = Store::new(small());
        let delta = CaseDelta {
            add_elements: vec![Element::new("G3", ElementKind::Goal, "more")],
            ..Default::default()
        };
        let snap = store.commit(&delta, None).unwrap();
        assert_eq!(snap.version(), 1);
    }

    #[test]
    fn dangling_commit_is_atomic() {
        let mut store = Store::new(small());
        let delta = CaseDelta {
            add_elements: vec![Element::new("G3", ElementKind::Goal, "more")],
            add_relationships: vec![Relationship::new("R9", "G9", Predicate::SupportedBy, "G3")],
            ..Default::default()
        };
        assert_eq!(
            store.commit(&delta, None).unwrap_err(),
            StoreError::DanglingReference("G9".into())
        );
        assert_eq!(store.version(), 0);
        assert!(store.snapshot().case().element("G3").is_none());
    }

    #[test]
    fn old_snapshots_are_unchanged() {
        let mut store = Store::new(small());
        let v0 = store.snapshot();
        let add = |id: &str| CaseDelta {
            add_elements: vec![Element::new(id, ElementKind::Goal, "x")],
            ..Default::default()
        };
        store.commit(&add("G3"), None).unwrap();
        store.commit(&add("G4"), None).unwrap();
        assert_eq!(v0.case().elements.len(), 3);
        assert_eq!(store.snapshot().case().elements.len(), 5);
    }

    #[test]
    fn stale_version_conflicts() {
        let mut store = Store::new(small());
        store.commit(&CaseDelta::default(), Some(0)).unwrap();
        assert!(matches!(
            store.commit(&CaseDelta::default(), Some(0)),
            Err(StoreError::Conflict { expected: 0, actual: 1 })
        ));
    }

    #[test]
    fn match_pattern_positions() {
        let snap = Snapshot::new(small(), 0);
        assert_eq!(snap.match_pattern(Some("G2"), None, None).len(), 0);
        assert_eq!(snap.match_pattern(None, None, None).len(), 1);
        assert_eq!(
            snap.match_pattern(None, Some(Predicate::SupportedBy), Some("Sn1"))[0].subject,
            "G1"
        );
    }

    #[test]
    fn remove_cascades() {
        let mut case = small();
        let r1 = case.relationships[0].id.clone();
        case.add_element(ElementKind::Solution, "D1", "doubt", None).unwrap();
        case.add_edge("challenges", "D1", &r1).unwrap();
        let mut store = Store::new(case);
        let delta = CaseDelta {
            remove_elements: vec!["Sn1".into()],
            ..Default::default()
        };
        let snap = store.commit(&delta, None).unwrap();
        assert!(snap.case().relationships.is_empty());
    }

    #[test]
    fn overlay_rejects_unknown_ids() {
        let snap = Snapshot::new(small(), 0);
        assert!(Overlay::new(&snap, "x", ["G1", "G9"], OverlayOrigin::Manual).is_err());
        assert!(Overlay::new(&snap, "x", ["G1"], OverlayOrigin::Manual).is_ok());
    }

    #[test]
    fn listeners_see_commits() {
        use std::sync::atomic::{AtomicU64, Ordering};
        let seen = Arc::new(AtomicU64::new(0));
        let mut store = Store::new(small());
        let s = Arc::clone(&seen);
        store.subscribe(move |ev| s.store(ev.version, Ordering::SeqCst));
        store.commit(&CaseDelta::default(), None).unwrap();
        assert_eq!(seen.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.gsn.json");
        let mut case = small();
        case.add_container(Container::new("A1", ContainerKind::Argument, "arg").with_members(["G1"]))
            .unwrap();
        let snap = Snapshot::new(case, 3);
        save(&snap, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.case().canonical(), snap.case().canonical());

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(
            load(&path),
            Err(StoreError::Format(CaseIoError::Syntax { .. }))
        ));
    }

    #[test]
    fn empty_case_saves() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.gsn.json");
        save(&Snapshot::new(Case::new("C", "c"), 0), &path).unwrap();
        let back = load(&path).unwrap();
        assert!(back.case().elements.is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn index_matches_linear_scan(
                edges in proptest::collection::vec((0usize..6, 0usize..11, 0usize..6), 0..30),
                s in proptest::option::of(0usize..6),
                p in proptest::option::of(0usize..11),
                o in proptest::option::of(0usize..6),
            ) {
                let mut case = Case::new("C", "c");
                for i in 0..6 {
                    case.add_element(ElementKind::Goal, format!("N{i}"), "n", None).unwrap();
                }
                for (a, pi, b) in edges {
                    let _ = case.add_edge(Predicate::ALL[pi].as_str(), &format!("N{a}"), &format!("N{b}"));
                }
                let snap = Snapshot::new(case.clone(), 0);
                let s = s.map(|i| format!("N{i}"));
                let o = o.map(|i| format!("N{i}"));
                let p = p.map(|i| Predicate::ALL[i]);
                let got: Vec<String> = snap
                    .match_pattern(s.as_deref(), p, o.as_deref())
                    .iter()
                    .map(|r| r.id.clone())
                    .collect();
                let mut want: Vec<String> = case
                    .relationships
                    .iter()
                    .filter(|r| s.as_ref().is_none_or(|x| &r.subject == x)
                        && p.is_none_or(|x| r.predicate == x)
                        && o.as_ref().is_none_or(|x| &r.object == x))
                    .map(|r| r.id.clone())
                    .collect();
                want.sort();
                prop_assert_eq!(got, want);
            }
        }
    }
}
