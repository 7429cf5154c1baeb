//! Stratified evaluator: each stratum is one graph pass or worklist closure.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use super::{
    has_placeholder, Diagnostic, FlagAssignment, FlagDelta, InferenceConfig, InferenceError,
    InferenceResult, Premise, RelFlags, RuleId, Trace,
};
use crate::model::{
    Case, Container, ContainerKind, Element, ElementKind, Flag, FlagSet, MultiplicityIndicator,
    Predicate, RecordKind, Relationship, Severity, Tri,
};
use crate::typing::edge_type_allowed;

type Why = (RuleId, Vec<Premise>);

struct Budget {
    steps: usize,
    cap: usize,
}

impl Budget {
    fn tick(&mut self) -> Result<(), InferenceError> {
        self.steps += 1;
        if self.steps > self.cap {
            Err(InferenceError::NonTermination { cap: self.cap })
        } else {
            Ok(())
        }
    }
}

/// Lookup tables shared by all strata.
struct Index<'a> {
    case: &'a Case,
    elems: Vec<&'a Element>,
    eidx: HashMap<&'a str, usize>,
    conts: HashMap<&'a str, &'a Container>,
    cont_order: Vec<&'a str>,
    rel_first: HashMap<&'a str, &'a Relationship>,
    rel_order: Vec<&'a str>,
    rels_by_id: HashMap<&'a str, Vec<usize>>,
    contains_by_subject: HashMap<&'a str, Vec<&'a str>>,
}

impl<'a> Index<'a> {
    fn new(case: &'a Case) -> Self {
        let mut elems = Vec::new();
        let mut eidx = HashMap::new();
        for e in &case.elements {
            if !eidx.contains_key(e.id.as_str()) {
                eidx.insert(e.id.as_str(), elems.len());
                elems.push(e);
            }
        }
        let mut conts = HashMap::new();
        let mut cont_order = Vec::new();
        for c in case.all_containers() {
            if !conts.contains_key(c.id.as_str()) {
                conts.insert(c.id.as_str(), c);
                cont_order.push(c.id.as_str());
            }
        }
        let mut rel_first = HashMap::new();
        let mut rel_order = Vec::new();
        let mut rels_by_id: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut contains_by_subject: HashMap<&str, Vec<&str>> = HashMap::new();
        for (j, r) in case.relationships.iter().enumerate() {
            if !rel_first.contains_key(r.id.as_str()) {
                rel_first.insert(r.id.as_str(), r);
                rel_order.push(r.id.as_str());
            }
            rels_by_id.entry(r.id.as_str()).or_default().push(j);
            if r.predicate == Predicate::Contains {
                contains_by_subject
                    .entry(r.subject.as_str())
                    .or_default()
                    .push(r.object.as_str());
            }
        }
        Index {
            case,
            elems,
            eidx,
            conts,
            cont_order,
            rel_first,
            rel_order,
            rels_by_id,
            contains_by_subject,
        }
    }

    fn kind(&self, id: &str) -> Option<RecordKind> {
        if let Some(&i) = self.eidx.get(id) {
            return Some(RecordKind::Element(self.elems[i].kind));
        }
        if let Some(c) = self.conts.get(id) {
            return Some(RecordKind::Container(c.kind));
        }
        self.rel_first.get(id).map(|_| RecordKind::Relationship)
    }

    fn elem(&self, id: &str) -> Option<usize> {
        self.eidx.get(id).copied()
    }

    /// Transitive members: member lists plus `contains` edges.
    fn closure(&self, start: &'a str) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            let listed = self
                .conts
                .get(c)
                .map(|k| k.members.iter().map(String::as_str).collect::<Vec<_>>())
                .unwrap_or_default();
            let edged = self.contains_by_subject.get(c).cloned().unwrap_or_default();
            for m in listed.into_iter().chain(edged) {
                if m != start && seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        seen
    }
}

/// Marks edges lying on a directed cycle, via iterative Tarjan SCC.
fn cyclic_edges(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
    }
    const NONE: usize = usize::MAX;
    let mut index = vec![NONE; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![NONE; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut ncomp = 0;
    for s in 0..n {
        if index[s] != NONE {
            continue;
        }
        index[s] = next;
        low[s] = next;
        next += 1;
        stack.push(s);
        on_stack[s] = true;
        let mut call = vec![(s, 0usize)];
        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < adj[v].len() {
                let w = adj[v][top.1];
                top.1 += 1;
                if index[w] == NONE {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    edges
        .iter()
        .map(|&(u, v)| u == v || comp[u] == comp[v])
        .collect()
}

fn diag(severity: Severity, rule: RuleId, subjects: Vec<String>, message: String) -> Diagnostic {
    Diagnostic {
        severity,
        rule,
        subjects,
        message,
    }
}

pub(super) fn evaluate<'a>(
    case: &'a Case,
    config: &InferenceConfig,
) -> Result<InferenceResult, InferenceError> {
    let on = |r: RuleId| config.is_enabled(r);
    let ix = Index::new(case);
    let rels = &case.relationships;
    let mut budget = Budget {
        steps: 0,
        cap: config.iteration_cap.unwrap_or(10 * case.record_count()),
    };
    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let asserted_rel_invalid =
        |id: &str| ix.rel_first.get(id).is_some_and(|r| r.valid.is_false());

    // ---- stratum 0: structural ----
    let mut einv: HashMap<&'a str, Why> = HashMap::new();
    let mut mark = |einv: &mut HashMap<&'a str, Why>, id: &str, why: Why| -> Result<(), InferenceError> {
        let id: &'a str = ix.rel_first.get_key_value(id).map(|(k, _)| *k).unwrap_or("");
        if !asserted_rel_invalid(id) && !einv.contains_key(id) {
            budget.tick()?;
            einv.insert(id, why);
        }
        Ok(())
    };

    let dups: HashSet<String> = case.duplicate_ids().into_iter().collect();
    if on(RuleId::R11) {
        for d in &dups {
            diagnostics.push(diag(
                Severity::Error,
                RuleId::R11,
                vec![d.clone()],
                format!("identifier `{d}` is used by more than one record"),
            ));
        }
        for r in rels {
            for id in [&r.id, &r.subject, &r.object] {
                if dups.contains(id) {
                    mark(&mut einv, &r.id, (RuleId::R11, vec![Premise::record(id.clone())]))?;
                    break;
                }
            }
        }
    }

    if on(RuleId::R1) {
        let mut first: HashMap<(&str, Predicate, &str), &str> = HashMap::new();
        for r in rels {
            let key = (r.subject.as_str(), r.predicate, r.object.as_str());
            let e = first.entry(key).or_insert(r.id.as_str());
            if r.id.as_str() < *e {
                *e = r.id.as_str();
            }
        }
        for r in rels {
            let keep = first[&(r.subject.as_str(), r.predicate, r.object.as_str())];
            if r.id != keep {
                diagnostics.push(diag(
                    Severity::Warning,
                    RuleId::R1,
                    vec![r.id.clone(), keep.to_string()],
                    format!("`{}` repeats the triple of `{keep}`", r.id),
                ));
                mark(&mut einv, &r.id, (RuleId::R1, vec![Premise::record(keep)]))?;
            }
        }
    }

    if on(RuleId::R3) {
        for r in rels {
            let ok = match (ix.kind(&r.subject), ix.kind(&r.object)) {
                (Some(s), Some(o)) => edge_type_allowed(r.predicate, s, o),
                _ => false,
            };
            if !ok {
                diagnostics.push(diag(
                    Severity::Error,
                    RuleId::R3,
                    vec![r.id.clone()],
                    format!(
                        "`{}` {} `{}` is not allowed by the typing table",
                        r.subject, r.predicate, r.object
                    ),
                ));
                mark(
                    &mut einv,
                    &r.id,
                    (
                        RuleId::R3,
                        vec![Premise::record(r.subject.clone()), Premise::record(r.object.clone())],
                    ),
                )?;
            }
        }
    }

    // Away references.
    let mut away_bad: BTreeMap<usize, Why> = BTreeMap::new();
    if on(RuleId::R11) {
        for (i, e) in ix.elems.iter().enumerate() {
            let Some(t) = &e.away_target else { continue };
            let resolved = ix.elem(&t.element).map(|x| ix.elems[x]).filter(|x| {
                x.id != e.id
                    && x.module.as_deref() == Some(t.module.as_str())
                    && e.module.as_deref() != Some(t.module.as_str())
                    && (x.flags.public
                        || ix.conts.get(t.module.as_str()).is_some_and(|m| m.flags.public))
            });
            if resolved.is_none() {
                diagnostics.push(diag(
                    Severity::Error,
                    RuleId::R11,
                    vec![e.id.clone()],
                    format!(
                        "away element `{}` does not resolve to a public element `{}` of module `{}`",
                        e.id, t.element, t.module
                    ),
                ));
                away_bad.insert(i, (RuleId::R11, vec![Premise::record(t.element.clone())]));
            }
        }
        for r in rels {
            let touches_bad = [&r.subject, &r.object]
                .into_iter()
                .find(|id| ix.elem(id).is_some_and(|i| away_bad.contains_key(&i)));
            if let Some(id) = touches_bad {
                mark(&mut einv, &r.id, (RuleId::R11, vec![Premise::flag(id.clone(), Flag::Valid)]))?;
            }
            if r.predicate == Predicate::SupportedBy
                && ix
                    .elem(&r.subject)
                    .is_some_and(|i| ix.elems[i].away_target.is_some())
            {
                diagnostics.push(diag(
                    Severity::Error,
                    RuleId::R11,
                    vec![r.subject.clone(), r.id.clone()],
                    format!("away element `{}` carries support edge `{}`", r.subject, r.id),
                ));
                mark(&mut einv, &r.id, (RuleId::R11, vec![Premise::record(r.subject.clone())]))?;
            }
        }
    }

    if on(RuleId::R4) {
        let mut node: HashMap<&str, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut which = Vec::new();
        for r in rels.iter().filter(|r| r.predicate == Predicate::SupportedBy) {
            let n = node.len();
            let u = *node.entry(r.subject.as_str()).or_insert(n);
            let n = node.len();
            let v = *node.entry(r.object.as_str()).or_insert(n);
            edges.push((u, v));
            which.push(r);
        }
        for (r, cyc) in which.into_iter().zip(cyclic_edges(node.len(), &edges)) {
            if cyc {
                diagnostics.push(diag(
                    Severity::Error,
                    RuleId::R4,
                    vec![r.id.clone()],
                    format!("support edge `{}` lies on a cycle", r.id),
                ));
                mark(&mut einv, &r.id, (RuleId::R4, vec![Premise::record(r.object.clone())]))?;
            }
        }
    }

    let sv = |j: usize| {
        let id = rels[j].id.as_str();
        !asserted_rel_invalid(id) && !einv.contains_key(id)
    };

    let n = ix.elems.len();
    let mut sb_children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut sb_parents: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ctx_by_object: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ctx_by_subject: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut refs: Vec<Vec<(usize, &str)>> = vec![Vec::new(); n];
    let mut challenges: Vec<(usize, usize, &str)> = Vec::new();
    let mut has_any_sb_in: Vec<bool> = vec![false; n];
    for (j, r) in rels.iter().enumerate() {
        if r.predicate == Predicate::SupportedBy && ix.kind(&r.subject).is_some_and(|k| matches!(k, RecordKind::Element(_))) {
            if let Some(o) = ix.elem(&r.object) {
                has_any_sb_in[o] = true;
            }
        }
        if !sv(j) {
            continue;
        }
        let (s, o) = (ix.elem(&r.subject), ix.elem(&r.object));
        match r.predicate {
            Predicate::SupportedBy => {
                if let (Some(s), Some(o)) = (s, o) {
                    sb_children[s].push((j, o));
                    sb_parents[o].push((j, s));
                }
            }
            Predicate::InContextOf => {
                if let (Some(s), Some(o)) = (s, o) {
                    ctx_by_object[o].push((j, s));
                    ctx_by_subject[s].push((j, o));
                }
            }
            Predicate::References => {
                if let Some(s) = s {
                    refs[s].push((j, r.object.as_str()));
                }
            }
            Predicate::Challenges => {
                if let Some(s) = s {
                    challenges.push((j, s, r.object.as_str()));
                }
            }
            _ => {}
        }
    }

    let mut top_level: HashMap<usize, Why> = HashMap::new();
    let mut undeveloped: HashMap<usize, Why> = HashMap::new();
    for (i, e) in ix.elems.iter().enumerate() {
        if on(RuleId::R2) && e.kind == ElementKind::Goal && !has_any_sb_in[i] {
            budget.tick()?;
            top_level.insert(i, (RuleId::R2, vec![]));
        }
        if on(RuleId::R8)
            && matches!(e.kind, ElementKind::Goal | ElementKind::Strategy)
            && e.away_target.is_none()
            && sb_children[i].is_empty()
        {
            budget.tick()?;
            undeveloped.insert(i, (RuleId::R8, vec![]));
        }
    }

    // ---- stratum 1: validity ----
    let mut invalid: HashMap<usize, Why> = HashMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, e) in ix.elems.iter().enumerate() {
        if e.flags.valid.is_false() {
            invalid.insert(i, (RuleId::R5, vec![]));
            queue.push_back(i);
        } else if let Some(why) = away_bad.get(&i) {
            budget.tick()?;
            invalid.insert(i, why.clone());
            queue.push_back(i);
        }
    }
    if on(RuleId::R5) {
        while let Some(x) = queue.pop_front() {
            let xid = &ix.elems[x].id;
            for &(j, c) in &sb_children[x] {
                if let std::collections::hash_map::Entry::Vacant(e) = invalid.entry(c) {
                    budget.tick()?;
                    e.insert((RuleId::R5, vec![Premise::record(rels[j].id.clone()), Premise::flag(xid.clone(), Flag::Valid)]));
                    queue.push_back(c);
                }
            }
            if matches!(ix.elems[x].kind, ElementKind::Context | ElementKind::Assumption) {
                for &(j, s) in &ctx_by_object[x] {
                    if let std::collections::hash_map::Entry::Vacant(e) = invalid.entry(s) {
                        budget.tick()?;
                        e.insert((RuleId::R5, vec![Premise::record(rels[j].id.clone()), Premise::flag(xid.clone(), Flag::Valid)]));
                        queue.push_back(s);
                    }
                }
            }
        }
    }

    let mut r6inv: HashMap<&str, Why> = HashMap::new();
    if on(RuleId::R6) {
        let ancestors = |start: usize| {
            let mut seen = HashSet::from([start]);
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(_, p) in &sb_parents[v] {
                    if seen.insert(p) {
                        stack.push(p);
                    }
                }
            }
            seen
        };
        for (j, r) in rels.iter().enumerate() {
            if r.predicate != Predicate::ConflictsWith || !sv(j) {
                continue;
            }
            let (Some(c1), Some(c2)) = (ix.elem(&r.subject), ix.elem(&r.object)) else { continue };
            let anc: Vec<(usize, HashSet<usize>)> = ctx_by_object[c2]
                .iter()
                .map(|&(j2, a2)| (j2, ancestors(a2)))
                .collect();
            for &(j1, a1) in &ctx_by_object[c1] {
                let up1 = ancestors(a1);
                for (j2, up2) in &anc {
                    if up1.iter().any(|x| up2.contains(x)) {
                        diagnostics.push(diag(
                            Severity::Warning,
                            RuleId::R6,
                            vec![rels[j1].id.clone(), rels[*j2].id.clone(), r.id.clone()],
                            format!(
                                "conflicting contexts `{}` and `{}` are attached within one support closure",
                                r.subject, r.object
                            ),
                        ));
                        for k in [j1, *j2] {
                            let id = rels[k].id.as_str();
                            if !r6inv.contains_key(id) && !asserted_rel_invalid(id) {
                                budget.tick()?;
                                r6inv.insert(id, (RuleId::R6, vec![Premise::record(r.id.clone())]));
                            }
                        }
                    }
                }
            }
        }
    }

    // ---- stratum 2: truth ----
    let asserted_false = |i: usize| ix.elems[i].flags.truth.is_false();
    let mut truth_t: HashMap<usize, Why> = HashMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, e) in ix.elems.iter().enumerate() {
        if e.flags.truth.is_true() {
            truth_t.insert(i, (RuleId::R7, vec![]));
            queue.push_back(i);
        } else if on(RuleId::R7) && e.kind == ElementKind::Solution && !asserted_false(i) {
            let hit = refs[i].iter().find(|(_, a)| {
                ix.conts
                    .get(a)
                    .is_some_and(|c| c.kind == ContainerKind::Artefact && c.flags.valid.is_true())
            });
            if let Some(&(j, a)) = hit {
                budget.tick()?;
                truth_t.insert(
                    i,
                    (RuleId::R7, vec![Premise::record(rels[j].id.clone()), Premise::flag(a, Flag::Valid)]),
                );
                queue.push_back(i);
            }
        }
    }
    if on(RuleId::R7) {
        let mut pending: Vec<usize> = sb_children.iter().map(Vec::len).collect();
        while let Some(c) = queue.pop_front() {
            for &(_, p) in &sb_parents[c] {
                pending[p] -= 1;
                if pending[p] == 0
                    && !truth_t.contains_key(&p)
                    && matches!(ix.elems[p].kind, ElementKind::Goal | ElementKind::Strategy)
                    && !asserted_false(p)
                {
                    budget.tick()?;
                    let premises = sb_children[p]
                        .iter()
                        .flat_map(|&(j, k)| {
                            [Premise::record(rels[j].id.clone()), Premise::flag(ix.elems[k].id.clone(), Flag::Truth)]
                        })
                        .collect();
                    truth_t.insert(p, (RuleId::R7, premises));
                    queue.push_back(p);
                }
            }
        }
    }

    let top_level_final = |i: usize| ix.elems[i].flags.top_level || top_level.contains_key(&i);
    let undeveloped_final = |i: usize| ix.elems[i].flags.undeveloped || undeveloped.contains_key(&i);

    // ---- stratum 3: patterns ----
    let mut pattern_flags: BTreeMap<&str, (Flag, Why)> = BTreeMap::new();
    if on(RuleId::R12) {
        for &cid in &ix.cont_order {
            let c = ix.conts[cid];
            if !matches!(c.kind, ContainerKind::Argument | ContainerKind::Template) {
                continue;
            }
            let inst_edges: Vec<(usize, &str)> = ix
                .case
                .relationships
                .iter()
                .enumerate()
                .filter(|(j, r)| {
                    r.predicate == Predicate::Instantiates
                        && r.subject == cid
                        && sv(*j)
                        && ix.conts.get(r.object.as_str()).is_some_and(|p| p.kind == ContainerKind::Pattern)
                })
                .map(|(j, r)| (j, r.object.as_str()))
                .collect();
            if inst_edges.is_empty() {
                continue;
            }
            let premises: Vec<Premise> =
                inst_edges.iter().map(|&(j, _)| Premise::record(rels[j].id.clone())).collect();
            let members: Vec<usize> = ix.closure(cid).into_iter().filter_map(|m| ix.elem(m)).collect();
            let mut violated = members.iter().any(|&m| has_placeholder(&ix.elems[m].statement));
            for &(_, pid) in &inst_edges {
                violated |= pattern_violated(&ix, rels, &sv, &members, pid);
            }
            let flag = if violated {
                diagnostics.push(diag(
                    Severity::Warning,
                    RuleId::R12,
                    vec![cid.to_string()],
                    format!("`{cid}` does not meet its pattern"),
                ));
                Flag::Uninstantiated
            } else if members.iter().any(|&m| undeveloped_final(m)) {
                continue;
            } else {
                Flag::Final
            };
            budget.tick()?;
            pattern_flags.insert(cid, (flag, (RuleId::R12, premises)));
        }
    }

    // ---- strata 4 and 5: doubt closure ----
    let mut doubt: HashMap<usize, Why> = HashMap::new();
    let mut rel_doubt: HashMap<&str, Why> = HashMap::new();
    let mut blocked: HashMap<usize, Vec<Premise>> = HashMap::new();

    enum Ev<'s> {
        Doubt(usize),
        RelDoubt(&'s str),
        Block(usize),
    }
    let mut events: VecDeque<Ev> = VecDeque::new();

    for (i, e) in ix.elems.iter().enumerate() {
        if e.flags.in_doubt() {
            doubt.insert(i, (RuleId::R9, vec![]));
            events.push_back(Ev::Doubt(i));
        }
        if invalid.contains_key(&i) && !blocked.contains_key(&i) {
            blocked.insert(i, vec![Premise::flag(e.id.clone(), Flag::Valid)]);
            events.push_back(Ev::Block(i));
        }
    }
    for &id in &ix.rel_order {
        if ix.rel_first[id].in_doubt {
            rel_doubt.insert(id, (RuleId::R9, vec![]));
            events.push_back(Ev::RelDoubt(id));
        }
    }
    if on(RuleId::R9) {
        for &(j, _, target) in &challenges {
            let why = (RuleId::R9, vec![Premise::record(rels[j].id.clone())]);
            if let Some(t) = ix.elem(target) {
                if let std::collections::hash_map::Entry::Vacant(e) = doubt.entry(t) {
                    budget.tick()?;
                    e.insert(why);
                    events.push_back(Ev::Doubt(t));
                }
            } else if let Some((&rid, _)) = ix.rel_first.get_key_value(target) {
                if !rel_doubt.contains_key(rid) {
                    budget.tick()?;
                    rel_doubt.insert(rid, why);
                    events.push_back(Ev::RelDoubt(rid));
                }
            }
        }
    }

    // Confidence links: (relationship, argument, link record).
    let mut confidence: Vec<(&str, &str, &str)> = Vec::new();
    if on(RuleId::R13) {
        for (j, r) in rels.iter().enumerate() {
            if let Some(a) = &r.confidence_argument {
                confidence.push((r.id.as_str(), a.as_str(), r.id.as_str()));
            }
            if r.predicate == Predicate::AssociatedWith && sv(j) && ix.rel_first.contains_key(r.subject.as_str()) {
                confidence.push((r.subject.as_str(), r.object.as_str(), r.id.as_str()));
            }
        }
    }
    let top_goals: HashMap<&str, Vec<usize>> = confidence
        .iter()
        .map(|&(_, a, _)| {
            let goals = ix
                .closure(a)
                .into_iter()
                .filter_map(|m| ix.elem(m))
                .filter(|&g| ix.elems[g].kind == ElementKind::Goal && top_level_final(g))
                .collect();
            (a, goals)
        })
        .collect();

    let mut rounds = 0;
    loop {
        rounds += 1;
        while let Some(ev) = events.pop_front() {
            match ev {
                Ev::Doubt(c) => {
                    if let std::collections::hash_map::Entry::Vacant(e) = blocked.entry(c) {
                        e.insert(vec![Premise::flag(ix.elems[c].id.clone(), Flag::InDoubt)]);
                        events.push_back(Ev::Block(c));
                    }
                    if on(RuleId::R10) {
                        for &(j, p) in &sb_parents[c] {
                            if let std::collections::hash_map::Entry::Vacant(e) = doubt.entry(p) {
                                budget.tick()?;
                                e.insert((
                                        RuleId::R10,
                                        vec![
                                            Premise::record(rels[j].id.clone()),
                                            Premise::flag(ix.elems[c].id.clone(), Flag::InDoubt),
                                        ],
                                    ));
                                events.push_back(Ev::Doubt(p));
                            }
                        }
                    }
                }
                Ev::Block(c) => {
                    if on(RuleId::R10) {
                        for &(j, p) in &sb_parents[c] {
                            if let std::collections::hash_map::Entry::Vacant(e) = blocked.entry(p) {
                                budget.tick()?;
                                e.insert(vec![Premise::record(rels[j].id.clone()), Premise::record(ix.elems[c].id.clone())]);
                                events.push_back(Ev::Block(p));
                            }
                        }
                    }
                }
                Ev::RelDoubt(rid) => {
                    if on(RuleId::R10) {
                        for &j in &ix.rels_by_id[rid] {
                            if let Some(s) = ix.elem(&rels[j].subject) {
                                if let std::collections::hash_map::Entry::Vacant(e) = doubt.entry(s) {
                                    budget.tick()?;
                                    e.insert((RuleId::R10, vec![Premise::flag(rid, Flag::InDoubt)]));
                                    events.push_back(Ev::Doubt(s));
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut fresh = false;
        for &(rid, a, link) in &confidence {
            if rel_doubt.contains_key(rid) {
                continue;
            }
            let failing = top_goals[a].iter().copied().find(|&g| {
                asserted_false(g)
                    || doubt.contains_key(&g)
                    || (blocked.contains_key(&g) && truth_t.contains_key(&g))
            });
            if let Some(g) = failing {
                budget.tick()?;
                let rid: &str = ix.rel_first.get_key_value(rid).map(|(k, _)| *k).unwrap_or(rid);
                rel_doubt.insert(
                    rid,
                    (RuleId::R13, vec![Premise::record(link), Premise::flag(ix.elems[g].id.clone(), Flag::Truth)]),
                );
                events.push_back(Ev::RelDoubt(rid));
                fresh = true;
            }
        }
        if !fresh {
            break;
        }
    }

    // ---- stratum 6: defeat ----
    let mut defeated: HashMap<usize, Why> = HashMap::new();
    if on(RuleId::R9) {
        for &(j, d, target) in &challenges {
            let Some(t) = ix.elem(target) else { continue };
            if truth_t.contains_key(&d) && !blocked.contains_key(&d) && !defeated.contains_key(&t) {
                budget.tick()?;
                defeated.insert(
                    t,
                    (
                        RuleId::R9,
                        vec![Premise::record(rels[j].id.clone()), Premise::flag(ix.elems[d].id.clone(), Flag::Truth)],
                    ),
                );
            }
        }
    }

    // ---- readout ----
    let mut assignment = FlagAssignment::default();
    let mut traces: Vec<(Trace, Tri, Tri)> = Vec::new();
    let record = |id: &str, old: &FlagSet, new: &FlagSet, why: &HashMap<Flag, Why>, traces: &mut Vec<(Trace, Tri, Tri)>| {
        for &flag in Flag::ALL {
            if old.get(flag) != new.get(flag) {
                let (rule, premises) = why.get(&flag).cloned().unwrap_or_else(|| {
                    debug_assert!(false, "no derivation for {id}.{flag}");
                    (RuleId::R9, vec![])
                });
                let t = Trace {
                    record: id.to_string(),
                    flag,
                    rule,
                    premises,
                };
                traces.push((t, old.get(flag), new.get(flag)));
            }
        }
    };

    for (i, e) in ix.elems.iter().enumerate() {
        let old = e.flags;
        let mut f = old;
        let mut why: HashMap<Flag, Why> = HashMap::new();
        if let Some(w) = invalid.get(&i) {
            f.valid = Tri::False;
            why.insert(Flag::Valid, w.clone());
        }
        if let Some(w) = doubt.get(&i) {
            f.set_in_doubt(true);
            why.insert(Flag::InDoubt, w.clone());
        }
        if let Some(w) = defeated.get(&i) {
            f.set_defeated(true);
            why.insert(Flag::Defeated, w.clone());
        }
        if !old.truth.is_false() {
            if f.defeated() {
                f.truth = Tri::False;
                why.insert(Flag::Truth, (RuleId::R9, vec![Premise::flag(e.id.clone(), Flag::Defeated)]));
            } else if f.in_doubt() {
                f.truth = Tri::False;
                why.insert(Flag::Truth, (RuleId::R10, vec![Premise::flag(e.id.clone(), Flag::InDoubt)]));
            } else if let Some(t) = truth_t.get(&i) {
                if let Some(b) = blocked.get(&i) {
                    f.truth = Tri::False;
                    why.insert(Flag::Truth, (RuleId::R10, b.clone()));
                } else {
                    f.truth = Tri::True;
                    why.insert(Flag::Truth, t.clone());
                }
            }
        }
        if let Some(w) = top_level.get(&i) {
            f.top_level = true;
            why.insert(Flag::TopLevel, w.clone());
        }
        if let Some(w) = undeveloped.get(&i) {
            f.undeveloped = true;
            why.insert(Flag::Undeveloped, w.clone());
        }
        record(&e.id, &old, &f, &why, &mut traces);
        assignment.elements.insert(e.id.clone(), f);
    }

    for &cid in &ix.cont_order {
        let old = ix.conts[cid].flags;
        let mut f = old;
        let mut why = HashMap::new();
        if let Some((flag, w)) = pattern_flags.get(cid) {
            f.set(*flag, Tri::True);
            why.insert(*flag, w.clone());
        }
        record(cid, &old, &f, &why, &mut traces);
        assignment.containers.insert(cid.to_string(), f);
    }

    let mut invalidated = Vec::new();
    for &rid in &ix.rel_order {
        let r = ix.rel_first[rid];
        let old = RelFlags {
            valid: r.valid,
            in_doubt: r.in_doubt,
        };
        let mut f = old;
        if let Some((rule, premises)) = einv.get(rid).or_else(|| r6inv.get(rid)) {
            f.valid = Tri::False;
            invalidated.push(rid.to_string());
            let t = Trace {
                record: rid.to_string(),
                flag: Flag::Valid,
                rule: *rule,
                premises: premises.clone(),
            };
            traces.push((t, old.valid, Tri::False));
        }
        if let Some((rule, premises)) = rel_doubt.get(rid) {
            if !old.in_doubt {
                f.in_doubt = true;
                let t = Trace {
                    record: rid.to_string(),
                    flag: Flag::InDoubt,
                    rule: *rule,
                    premises: premises.clone(),
                };
                traces.push((t, Tri::False, Tri::True));
            }
        }
        assignment.relationships.insert(rid.to_string(), f);
    }

    traces.sort_by(|a, b| (&a.0.record, a.0.flag).cmp(&(&b.0.record, b.0.flag)));
    let deltas: Vec<FlagDelta> = traces
        .iter()
        .map(|(t, old, new)| FlagDelta {
            record: t.record.clone(),
            flag: t.flag,
            old: *old,
            new: *new,
            rule: t.rule,
        })
        .collect();
    let traces: Vec<Trace> = traces.into_iter().map(|(t, _, _)| t).collect();

    let mut overlays = BTreeMap::new();
    let triggered: BTreeSet<String> = deltas.iter().map(|d| d.record.clone()).collect();
    overlays.insert("rule-triggered".to_string(), triggered.into_iter().collect());
    let mut closure: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<usize> = (0..n).filter(|&i| assignment.elements[&ix.elems[i].id].defeated()).collect();
    while let Some(v) = stack.pop() {
        if closure.insert(v) {
            stack.extend(sb_parents[v].iter().map(|&(_, p)| p));
        }
    }
    let mut defeated_closure: Vec<String> = closure.into_iter().map(|i| ix.elems[i].id.clone()).collect();
    defeated_closure.sort();
    overlays.insert("defeated-closure".to_string(), defeated_closure);

    diagnostics.sort();
    diagnostics.dedup();
    invalidated.sort();

    Ok(InferenceResult {
        deltas,
        invalidated,
        diagnostics,
        overlays,
        converged: true,
        iterations: rounds,
        assignment,
        traces,
    })
}

/// Checks one instance against one pattern. `members` are the instance's
/// element indexes.
fn pattern_violated(
    ix: &Index,
    rels: &[Relationship],
    sv: &dyn Fn(usize) -> bool,
    members: &[usize],
    pattern: &str,
) -> bool {
    let pmembers: BTreeSet<&str> = ix
        .closure(pattern)
        .into_iter()
        .filter(|m| ix.elem(m).is_some())
        .collect();
    let inst: HashSet<usize> = members.iter().copied().collect();
    // images[e] = pattern elements e instantiates
    let mut images: HashMap<usize, HashSet<&str>> = HashMap::new();
    for (j, r) in rels.iter().enumerate() {
        if r.predicate == Predicate::Instantiates && sv(j) && pmembers.contains(r.object.as_str()) {
            if let Some(e) = ix.elem(&r.subject).filter(|e| inst.contains(e)) {
                images.entry(e).or_default().insert(r.object.as_str());
            }
        }
    }
    let maps_to = |e: usize, pe: &str| images.get(&e).is_some_and(|s| s.contains(pe));

    let prels: Vec<&Relationship> = rels
        .iter()
        .enumerate()
        .filter(|(j, r)| {
            sv(*j)
                && !matches!(r.predicate, Predicate::Instantiates | Predicate::Contains)
                && pmembers.contains(r.subject.as_str())
                && pmembers.contains(r.object.as_str())
        })
        .map(|(_, r)| r)
        .collect();

    let count = |s: usize, pr: &Relationship| -> u32 {
        rels.iter()
            .enumerate()
            .filter(|(j, r)| {
                sv(*j)
                    && r.subject == ix.elems[s].id
                    && r.predicate == pr.predicate
                    && ix
                        .elem(&r.object)
                        .is_some_and(|o| inst.contains(&o) && maps_to(o, &pr.object))
            })
            .count() as u32
    };

    let mut groups: BTreeMap<(&str, Predicate, &str), Vec<&Relationship>> = BTreeMap::new();
    for pr in &prels {
        match &pr.multiplicity {
            Some(m) if m.indicator == MultiplicityIndicator::Choice => {
                let g = m.group.as_deref().unwrap_or(pr.id.as_str());
                groups
                    .entry((pr.subject.as_str(), pr.predicate, g))
                    .or_default()
                    .push(pr);
            }
            m => {
                let (min, max) = m.as_ref().map(|m| (m.min, m.max)).unwrap_or((1, None));
                for &s in members {
                    if maps_to(s, &pr.subject) {
                        let c = count(s, pr);
                        if c < min || max.is_some_and(|x| c > x) {
                            return true;
                        }
                    }
                }
            }
        }
    }
    for ((ps, _, _), mut alts) in groups {
        alts.sort_by(|a, b| a.id.cmp(&b.id));
        let m = alts[0].multiplicity.as_ref().expect("choice alternative");
        for &s in members {
            if maps_to(s, ps) {
                let realized = alts.iter().filter(|pr| count(s, pr) > 0).count() as u32;
                if !m.admits(realized) {
                    return true;
                }
            }
        }
    }
    let roots = pmembers
        .iter()
        .filter(|pe| !prels.iter().any(|pr| pr.object == **pe));
    for pe in roots {
        if !members.iter().any(|&e| maps_to(e, pe)) {
            return true;
        }
    }
    false
}
