//! Request handling shared by the HTTP server and the command line.
//!
//! Every operation is expressed as an [`ApiRequest`] and answered by
//! [`Service::handle`], so both front ends produce identical bodies.

pub mod http;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Deserialize;
use serde_json::{json, Map, Value};

use gsn_engine::caseio::{
    delta_from_json, element_from_json, parse_interchange, parse_native, parse_timestamp,
    relationship_from_json, serialize_interchange, serialize_native, CaseDocument, CaseIoError,
};
use gsn_engine::hooks::{
    instantiate_template, scenario_toggle, whatif_invalidate, Hook, HookError, HookEvent, HookRegistry,
};
use gsn_engine::inference::{run_fixpoint, FlagAssignment, InferenceConfig, InferenceError};
use gsn_engine::model::{Case, Flag, FlagSet, Severity};
use gsn_engine::query::{eval_selector, parse_selector, registry, run_cq, QueryError};
use gsn_engine::store::{CaseDelta, Overlay, OverlayOrigin, Snapshot, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub body: String,
}

impl ApiRequest {
    pub fn new(method: Method, path: impl Into<String>) -> Self {
        ApiRequest {
            method,
            path: path.into(),
            query: BTreeMap::new(),
            body: String::new(),
        }
    }

    pub fn body(mut self, body: impl Into<String>) -> Self {
        self.body = body.into();
        self
    }

    pub fn json(self, body: &Value) -> Self {
        self.body(body.to_string())
    }

    pub fn param(mut self, key: &str, value: impl Into<String>) -> Self {
        self.query.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Json(Value),
    /// Raw document text with its media type.
    Text(String, &'static str),
}

impl Body {
    /// The bytes sent on the wire; JSON is pretty-printed with a newline.
    pub fn render(&self) -> String {
        match self {
            Body::Json(v) => serde_json::to_string_pretty(v).expect("json renders") + "\n",
            Body::Text(t, _) => t.clone(),
        }
    }

    pub fn content_type(&self) -> &'static str {
        match self {
            Body::Json(_) => "application/json",
            Body::Text(_, ct) => ct,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Body,
}

impl ApiResponse {
    fn ok(body: Value) -> Self {
        ApiResponse {
            status: 200,
            body: Body::Json(body),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (u16, &'static str, &str) {
        match self {
            ApiError::BadRequest(m) => (400, "bad_request", m),
            ApiError::NotFound(m) => (404, "not_found", m),
            ApiError::Conflict(m) => (409, "conflict", m),
            ApiError::Internal(m) => (500, "internal", m),
        }
    }

    fn into_response(self) -> ApiResponse {
        let (status, kind, message) = self.parts();
        ApiResponse {
            status,
            body: Body::Json(json!({ "error": kind, "message": message })),
        }
    }
}

impl From<CaseIoError> for ApiError {
    fn from(e: CaseIoError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Conflict { .. } | StoreError::DuplicateIdentifier(_) | StoreError::DuplicateTriple(..) => {
                ApiError::Conflict(e.to_string())
            }
            StoreError::Io(_) => ApiError::Internal(e.to_string()),
            _ => ApiError::BadRequest(e.to_string()),
        }
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownQuery(_) => ApiError::NotFound(e.to_string()),
            QueryError::Inference(_) => ApiError::Internal(e.to_string()),
            _ => ApiError::BadRequest(e.to_string()),
        }
    }
}

impl From<HookError> for ApiError {
    fn from(e: HookError) -> Self {
        match e {
            HookError::UnknownTemplate(_) => ApiError::NotFound(e.to_string()),
            HookError::DuplicateHook(_) => ApiError::Conflict(e.to_string()),
            HookError::Store(s) => s.into(),
            HookError::Inference(i) => i.into(),
            HookError::File(_) => ApiError::Internal(e.to_string()),
            _ => ApiError::BadRequest(e.to_string()),
        }
    }
}

type ApiResult = Result<ApiResponse, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpClass {
    Read,
    Update,
}

/// Selector text is a read; a delta document is an update.
pub fn classify_operation(text: &str) -> Result<OpClass, ApiError> {
    if parse_selector(text).is_ok() {
        return Ok(OpClass::Read);
    }
    let value: Value = serde_json::from_str(text)
        .map_err(|_| ApiError::BadRequest("neither a selector nor a delta".into()))?;
    delta_from_json(value)?;
    Ok(OpClass::Update)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    let text = if body.trim().is_empty() { "{}" } else { body };
    serde_json::from_str(text).map_err(|e| ApiError::BadRequest(format!("body: {e}")))
}

fn flag_map(flags: &FlagSet) -> Map<String, Value> {
    let mut out = Map::new();
    for &f in Flag::ALL {
        let v = flags.get(f);
        if f.is_tri_state() {
            if let Some(b) = v.as_option() {
                out.insert(f.to_string(), Value::Bool(b));
            }
        } else if v.is_true() {
            out.insert(f.to_string(), Value::Bool(true));
        }
    }
    out
}

/// Derived flags of every record, omitting unset and false booleans.
pub fn flags_json(a: &FlagAssignment) -> Value {
    let mut out = Map::new();
    for (id, f) in a.elements.iter().chain(a.containers.iter()) {
        out.insert(id.clone(), Value::Object(flag_map(f)));
    }
    for (id, r) in &a.relationships {
        let mut m = Map::new();
        if let Some(b) = r.valid.as_option() {
            m.insert("valid".into(), Value::Bool(b));
        }
        if r.in_doubt {
            m.insert("inDoubt".into(), Value::Bool(true));
        }
        out.insert(id.clone(), Value::Object(m));
    }
    Value::Object(out)
}

fn rows(snap: &Snapshot, ids: &[String]) -> Value {
    let case = snap.case();
    ids.iter()
        .map(|id| {
            let statement = case
                .element(id)
                .map(|e| e.statement.clone())
                .or_else(|| case.container(id).map(|c| c.name.clone()))
                .unwrap_or_default();
            json!({ "id": id, "statement": statement })
        })
        .collect()
}

fn document_value(case: &Case) -> Value {
    let text = serialize_native(&CaseDocument::new(case.clone()));
    serde_json::from_str(&text).expect("native document is json")
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InferBody {
    #[serde(default)]
    explain: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetBody {
    target: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TickBody {
    now: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BindingsBody {
    #[serde(default)]
    bindings: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioBody {
    active: bool,
}

/// Case store plus hook registry behind one writer lock. Reads clone the
/// current snapshot and release the lock before doing any work.
pub struct Service {
    store: Mutex<Store>,
    hooks: Mutex<HookRegistry>,
    hook_path: Option<PathBuf>,
}

impl Service {
    pub fn new(case: Case) -> Self {
        Service {
            store: Mutex::new(Store::new(case)),
            hooks: Mutex::new(HookRegistry::new()),
            hook_path: None,
        }
    }

    /// Attaches a hook file: loaded now if present, rewritten on every
    /// registration.
    pub fn with_hook_file(mut self, path: PathBuf) -> Result<Self, ApiError> {
        if path.exists() {
            let reg = HookRegistry::load(&path).map_err(ApiError::from)?;
            self.hooks = Mutex::new(reg);
        }
        self.hook_path = Some(path);
        Ok(self)
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn hooks(&self) -> MutexGuard<'_, HookRegistry> {
        self.hooks.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.store().snapshot()
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        self.route(req).unwrap_or_else(ApiError::into_response)
    }

    fn route(&self, req: &ApiRequest) -> ApiResult {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        match (req.method, segments.as_slice()) {
            (Method::Get, ["case"]) => self.get_case(),
            (Method::Get, ["case", "export"]) => self.export(req),
            (Method::Post, ["case", "import"]) => self.import(req),
            (Method::Post, ["elements"]) => self.add_element(req),
            (Method::Delete, ["elements", id]) => self.remove_element(req, id),
            (Method::Post, ["edges"]) => self.add_edge(req),
            (Method::Post, ["delta"]) => self.apply_delta(req),
            (Method::Post, ["validate"]) => self.validate(),
            (Method::Post, ["infer"]) => self.infer(req),
            (Method::Get, ["queries"]) => Ok(ApiResponse::ok(json!({ "queries": registry() }))),
            (Method::Post, ["queries", id]) => self.query(req, id),
            (Method::Post, ["selector"]) => self.select(req),
            (Method::Post, ["hooks"]) => self.register_hook(req),
            (Method::Get, ["hooks"]) => Ok(ApiResponse::ok(json!({ "hooks": self.hooks().hooks() }))),
            (Method::Post, ["tick"]) => self.tick(req),
            (Method::Post, ["whatif", "invalidate"]) => self.whatif(req),
            (Method::Post, ["templates", id, "instantiate"]) => self.instantiate(req, id),
            (Method::Post, ["scenarios", id]) => self.scenario(req, id),
            (Method::Get, ["overlays"]) => self.overlays(),
            _ => Err(ApiError::NotFound(format!("no route for {:?} {}", req.method, req.path))),
        }
    }

    fn expected_version(req: &ApiRequest) -> Result<Option<u64>, ApiError> {
        req.query
            .get("expected_version")
            .map(|v| {
                v.parse()
                    .map_err(|_| ApiError::BadRequest(format!("expected_version `{v}`")))
            })
            .transpose()
    }

    /// Commits a delta, then runs commit hooks once over it.
    fn commit(&self, delta: &CaseDelta, expected: Option<u64>) -> Result<Value, ApiError> {
        let mut store = self.store();
        let version = store.commit(delta, expected)?.version();
        let report = self.hooks().fire(&mut store, HookEvent::Commit(delta))?;
        Ok(json!({
            "version": report.version.unwrap_or(version),
            "hooks": report.actions,
        }))
    }

    fn get_case(&self) -> ApiResult {
        let snap = self.snapshot();
        Ok(ApiResponse::ok(json!({
            "version": snap.version(),
            "case": document_value(snap.case()),
        })))
    }

    fn export(&self, req: &ApiRequest) -> ApiResult {
        let snap = self.snapshot();
        let doc = CaseDocument::new(snap.case().clone());
        match req.query.get("format").map(String::as_str).unwrap_or("json") {
            "json" => Ok(ApiResponse {
                status: 200,
                body: Body::Text(serialize_native(&doc), "application/json"),
            }),
            "ttl" => Ok(ApiResponse {
                status: 200,
                body: Body::Text(serialize_interchange(&doc), "text/turtle"),
            }),
            other => Err(ApiError::BadRequest(format!("unknown format `{other}`"))),
        }
    }

    fn import(&self, req: &ApiRequest) -> ApiResult {
        let doc = match req.query.get("format").map(String::as_str).unwrap_or("json") {
            "json" => parse_native(&req.body)?,
            "ttl" => parse_interchange(&req.body)?,
            other => return Err(ApiError::BadRequest(format!("unknown format `{other}`"))),
        };
        let mut store = self.store();
        if let Some(want) = Self::expected_version(req)? {
            if want != store.version() {
                return Err(ApiError::Conflict(format!(
                    "expected version {want}, store is at {}",
                    store.version()
                )));
            }
        }
        let snap = store.replace(doc.case);
        Ok(ApiResponse::ok(json!({ "version": snap.version() })))
    }

    fn add_element(&self, req: &ApiRequest) -> ApiResult {
        let element = element_from_json(parse_body(&req.body)?)?;
        let id = element.id.clone();
        let delta = CaseDelta {
            add_elements: vec![element],
            ..CaseDelta::default()
        };
        let mut out = self.commit(&delta, Self::expected_version(req)?)?;
        out["id"] = json!(id);
        Ok(ApiResponse::ok(out))
    }

    fn remove_element(&self, req: &ApiRequest, id: &str) -> ApiResult {
        if self.snapshot().case().element(id).is_none() {
            return Err(ApiError::NotFound(format!("no element `{id}`")));
        }
        let delta = CaseDelta {
            remove_elements: vec![id.to_string()],
            ..CaseDelta::default()
        };
        Ok(ApiResponse::ok(self.commit(&delta, Self::expected_version(req)?)?))
    }

    /// Accepts a relationship without an id and names it after its triple.
    fn add_edge(&self, req: &ApiRequest) -> ApiResult {
        let mut body: Value = parse_body(&req.body)?;
        if let Some(obj) = body.as_object_mut() {
            if !obj.contains_key("id") {
                let part = |k: &str| obj.get(k).and_then(Value::as_str).unwrap_or("").to_string();
                let id = format!("R-{}-{}-{}", part("subject"), part("predicate"), part("object"));
                obj.insert("id".into(), json!(id));
            }
        }
        let rel = relationship_from_json(body)?;
        let id = rel.id.clone();
        let delta = CaseDelta {
            add_relationships: vec![rel],
            ..CaseDelta::default()
        };
        let mut out = self.commit(&delta, Self::expected_version(req)?)?;
        out["id"] = json!(id);
        Ok(ApiResponse::ok(out))
    }

    fn apply_delta(&self, req: &ApiRequest) -> ApiResult {
        let delta = delta_from_json(parse_body(&req.body)?)?;
        Ok(ApiResponse::ok(self.commit(&delta, Self::expected_version(req)?)?))
    }

    fn validate(&self) -> ApiResult {
        let snap = self.snapshot();
        let result = run_fixpoint(snap.case(), &InferenceConfig::default())?;
        let warnings: Vec<Value> = snap
            .case()
            .completeness_check()
            .into_iter()
            .map(|w| json!({ "container": w.container, "message": w.message }))
            .collect();
        let ok = !result.diagnostics.iter().any(|d| d.severity == Severity::Error);
        Ok(ApiResponse::ok(json!({
            "version": snap.version(),
            "ok": ok,
            "diagnostics": result.diagnostics,
            "completeness": warnings,
        })))
    }

    /// Runs inference without writing derived flags back. Rule overlays
    /// are published for later `GET /overlays`.
    fn infer(&self, req: &ApiRequest) -> ApiResult {
        let body: InferBody = parse_body(&req.body)?;
        let snap = self.snapshot();
        let result = run_fixpoint(snap.case(), &InferenceConfig::default())?;
        let mut out = serde_json::to_value(&result).expect("result serializes");
        out["version"] = json!(snap.version());
        out["flags"] = flags_json(&result.assignment);
        if let Some(spec) = body.explain {
            let (record, flag) = spec
                .rsplit_once(':')
                .ok_or_else(|| ApiError::BadRequest(format!("explain `{spec}`: want id:flag")))?;
            let flag: Flag = flag
                .parse()
                .map_err(|_| ApiError::BadRequest(format!("unknown flag `{flag}`")))?;
            let steps = result
                .explain(record, flag)
                .map_err(|e| ApiError::NotFound(e.to_string()))?;
            out["explanation"] = json!(steps);
        }
        let mut store = self.store();
        if store.version() == snap.version() {
            for (name, members) in &result.overlays {
                let overlay = Overlay::new(&snap, name.clone(), members.iter().cloned(), OverlayOrigin::Rule)?;
                store.set_overlay(overlay)?;
            }
        }
        Ok(ApiResponse::ok(out))
    }

    fn query(&self, req: &ApiRequest, id: &str) -> ApiResult {
        let params: BTreeMap<String, String> = parse_body(&req.body)?;
        let snap = self.snapshot();
        let found = run_cq(&snap, id, &params)?;
        let ids: Vec<String> = found.iter().map(|r| r.id.clone()).collect();
        let mut store = self.store();
        if store.version() == snap.version() {
            store.set_overlay(Overlay::new(&snap, id, ids, OverlayOrigin::Query)?)?;
        }
        Ok(ApiResponse::ok(json!({
            "version": snap.version(),
            "query": id,
            "rows": found,
        })))
    }

    fn select(&self, req: &ApiRequest) -> ApiResult {
        let sel = parse_selector(req.body.trim()).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let snap = self.snapshot();
        let view;
        let target = if sel.reads_flags() {
            let result = run_fixpoint(snap.case(), &InferenceConfig::default())?;
            view = Snapshot::new(result.apply(snap.case()), snap.version());
            &view
        } else {
            &snap
        };
        let ids = eval_selector(target, &sel);
        Ok(ApiResponse::ok(json!({
            "version": snap.version(),
            "selector": sel.to_string(),
            "rows": rows(target, &ids),
        })))
    }

    fn register_hook(&self, req: &ApiRequest) -> ApiResult {
        let hook: Hook = parse_body(&req.body)?;
        let mut hooks = self.hooks();
        let id = hooks.register(hook)?;
        if let Some(path) = &self.hook_path {
            std::fs::write(path, hooks.to_json())
                .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
        }
        Ok(ApiResponse::ok(json!({ "version": self.snapshot().version(), "id": id })))
    }

    fn tick(&self, req: &ApiRequest) -> ApiResult {
        let body: TickBody = parse_body(&req.body)?;
        let now = parse_timestamp(&body.now)
            .ok_or_else(|| ApiError::BadRequest(format!("`{}` is not a timestamp", body.now)))?;
        let mut store = self.store();
        let report = self.hooks().fire(&mut store, HookEvent::Tick(now))?;
        Ok(ApiResponse::ok(json!({
            "version": store.version(),
            "hooks": report.actions,
        })))
    }

    fn whatif(&self, req: &ApiRequest) -> ApiResult {
        let body: TargetBody = parse_body(&req.body)?;
        let snap = self.snapshot();
        let report = whatif_invalidate(&snap, &body.target)?;
        let mut out = serde_json::to_value(report).expect("report serializes");
        out["version"] = json!(snap.version());
        Ok(ApiResponse::ok(out))
    }

    fn instantiate(&self, req: &ApiRequest, id: &str) -> ApiResult {
        let body: BindingsBody = parse_body(&req.body)?;
        let inst = instantiate_template(&self.snapshot(), id, &body.bindings)?;
        let created: Vec<&str> = inst.delta.created_ids();
        let created: Vec<String> = created.into_iter().map(String::from).collect();
        let mut out = self.commit(&inst.delta, Self::expected_version(req)?)?;
        out["created"] = json!(created);
        out["empty_target"] = json!(inst.empty_target);
        Ok(ApiResponse::ok(out))
    }

    fn scenario(&self, req: &ApiRequest, id: &str) -> ApiResult {
        let body: ScenarioBody = parse_body(&req.body)?;
        let delta = scenario_toggle(&self.snapshot(), id, body.active)?;
        Ok(ApiResponse::ok(self.commit(&delta, Self::expected_version(req)?)?))
    }

    fn overlays(&self) -> ApiResult {
        let store = self.store();
        let overlays: Vec<&Overlay> = store.overlays().collect();
        Ok(ApiResponse::ok(json!({
            "version": store.version(),
            "overlays": overlays,
        })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn service() -> Service {
        let text = include_str!("../../core/fixtures/llm.gsn.json");
        Service::new(parse_native(text).unwrap().case)
    }

    fn body(r: &ApiResponse) -> &Value {
        match &r.body {
            Body::Json(v) => v,
            Body::Text(..) => panic!("text body"),
        }
    }

    #[test]
    fn classify() {
        assert_eq!(classify_operation("kind:Goal").unwrap(), OpClass::Read);
        let delta = r#"{"add_elements":[{"id":"G9","kind":"Goal","statement":"x"}]}"#;
        assert_eq!(classify_operation(delta).unwrap(), OpClass::Update);
        assert!(classify_operation("kind:").is_err());
    }

    #[test]
    fn duplicate_element_conflicts() {
        let s = service();
        let req = ApiRequest::new(Method::Post, "/elements")
            .json(&json!({ "id": "G-top", "kind": "Goal", "statement": "again" }));
        assert_eq!(s.handle(&req).status, 409);
        let req = ApiRequest::new(Method::Post, "/elements")
            .json(&json!({ "id": "G-new", "kind": "Goal", "statement": "new" }));
        let r = s.handle(&req);
        assert_eq!(r.status, 200);
        assert_eq!(body(&r)["version"], 1);
    }

    #[test]
    fn stale_version_conflicts() {
        let s = service();
        let add = |v: &str, id: &str| {
            ApiRequest::new(Method::Post, "/elements")
                .param("expected_version", v)
                .json(&json!({ "id": id, "kind": "Goal", "statement": "x" }))
        };
        assert_eq!(s.handle(&add("0", "G-a")).status, 200);
        assert_eq!(s.handle(&add("0", "G-b")).status, 409);
    }

    #[test]
    fn unknown_routes_and_queries() {
        let s = service();
        assert_eq!(s.handle(&ApiRequest::new(Method::Get, "/nope")).status, 404);
        assert_eq!(s.handle(&ApiRequest::new(Method::Post, "/queries/ZZ-01")).status, 404);
        let r = s.handle(&ApiRequest::new(Method::Post, "/selector").body("kind:"));
        assert_eq!(r.status, 400);
    }

    #[test]
    fn reads_echo_version() {
        let s = service();
        let q = ApiRequest::new(Method::Post, "/queries/AE-01");
        let a = s.handle(&q);
        let b = s.handle(&q);
        assert_eq!(a, b);
        assert_eq!(body(&a)["version"], 0);
        let overlays = s.handle(&ApiRequest::new(Method::Get, "/overlays"));
        assert_eq!(body(&overlays)["overlays"][0]["name"], "AE-01");
    }

    #[test]
    fn explain_reports_chain() {
        let s = service();
        let r = s.handle(&ApiRequest::new(Method::Post, "/infer").json(&json!({ "explain": "G-top:inDoubt" })));
        assert_eq!(r.status, 200);
        let steps = body(&r)["explanation"].as_array().unwrap();
        assert_eq!(steps.last().unwrap()["record"], "G-top");
        assert_eq!(body(&r)["flags"]["G-top"]["inDoubt"], true);
    }
}
