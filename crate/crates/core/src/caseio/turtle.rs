//! Turtle-subset interchange format.
//!
//! Supported syntax: `@prefix` declarations, `a`, `;` predicate lists, `,`
//! object lists, IRIs, prefixed names, quoted literals with an optional
//! datatype, bare booleans and integers, and `#` comments. Blank nodes and
//! collections are not supported.
//!
//! Reified relationships are nodes typed `gsn:Relationship` (or
//! `gsn:RelationshipWithConfidence`) carrying `rdf:subject`, `rdf:predicate`
//! and `rdf:object`. Unset tri-state flags and false boolean flags emit no
//! triple.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{format_timestamp, parse_timestamp, resolve_references, CaseDocument, CaseIoError};
use crate::model::{
    AwayTarget, Case, Container, ContainerKind, Element, ElementKind, Flag, FlagSet, Multiplicity,
    MultiplicityIndicator, Predicate, Relationship, ViewType,
};
use crate::vocab::{CASE_NS, GSN_NS, RDF_NS, SCHEMA_NS, XSD_NS};

const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
const XSD_DATETIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Prefix,
    PName(String, String),
    Iri(String),
    A,
    Str(String),
    Caret2,
    Int(i64),
    Bool(bool),
    Dot,
    Semi,
    Comma,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn err(&self, message: impl Into<String>) -> CaseIoError {
        CaseIoError::Syntax {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, CaseIoError> {
        let mut out = Vec::new();
        loop {
            while let Some(&c) = self.chars.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '#' {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(&c) = self.chars.peek() else {
                return Ok(out);
            };
            let tok = match c {
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '^' => {
                    self.bump();
                    if self.bump() != Some('^') {
                        return Err(self.err("expected `^^`"));
                    }
                    Tok::Caret2
                }
                '<' => {
                    self.bump();
                    let mut iri = String::new();
                    loop {
                        match self.bump() {
                            Some('>') => break,
                            Some(c) if c.is_whitespace() => {
                                return Err(self.err("whitespace in IRI"))
                            }
                            Some(c) => iri.push(c),
                            None => return Err(self.err("unterminated IRI")),
                        }
                    }
                    Tok::Iri(iri)
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            Some('"') => break,
                            Some('\\') => match self.bump() {
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some('r') => s.push('\r'),
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                _ => return Err(self.err("bad escape in string")),
                            },
                            Some('\n') | None => return Err(self.err("unterminated string")),
                            Some(c) => s.push(c),
                        }
                    }
                    Tok::Str(s)
                }
                '@' => {
                    self.bump();
                    let word = self.word();
                    if word != "prefix" {
                        return Err(self.err(format!("unsupported directive `@{word}`")));
                    }
                    Tok::Prefix
                }
                c if c == '-' || c == '+' || c.is_ascii_digit() => {
                    let word = self.word();
                    Tok::Int(
                        word.parse()
                            .map_err(|_| self.err(format!("bad number `{word}`")))?,
                    )
                }
                c if c.is_alphanumeric() || c == ':' || c == '_' => {
                    let word = self.word();
                    match word.as_str() {
                        "a" => Tok::A,
                        "true" => Tok::Bool(true),
                        "false" => Tok::Bool(false),
                        w => match w.split_once(':') {
                            Some((p, l)) => Tok::PName(p.to_string(), l.to_string()),
                            None => return Err(self.err(format!("unexpected word `{w}`"))),
                        },
                    }
                }
                other => return Err(self.err(format!("unexpected character `{other}`"))),
            };
            out.push((tok, line, col));
        }
    }

    /// Reads a run of name characters. A trailing `.` ends a statement, so
    /// dots are only kept when followed by another name character.
    fn word(&mut self) -> String {
        let mut w = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | ':' | '%' | '+') {
                w.push(c);
                self.bump();
            } else if c == '.' {
                let mut look = self.chars.clone();
                look.next();
                match look.peek() {
                    Some(&n) if n.is_alphanumeric() || n == '_' => {
                        w.push(c);
                        self.bump();
                    }
                    _ => break,
                }
            } else {
                break;
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Object {
    Iri(String),
    Literal { lexical: String, datatype: Option<String> },
}

struct Triple {
    subject: String,
    predicate: String,
    object: Object,
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    prefixes: HashMap<String, String>,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> CaseIoError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| (t.1, t.2))
            .unwrap_or((1, 1));
        CaseIoError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<Tok, CaseIoError> {
        let t = self
            .toks
            .get(self.pos)
            .map(|t| t.0.clone())
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn expect(&mut self, tok: Tok) -> Result<(), CaseIoError> {
        let got = self.next()?;
        if got == tok {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected {tok:?}, found {got:?}")))
        }
    }

    fn expand(&self, prefix: &str, local: &str) -> Result<String, CaseIoError> {
        self.prefixes
            .get(prefix)
            .map(|ns| format!("{ns}{local}"))
            .ok_or_else(|| CaseIoError::UnknownPredicateIri(format!("{prefix}:{local}")))
    }

    fn iri(&mut self) -> Result<String, CaseIoError> {
        match self.next()? {
            Tok::Iri(i) => Ok(i),
            Tok::PName(p, l) => self
                .expand(&p, &l)
                .map_err(|_| self.err(format!("undeclared prefix `{p}:`"))),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected IRI, found {other:?}")))
            }
        }
    }

    fn triples(mut self) -> Result<Vec<Triple>, CaseIoError> {
        let mut out = Vec::new();
        while self.peek().is_some() {
            if self.peek() == Some(&Tok::Prefix) {
                self.pos += 1;
                let (p, l) = match self.next()? {
                    Tok::PName(p, l) => (p, l),
                    _ => return Err(self.err("expected prefix name")),
                };
                if !l.is_empty() {
                    return Err(self.err("prefix name must end with `:`"));
                }
                let ns = match self.next()? {
                    Tok::Iri(i) => i,
                    _ => return Err(self.err("expected namespace IRI")),
                };
                self.expect(Tok::Dot)?;
                self.prefixes.insert(p, ns);
                continue;
            }
            let subject = self.iri()?;
            loop {
                let predicate = match self.peek() {
                    Some(Tok::A) => {
                        self.pos += 1;
                        RDF_TYPE.to_string()
                    }
                    Some(Tok::PName(p, l)) => {
                        let (p, l) = (p.clone(), l.clone());
                        self.pos += 1;
                        self.expand(&p, &l)?
                    }
                    _ => self.iri()?,
                };
                loop {
                    let object = self.object()?;
                    out.push(Triple {
                        subject: subject.clone(),
                        predicate: predicate.clone(),
                        object,
                    });
                    if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                match self.next()? {
                    Tok::Dot => break,
                    Tok::Semi => {
                        if self.peek() == Some(&Tok::Dot) {
                            self.pos += 1;
                            break;
                        }
                    }
                    other => {
                        self.pos -= 1;
                        return Err(self.err(format!("expected `;` or `.`, found {other:?}")));
                    }
                }
            }
        }
        Ok(out)
    }

    fn object(&mut self) -> Result<Object, CaseIoError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                let datatype = if self.peek() == Some(&Tok::Caret2) {
                    self.pos += 1;
                    Some(self.iri()?)
                } else {
                    None
                };
                Ok(Object::Literal {
                    lexical: s,
                    datatype,
                })
            }
            Some(Tok::Int(i)) => {
                self.pos += 1;
                Ok(Object::Literal {
                    lexical: i.to_string(),
                    datatype: Some(XSD_INTEGER.into()),
                })
            }
            Some(Tok::Bool(b)) => {
                self.pos += 1;
                Ok(Object::Literal {
                    lexical: b.to_string(),
                    datatype: Some(XSD_BOOLEAN.into()),
                })
            }
            _ => Ok(Object::Iri(self.iri()?)),
        }
    }
}

/// Accumulated facts about one subject node.
#[derive(Default)]
struct Node {
    types: Vec<String>,
    props: Vec<(String, Object)>,
}

fn bad(property: &str, object: &Object) -> CaseIoError {
    CaseIoError::BadLiteralType {
        property: property.to_string(),
        literal: match object {
            Object::Iri(i) => format!("<{i}>"),
            Object::Literal { lexical, datatype } => match datatype {
                Some(d) => format!("\"{lexical}\"^^<{d}>"),
                None => format!("\"{lexical}\""),
            },
        },
    }
}

fn as_string(property: &str, o: &Object) -> Result<String, CaseIoError> {
    match o {
        Object::Literal { lexical, datatype } if datatype.as_deref().is_none_or(|d| d == XSD_STRING) => {
            Ok(lexical.clone())
        }
        _ => Err(bad(property, o)),
    }
}

fn as_bool(property: &str, o: &Object) -> Result<bool, CaseIoError> {
    match o {
        Object::Literal {
            lexical,
            datatype: Some(d),
        } if d == XSD_BOOLEAN => match lexical.as_str() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(bad(property, o)),
        },
        _ => Err(bad(property, o)),
    }
}

fn as_u32(property: &str, o: &Object) -> Result<u32, CaseIoError> {
    match o {
        Object::Literal {
            lexical,
            datatype: Some(d),
        } if d == XSD_INTEGER => lexical.parse().map_err(|_| bad(property, o)),
        _ => Err(bad(property, o)),
    }
}

fn as_iri<'o>(property: &str, o: &'o Object) -> Result<&'o str, CaseIoError> {
    match o {
        Object::Iri(i) => Ok(i),
        _ => Err(bad(property, o)),
    }
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(b) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn local_id(iri: &str) -> String {
    match iri.strip_prefix(CASE_NS) {
        Some(local) => percent_decode(local),
        None => iri.to_string(),
    }
}

fn gsn_local(iri: &str) -> Option<&str> {
    iri.strip_prefix(GSN_NS)
}

/// Parses the Turtle subset into a resolved document.
pub fn parse_interchange(text: &str) -> Result<CaseDocument, CaseIoError> {
    let toks = Lexer::new(text).tokens()?;
    let triples = Parser {
        toks,
        pos: 0,
        prefixes: HashMap::new(),
    }
    .triples()?;

    let mut order: Vec<String> = Vec::new();
    let mut nodes: HashMap<String, Node> = HashMap::new();
    for t in triples {
        let node = nodes.entry(t.subject.clone()).or_insert_with(|| {
            order.push(t.subject.clone());
            Node::default()
        });
        if t.predicate == RDF_TYPE {
            let class = as_iri("rdf:type", &t.object)?;
            node.types.push(class.to_string());
        } else {
            node.props.push((t.predicate, t.object));
        }
    }

    // Identifier of every node, from schema:identifier or the IRI itself.
    let mut ids: HashMap<String, String> = HashMap::new();
    for iri in &order {
        let node = &nodes[iri];
        let mut id = local_id(iri);
        for (p, o) in &node.props {
            if p == &format!("{SCHEMA_NS}identifier") {
                id = as_string("schema:identifier", o)?;
            }
        }
        ids.insert(iri.clone(), id);
    }
    let id_of = |iri: &str| ids.get(iri).cloned().unwrap_or_else(|| local_id(iri));

    let mut root: Option<Container> = None;
    let mut elements = Vec::new();
    let mut relationships = Vec::new();
    let mut containers = Vec::new();
    let mut plain_edges: Vec<(String, Predicate, String)> = Vec::new();

    for iri in &order {
        let node = &nodes[iri];
        let id = id_of(iri);
        let class = node.types.iter().filter_map(|t| gsn_local(t)).next();
        let is_relationship = matches!(class, Some("Relationship" | "RelationshipWithConfidence"))
            || node.props.iter().any(|(p, _)| p == &format!("{RDF_NS}subject"));

        if is_relationship {
            relationships.push(relationship_from(&id, node, &id_of)?);
            continue;
        }
        let Some(class) = class else {
            // An untyped node that only carries plain edges.
            if node.props.iter().all(|(p, _)| {
                gsn_local(p).and_then(|l| l.parse::<Predicate>().ok()).is_some()
            }) {
                for (p, o) in &node.props {
                    let pred: Predicate = gsn_local(p).unwrap().parse().unwrap();
                    plain_edges.push((id.clone(), pred, id_of(as_iri(pred.as_str(), o)?)));
                }
                continue;
            }
            return Err(CaseIoError::InvalidValue(format!("node `{id}` has no gsn type")));
        };
        if let Ok(kind) = class.parse::<ElementKind>() {
            let mut e = Element::new(id.clone(), kind, String::new());
            let mut away_element = None;
            let mut away_module = None;
            for (p, o) in &node.props {
                if p == &format!("{SCHEMA_NS}identifier") {
                    continue;
                }
                let Some(local) = gsn_local(p) else {
                    return Err(CaseIoError::UnknownPredicateIri(p.clone()));
                };
                if let Ok(flag) = local.parse::<Flag>() {
                    e.flags.set(flag, as_bool(local, o)?.into());
                    continue;
                }
                if let Ok(pred) = local.parse::<Predicate>() {
                    plain_edges.push((id.clone(), pred, id_of(as_iri(local, o)?)));
                    continue;
                }
                match local {
                    "statement" => e.statement = as_string(local, o)?,
                    "published" => {
                        e.published = Some(match o {
                            Object::Literal {
                                lexical,
                                datatype: Some(d),
                            } if d == XSD_DATETIME => {
                                parse_timestamp(lexical).ok_or_else(|| bad(local, o))?
                            }
                            _ => return Err(bad(local, o)),
                        })
                    }
                    "module" => e.module = Some(id_of(as_iri(local, o)?)),
                    "awayElement" => away_element = Some(as_string(local, o)?),
                    "awayModule" => away_module = Some(as_string(local, o)?),
                    "annotation" => {
                        let s = as_string(local, o)?;
                        let (k, v) = s.split_once('=').ok_or_else(|| bad(local, o))?;
                        e.metadata.insert(k.to_string(), v.to_string());
                    }
                    _ => return Err(CaseIoError::UnknownPredicateIri(p.clone())),
                }
            }
            if let (Some(element), Some(module)) = (away_element, away_module) {
                e.away_target = Some(AwayTarget { element, module });
            }
            elements.push(e);
        } else if let Ok(kind) = class.parse::<ContainerKind>() {
            let mut c = Container::new(id.clone(), kind, String::new());
            c.view_type = None;
            for (p, o) in &node.props {
                if p == &format!("{SCHEMA_NS}identifier") {
                    continue;
                }
                if p == &format!("{SCHEMA_NS}name") {
                    c.name = as_string("schema:name", o)?;
                    continue;
                }
                let Some(local) = gsn_local(p) else {
                    return Err(CaseIoError::UnknownPredicateIri(p.clone()));
                };
                if let Ok(flag) = local.parse::<Flag>() {
                    c.flags.set(flag, as_bool(local, o)?.into());
                    continue;
                }
                match local {
                    "contains" => c.members.push(id_of(as_iri(local, o)?)),
                    "viewType" => {
                        let v = as_string(local, o)?;
                        c.view_type = Some(v.parse::<ViewType>().map_err(|_| bad(local, o))?);
                    }
                    "instantiationData" => c.instantiation_data = Some(id_of(as_iri(local, o)?)),
                    "artefactUri" => c.artefact_uri = Some(as_string(local, o)?),
                    other => {
                        if let Ok(pred) = other.parse::<Predicate>() {
                            plain_edges.push((id.clone(), pred, id_of(as_iri(other, o)?)));
                        } else {
                            return Err(CaseIoError::UnknownPredicateIri(p.clone()));
                        }
                    }
                }
            }
            if kind == ContainerKind::AssuranceCase {
                if root.is_some() {
                    return Err(CaseIoError::InvalidValue(
                        "more than one AssuranceCase node".into(),
                    ));
                }
                root = Some(c);
            } else {
                containers.push(c);
            }
        } else {
            return Err(CaseIoError::UnknownKind(class.to_string()));
        }
    }

    let mut case = Case {
        root: root.unwrap_or_else(|| Container::new("case", ContainerKind::AssuranceCase, "case")),
        elements,
        relationships,
        containers,
    };
    for (s, p, o) in plain_edges {
        let rid = format!("{s}-{p}-{o}");
        case.relationships.push(Relationship::new(rid, s, p, o));
    }
    resolve_references(&case)?;
    Ok(CaseDocument::new(case))
}

fn relationship_from(
    id: &str,
    node: &Node,
    id_of: &dyn Fn(&str) -> String,
) -> Result<Relationship, CaseIoError> {
    let mut subject = None;
    let mut predicate = None;
    let mut object = None;
    let mut r = Relationship::new(id, "", Predicate::SupportedBy, "");
    let mut indicator = None;
    let mut min = None;
    let mut max = None;
    let mut group = None;
    for (p, o) in &node.props {
        if p == &format!("{SCHEMA_NS}identifier") {
            continue;
        }
        if let Some(local) = p.strip_prefix(RDF_NS) {
            match local {
                "subject" => subject = Some(id_of(as_iri(local, o)?)),
                "object" => object = Some(id_of(as_iri(local, o)?)),
                "predicate" => {
                    let iri = as_iri(local, o)?;
                    predicate = Some(
                        gsn_local(iri)
                            .and_then(|l| l.parse::<Predicate>().ok())
                            .ok_or_else(|| CaseIoError::UnknownPredicateIri(iri.to_string()))?,
                    );
                }
                _ => return Err(CaseIoError::UnknownPredicateIri(p.clone())),
            }
            continue;
        }
        let Some(local) = gsn_local(p) else {
            return Err(CaseIoError::UnknownPredicateIri(p.clone()));
        };
        match local {
            "valid" => r.valid = as_bool(local, o)?.into(),
            "inDoubt" => r.in_doubt = as_bool(local, o)?,
            "multiplicity" => {
                let s = as_string(local, o)?;
                indicator = Some(
                    s.parse::<MultiplicityIndicator>()
                        .map_err(|_| bad(local, o))?,
                );
            }
            "min" => min = Some(as_u32(local, o)?),
            "max" => max = Some(as_u32(local, o)?),
            "choiceGroup" => group = Some(as_string(local, o)?),
            "assuranceClaimPoint" => r.acp = Some(as_string(local, o)?),
            "associatedWith" => r.confidence_argument = Some(id_of(as_iri(local, o)?)),
            _ => return Err(CaseIoError::UnknownPredicateIri(p.clone())),
        }
    }
    r.subject = subject
        .ok_or_else(|| CaseIoError::InvalidValue(format!("relationship `{id}` lacks rdf:subject")))?;
    r.object = object
        .ok_or_else(|| CaseIoError::InvalidValue(format!("relationship `{id}` lacks rdf:object")))?;
    r.predicate = predicate.ok_or_else(|| {
        CaseIoError::InvalidValue(format!("relationship `{id}` lacks rdf:predicate"))
    })?;
    if let Some(indicator) = indicator {
        r.multiplicity = Some(Multiplicity {
            indicator,
            min: min.unwrap_or(0),
            max,
            group,
        });
    }
    Ok(r)
}

fn node_ref(id: &str) -> String {
    let simple = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !id.starts_with('-');
    if simple {
        format!(":{id}")
    } else {
        let mut enc = String::new();
        for b in id.bytes() {
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
                enc.push(b as char);
            } else {
                let _ = write!(enc, "%{b:02X}");
            }
        }
        format!("<{CASE_NS}{enc}>")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn flag_lines(flags: &FlagSet, lines: &mut Vec<String>) {
    for (flag, value) in flags.set_flags() {
        if let Some(b) = value.as_option() {
            lines.push(format!("gsn:{} {b}", flag.as_str()));
        }
    }
}

fn emit_block(out: &mut String, subject: &str, lines: &[String]) {
    out.push_str(&node_ref(subject));
    for (i, line) in lines.iter().enumerate() {
        out.push_str(if i == 0 { " " } else { " ;\n    " });
        out.push_str(line);
    }
    out.push_str(" .\n\n");
}

fn container_lines(c: &Container) -> Vec<String> {
    let mut lines = vec![
        format!("a gsn:{}", c.kind),
        format!("schema:identifier {}", quote(&c.id)),
        format!("schema:name {}", quote(&c.name)),
    ];
    if let Some(v) = c.view_type {
        lines.push(format!("gsn:viewType {}", quote(v.as_str())));
    }
    flag_lines(&c.flags, &mut lines);
    let mut members = c.members.clone();
    members.sort();
    if !members.is_empty() {
        let refs: Vec<String> = members.iter().map(|m| node_ref(m)).collect();
        lines.push(format!("gsn:contains {}", refs.join(", ")));
    }
    if let Some(d) = &c.instantiation_data {
        lines.push(format!("gsn:instantiationData {}", node_ref(d)));
    }
    if let Some(u) = &c.artefact_uri {
        lines.push(format!("gsn:artefactUri {}", quote(u)));
    }
    lines
}

fn element_lines(e: &Element) -> Vec<String> {
    let mut lines = vec![
        format!("a gsn:{}", e.kind),
        format!("schema:identifier {}", quote(&e.id)),
        format!("gsn:statement {}", quote(&e.statement)),
    ];
    flag_lines(&e.flags, &mut lines);
    if let Some(p) = &e.published {
        lines.push(format!(
            "gsn:published {}^^xsd:dateTime",
            quote(&format_timestamp(p))
        ));
    }
    if let Some(m) = &e.module {
        lines.push(format!("gsn:module {}", node_ref(m)));
    }
    if let Some(a) = &e.away_target {
        lines.push(format!("gsn:awayElement {}", quote(&a.element)));
        lines.push(format!("gsn:awayModule {}", quote(&a.module)));
    }
    for (k, v) in &e.metadata {
        lines.push(format!("gsn:annotation {}", quote(&format!("{k}={v}"))));
    }
    lines
}

fn relationship_lines(r: &Relationship) -> Vec<String> {
    let class = if r.has_confidence() {
        "RelationshipWithConfidence"
    } else {
        "Relationship"
    };
    let mut lines = vec![
        format!("a gsn:{class}"),
        format!("schema:identifier {}", quote(&r.id)),
        format!("rdf:subject {}", node_ref(&r.subject)),
        format!("rdf:predicate gsn:{}", r.predicate),
        format!("rdf:object {}", node_ref(&r.object)),
    ];
    if let Some(b) = r.valid.as_option() {
        lines.push(format!("gsn:valid {b}"));
    }
    if r.in_doubt {
        lines.push("gsn:inDoubt true".into());
    }
    if let Some(m) = &r.multiplicity {
        lines.push(format!("gsn:multiplicity {}", quote(m.indicator.as_str())));
        lines.push(format!("gsn:min {}", m.min));
        if let Some(max) = m.max {
            lines.push(format!("gsn:max {max}"));
        }
        if let Some(g) = &m.group {
            lines.push(format!("gsn:choiceGroup {}", quote(g)));
        }
    }
    if let Some(a) = &r.acp {
        lines.push(format!("gsn:assuranceClaimPoint {}", quote(a)));
    }
    if let Some(a) = &r.confidence_argument {
        lines.push(format!("gsn:associatedWith {}", node_ref(a)));
    }
    lines
}

/// Emits the prefix header and one block per record, root first, then all
/// other records sorted by identifier.
pub fn serialize_interchange(doc: &CaseDocument) -> String {
    let case = doc.case.canonical();
    let mut out = String::new();
    for (p, ns) in [
        ("", CASE_NS),
        ("gsn", GSN_NS),
        ("rdf", RDF_NS),
        ("schema", SCHEMA_NS),
        ("xsd", XSD_NS),
    ] {
        let _ = writeln!(out, "@prefix {p}: <{ns}> .");
    }
    out.push('\n');
    emit_block(&mut out, &case.root.id, &container_lines(&case.root));

    let mut blocks: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
    for c in &case.containers {
        blocks.entry(&c.id).or_default().push(container_lines(c));
    }
    for e in &case.elements {
        blocks.entry(&e.id).or_default().push(element_lines(e));
    }
    for r in &case.relationships {
        blocks.entry(&r.id).or_default().push(relationship_lines(r));
    }
    for (id, group) in blocks {
        for lines in group {
            emit_block(&mut out, id, &lines);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "@prefix : <urn:gsn:case:> .\n@prefix gsn: <https://w3id.org/OntoGSN/ontology#> .\n@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .\n";

    #[test]
    fn goal_triple_maps_to_element() {
        let doc =
            parse_interchange(&format!("{HEADER}:G1 a gsn:Goal ; gsn:statement \"Rocket is safe\" .")).unwrap();
        let g = doc.case.element("G1").unwrap();
        assert_eq!(g.kind, ElementKind::Goal);
        assert_eq!(g.statement, "Rocket is safe");
    }

    #[test]
    fn published_literal() {
        let doc = parse_interchange(&format!(
            "{HEADER}:Sn1 a gsn:Solution ; gsn:statement \"tests\" ;\n gsn:published \"2024-01-01T00:00:00Z\"^^xsd:dateTime ."
        ))
        .unwrap();
        let sn = doc.case.element("Sn1").unwrap();
        assert_eq!(
            sn.published.map(|p| format_timestamp(&p)).as_deref(),
            Some("2024-01-01T00:00:00Z")
        );
    }

    #[test]
    fn unknown_predicate_rejected() {
        let err = parse_interchange(&format!(
            "{HEADER}:G1 a gsn:Goal ; gsn:statement \"x\" ; ex:likes :G1 ."
        ))
        .unwrap_err();
        assert!(matches!(err, CaseIoError::UnknownPredicateIri(_)), "{err:?}");
        let err = parse_interchange(&format!(
            "{HEADER}:G1 a gsn:Goal ; gsn:statement \"x\" ; gsn:likes :G1 ."
        ))
        .unwrap_err();
        assert!(matches!(err, CaseIoError::UnknownPredicateIri(_)), "{err:?}");
    }

    #[test]
    fn bad_literal_type() {
        let err = parse_interchange(&format!(
            "{HEADER}:G1 a gsn:Goal ; gsn:statement \"x\" ; gsn:valid \"yes\" ."
        ))
        .unwrap_err();
        assert!(matches!(err, CaseIoError::BadLiteralType { .. }), "{err:?}");
        let err = parse_interchange(&format!(
            "{HEADER}:G1 a gsn:Goal ; gsn:statement \"x\" ; gsn:published \"yesterday\"^^xsd:dateTime ."
        ))
        .unwrap_err();
        assert!(matches!(err, CaseIoError::BadLiteralType { .. }), "{err:?}");
    }

    #[test]
    fn reified_edge_has_three_component_links() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "g", None).unwrap();
        case.add_element(ElementKind::Strategy, "S1", "s", None).unwrap();
        case.add_edge("supportedBy", "G1", "S1").unwrap();
        let text = serialize_interchange(&CaseDocument::new(case));
        assert!(text.contains(
            ":R1 a gsn:Relationship ;\n    schema:identifier \"R1\" ;\n    rdf:subject :G1 ;\n    rdf:predicate gsn:supportedBy ;\n    rdf:object :S1 ."
        ), "{text}");
    }

    #[test]
    fn unset_flags_emit_nothing() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G1", "g", None).unwrap();
        let text = serialize_interchange(&CaseDocument::new(case));
        for flag in Flag::ALL {
            assert!(!text.contains(&format!("gsn:{} ", flag.as_str())), "{text}");
        }
    }

    #[test]
    fn plain_triple_becomes_relationship() {
        let doc = parse_interchange(&format!(
            "{HEADER}:G1 a gsn:Goal ; gsn:statement \"g\" ; gsn:supportedBy :G2 .\n:G2 a gsn:Goal ; gsn:statement \"h\" ."
        ))
        .unwrap();
        let r = &doc.case.relationships[0];
        assert_eq!((r.subject.as_str(), r.predicate, r.object.as_str()), ("G1", Predicate::SupportedBy, "G2"));
    }

    #[test]
    fn odd_identifiers_round_trip() {
        let mut case = Case::new("C", "c");
        case.add_element(ElementKind::Goal, "G 1/α", "quote \" and \\ here", None)
            .unwrap();
        let doc = CaseDocument::new(case);
        let back = parse_interchange(&serialize_interchange(&doc)).unwrap();
        assert!(back.record_eq(&doc));
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_interchange(&format!("{HEADER}:G1 a gsn:Goal ;\n gsn:statement \"x\" ")).unwrap_err();
        assert!(matches!(err, CaseIoError::Syntax { .. }), "{err:?}");
    }
}
