//! DTD-style grammars.
//!
//! Text form, one declaration per line, `#` starts a comment:
//!
//! ```text
//! root work-order
//! element work-order (product, routing, parameters, history)
//! element routing (step*)
//! element step EMPTY
//! element note #PCDATA
//! attribute step status (PENDING|COMPLETED) #REQUIRED
//! attribute step entered CDATA #IMPLIED
//! attribute event note CDATA ""
//! ```
//!
//! Multiplicities are `?`, `*`, `+` or none (exactly one). The last field of
//! an `attribute` line is `#REQUIRED`, `#IMPLIED` or a quoted default value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::node::{is_valid_name, XmlDocument, XmlNode};
use super::XmlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplicity {
    One,
    Optional,
    ZeroOrMore,
    OneOrMore,
}

impl Multiplicity {
    fn suffix(self) -> &'static str {
        match self {
            Multiplicity::One => "",
            Multiplicity::Optional => "?",
            Multiplicity::ZeroOrMore => "*",
            Multiplicity::OneOrMore => "+",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentModel {
    Sequence(Vec<(String, Multiplicity)>),
    TextOnly,
    Empty,
}

impl fmt::Display for ContentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContentModel::Empty => f.write_str("EMPTY"),
            ContentModel::TextOnly => f.write_str("#PCDATA"),
            ContentModel::Sequence(items) => {
                let parts: Vec<String> = items.iter().map(|(n, m)| format!("{n}{}", m.suffix())).collect();
                write!(f, "({})", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeKind {
    Cdata,
    Enumerated(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Presence {
    Required,
    Implied,
    Default(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: AttributeKind,
    pub presence: Presence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDecl {
    pub root: String,
    pub elements: BTreeMap<String, ContentModel>,
    pub attributes: BTreeMap<String, Vec<AttributeDecl>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationRule {
    RootMismatch,
    UndeclaredElement,
    ContentModel,
    TextNotAllowed,
    NotEmpty,
    MissingAttribute,
    UndeclaredAttribute,
    EnumValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Slash path from the root, e.g. `/work-order/routing`.
    pub path: String,
    pub element: String,
    pub attribute: Option<String>,
    pub rule: ViolationRule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attribute {
            Some(a) => write!(f, "{}@{}: {:?}: {}", self.path, a, self.rule, self.message),
            None => write!(f, "{}: {:?}: {}", self.path, self.rule, self.message),
        }
    }
}

/// Violations found plus the document with declared defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub document: XmlDocument,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl SchemaDecl {
    pub fn parse(text: &str) -> Result<SchemaDecl, XmlError> {
        let mut root = None;
        let mut elements = BTreeMap::new();
        let mut attributes: BTreeMap<String, Vec<AttributeDecl>> = BTreeMap::new();
        let mut referenced: Vec<(usize, String)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| XmlError::SchemaSyntax { line, message };
            let body = strip_comment(raw);
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let (keyword, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest = rest.trim();
            match keyword {
                "root" => {
                    if !is_valid_name(rest) {
                        return Err(err(format!("bad root name {rest:?}")));
                    }
                    root = Some(rest.to_string());
                }
                "element" => {
                    let (name, model) = rest.split_once(char::is_whitespace).ok_or_else(|| err("expected element NAME MODEL".into()))?;
                    if !is_valid_name(name) {
                        return Err(err(format!("bad element name {name:?}")));
                    }
                    let model = parse_model(model.trim()).map_err(err)?;
                    if let ContentModel::Sequence(items) = &model {
                        referenced.extend(items.iter().map(|(n, _)| (line, n.clone())));
                    }
                    if elements.insert(name.to_string(), model).is_some() {
                        return Err(err(format!("element {name} declared twice")));
                    }
                }
                "attribute" => {
                    let decl = parse_attribute(rest).map_err(err)?;
                    let (element, decl) = decl;
                    let list = attributes.entry(element.clone()).or_default();
                    if list.iter().any(|d| d.name == decl.name) {
                        return Err(err(format!("attribute {}@{} declared twice", element, decl.name)));
                    }
                    list.push(decl);
                }
                other => return Err(err(format!("unknown declaration {other:?}"))),
            }
        }

        let root = root.ok_or(XmlError::SchemaSyntax { line: 0, message: "no root declaration".into() })?;
        if !elements.contains_key(&root) {
            return Err(XmlError::SchemaSyntax { line: 0, message: format!("root {root} is not declared") });
        }
        for (line, name) in referenced {
            if !elements.contains_key(&name) {
                return Err(XmlError::SchemaSyntax { line, message: format!("child {name} is not declared") });
            }
        }
        if let Some(name) = attributes.keys().find(|e| !elements.contains_key(*e)) {
            return Err(XmlError::SchemaSyntax { line: 0, message: format!("attributes for undeclared element {name}") });
        }
        Ok(SchemaDecl { root, elements, attributes })
    }
}

fn strip_comment(raw: &str) -> String {
    // A `#` that does not start one of the keywords begins a comment.
    let mut out = String::new();
    let mut rest = raw;
    while let Some(pos) = rest.find('#') {
        let tail = &rest[pos..];
        if ["#PCDATA", "#REQUIRED", "#IMPLIED"].iter().any(|k| tail.starts_with(k)) {
            out.push_str(&rest[..pos + 1]);
            rest = &rest[pos + 1..];
        } else {
            out.push_str(&rest[..pos]);
            return out;
        }
    }
    out.push_str(rest);
    out
}

fn parse_model(text: &str) -> Result<ContentModel, String> {
    match text {
        "EMPTY" => return Ok(ContentModel::Empty),
        "#PCDATA" => return Ok(ContentModel::TextOnly),
        _ => {}
    }
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| format!("content model {text:?} must be EMPTY, #PCDATA or (...)"))?;
    let mut items = Vec::new();
    for part in inner.split(',').map(str::trim) {
        let (name, mult) = match part.as_bytes().last() {
            Some(b'?') => (&part[..part.len() - 1], Multiplicity::Optional),
            Some(b'*') => (&part[..part.len() - 1], Multiplicity::ZeroOrMore),
            Some(b'+') => (&part[..part.len() - 1], Multiplicity::OneOrMore),
            _ => (part, Multiplicity::One),
        };
        if !is_valid_name(name) {
            return Err(format!("bad child name {name:?}"));
        }
        items.push((name.to_string(), mult));
    }
    Ok(ContentModel::Sequence(items))
}

fn parse_attribute(text: &str) -> Result<(String, AttributeDecl), String> {
    let mut parts = text.splitn(3, char::is_whitespace);
    let element = parts.next().unwrap_or("");
    let name = parts.next().unwrap_or("");
    let rest = parts.next().unwrap_or("").trim();
    if !is_valid_name(element) || !is_valid_name(name) {
        return Err(format!("expected attribute ELEMENT NAME KIND PRESENCE, got {text:?}"));
    }
    let (kind, presence) = if let Some(r) = rest.strip_prefix("CDATA") {
        (AttributeKind::Cdata, r.trim())
    } else if rest.starts_with('(') {
        let close = rest.find(')').ok_or("unterminated enumeration")?;
        let values: Vec<String> = rest[1..close].split('|').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err("empty enumeration value".into());
        }
        (AttributeKind::Enumerated(values), rest[close + 1..].trim())
    } else {
        return Err(format!("unknown attribute kind in {rest:?}"));
    };
    let presence = match presence {
        "#REQUIRED" => Presence::Required,
        "#IMPLIED" => Presence::Implied,
        p if p.len() >= 2 && p.starts_with('"') && p.ends_with('"') => Presence::Default(p[1..p.len() - 1].to_string()),
        p => return Err(format!("bad presence {p:?}")),
    };
    if let (AttributeKind::Enumerated(values), Presence::Default(d)) = (&kind, &presence) {
        if !values.contains(d) {
            return Err(format!("default {d:?} is not among the enumerated values"));
        }
    }
    Ok((element.to_string(), AttributeDecl { name: name.to_string(), kind, presence }))
}

/// Checks `doc` against `schema`. Violations are data; an empty list means
/// the document is valid.
pub fn validate(doc: &XmlDocument, schema: &SchemaDecl) -> ValidationReport {
    let mut document = doc.clone();
    let mut violations = Vec::new();
    if document.root.name != schema.root {
        violations.push(Violation {
            path: format!("/{}", document.root.name),
            element: document.root.name.clone(),
            attribute: None,
            rule: ViolationRule::RootMismatch,
            message: format!("root must be <{}>", schema.root),
        });
    }
    let mut stack: Vec<(&mut XmlNode, String)> = Vec::new();
    let root_path = format!("/{}", document.root.name);
    stack.push((&mut document.root, root_path));
    while let Some((node, path)) = stack.pop() {
        check_node(node, &path, schema, &mut violations);
        for child in node.children.iter_mut() {
            let p = format!("{}/{}", path, child.name);
            stack.push((child, p));
        }
    }
    // Stable report order regardless of traversal.
    violations.sort_by(|a, b| a.path.cmp(&b.path).then(a.attribute.cmp(&b.attribute)));
    ValidationReport { violations, document }
}

fn check_node(node: &mut XmlNode, path: &str, schema: &SchemaDecl, out: &mut Vec<Violation>) {
    let v = |rule, attribute: Option<&str>, message: String| Violation {
        path: path.to_string(),
        element: node.name.clone(),
        attribute: attribute.map(str::to_string),
        rule,
        message,
    };
    let Some(model) = schema.elements.get(&node.name) else {
        out.push(v(ViolationRule::UndeclaredElement, None, format!("<{}> is not declared", node.name)));
        return;
    };
    match model {
        ContentModel::Empty => {
            if !node.is_empty() {
                out.push(v(ViolationRule::NotEmpty, None, "element must be empty".into()));
            }
        }
        ContentModel::TextOnly => {
            if !node.children.is_empty() {
                out.push(v(ViolationRule::ContentModel, None, "element allows text only".into()));
            }
        }
        ContentModel::Sequence(items) => {
            if !node.text.trim().is_empty() {
                out.push(v(ViolationRule::TextNotAllowed, None, "character data not allowed here".into()));
            }
            let names: Vec<&str> = node.children.iter().map(|c| c.name.as_str()).collect();
            if !sequence_matches(items, &names) {
                out.push(v(
                    ViolationRule::ContentModel,
                    None,
                    format!("children ({}) do not match {}", names.join(", "), model),
                ));
            }
        }
    }

    let decls = schema.attributes.get(&node.name).map(Vec::as_slice).unwrap_or(&[]);
    for key in node.attributes.keys() {
        if !decls.iter().any(|d| &d.name == key) {
            out.push(v(ViolationRule::UndeclaredAttribute, Some(key), "attribute is not declared".into()));
        }
    }
    for decl in decls {
        match node.attributes.get(&decl.name) {
            Some(value) => {
                if let AttributeKind::Enumerated(allowed) = &decl.kind {
                    if !allowed.contains(value) {
                        out.push(v(
                            ViolationRule::EnumValue,
                            Some(&decl.name),
                            format!("{value:?} is not one of {}", allowed.join("|")),
                        ));
                    }
                }
            }
            None => match &decl.presence {
                Presence::Required => {
                    out.push(v(ViolationRule::MissingAttribute, Some(&decl.name), "required attribute missing".into()))
                }
                Presence::Implied => {}
                Presence::Default(d) => {
                    node.attributes.insert(decl.name.clone(), d.clone());
                }
            },
        }
    }
}

/// Whether `names` is accepted by the sequence model. Tracks the set of
/// reachable positions so repeated names across items are handled.
fn sequence_matches(items: &[(String, Multiplicity)], names: &[&str]) -> bool {
    let mut positions: BTreeSet<usize> = BTreeSet::from([0]);
    for (name, mult) in items {
        let mut next = BTreeSet::new();
        for &p in &positions {
            let run = names[p..].iter().take_while(|n| *n == name).count();
            let range = match mult {
                Multiplicity::One => 1..=1,
                Multiplicity::Optional => 0..=1,
                Multiplicity::ZeroOrMore => 0..=run,
                Multiplicity::OneOrMore => 1..=run,
            };
            for k in range {
                if k <= run {
                    next.insert(p + k);
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        positions = next;
    }
    positions.contains(&names.len())
}
