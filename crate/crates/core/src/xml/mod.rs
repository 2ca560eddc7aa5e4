//! A bounded XML subset: parsing with well-formedness checks, canonical
//! serialization, DTD-style validation, path evaluation and report templates.
//!
//! Supported: an optional `<?xml ...?>` declaration, elements, attributes in
//! single or double quotes, character data, the five predefined entities,
//! numeric character references into printable ASCII, and comments.
//! Not supported: CDATA sections, namespaces, processing instructions,
//! DOCTYPE declarations and non-ASCII input.

mod codec;
mod node;
mod parser;
mod path;
mod schema;
mod template;
mod writer;

use thiserror::Error;

pub use codec::{event_from_node, event_node, from_xml, to_xml, work_order_schema, WORK_ORDER_SCHEMA};
pub use node::{is_valid_name, XmlDocument, XmlNode};
pub use parser::parse;
pub use path::{eval_path, eval_path_from, TemplatePath};
pub use schema::{
    validate, AttributeDecl, AttributeKind, ContentModel, Multiplicity, Presence, SchemaDecl, ValidationReport,
    Violation, ViolationRule,
};
pub use template::{apply_template, ReportTemplate};
pub use writer::serialize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XmlError {
    #[error("not well-formed at {line}:{column}: {reason}")]
    NotWellFormed { line: usize, column: usize, reason: String },
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("character {0:?} cannot be serialized")]
    InvalidCharacter(char),
    #[error("schema line {line}: {message}")]
    SchemaSyntax { line: usize, message: String },
    #[error("document violates the schema: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    SchemaViolation(Vec<Violation>),
    #[error("semantic error: {0}")]
    SemanticError(String),
    #[error("bad path {path:?}: {reason}")]
    BadPath { path: String, reason: String },
    #[error("template error at byte {offset}: {reason}")]
    TemplateParseError { offset: usize, reason: String },
}
