//! Report templates: literal text with `{path}` placeholders and
//! `{for path}...{end}` repetition blocks. `{{` and `}}` produce literal
//! braces.

use super::node::{XmlDocument, XmlNode};
use super::path::{eval_path_from, TemplatePath};
use super::XmlError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Value(TemplatePath),
    For { path: TemplatePath, body: Vec<Segment> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTemplate {
    segments: Vec<Segment>,
}

fn parse_error(offset: usize, reason: impl Into<String>) -> XmlError {
    XmlError::TemplateParseError { offset, reason: reason.into() }
}

impl ReportTemplate {
    pub fn parse(body: &str) -> Result<ReportTemplate, XmlError> {
        // Each frame: segments collected so far and the block that opened it.
        let mut frames: Vec<(Vec<Segment>, Option<(TemplatePath, usize)>)> = vec![(Vec::new(), None)];
        let mut literal = String::new();
        let bytes = body.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    literal.push('{');
                    i += 2;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    literal.push('}');
                    i += 2;
                }
                b'{' => {
                    let close = body[i..].find('}').map(|p| p + i).ok_or_else(|| parse_error(i, "unclosed '{'"))?;
                    let tag = body[i + 1..close].trim();
                    let frame = &mut frames.last_mut().expect("frame").0;
                    if !literal.is_empty() {
                        frame.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    if tag == "end" {
                        let (segments, opener) = frames.pop().expect("frame");
                        let (path, _) = opener.ok_or_else(|| parse_error(i, "{end} without {for}"))?;
                        frames.last_mut().expect("outer frame").0.push(Segment::For { path, body: segments });
                    } else if tag == "for" || tag.starts_with("for ") {
                        let path: TemplatePath = tag[3..]
                            .trim()
                            .parse()
                            .map_err(|e: XmlError| parse_error(i, e.to_string()))?;
                        if path.terminal.is_some() {
                            return Err(parse_error(i, "a for block must select elements, not an attribute"));
                        }
                        frames.push((Vec::new(), Some((path, i))));
                    } else {
                        let path = tag.parse().map_err(|e: XmlError| parse_error(i, e.to_string()))?;
                        frame.push(Segment::Value(path));
                    }
                    i = close + 1;
                }
                _ => {
                    let start = i;
                    while i < bytes.len() && bytes[i] != b'{' && !(bytes[i] == b'}' && bytes.get(i + 1) == Some(&b'}')) {
                        i += 1;
                    }
                    literal.push_str(&body[start..i]);
                }
            }
        }
        if !literal.is_empty() {
            frames.last_mut().expect("frame").0.push(Segment::Literal(literal));
        }
        if frames.len() > 1 {
            let (_, opener) = frames.pop().expect("frame");
            let offset = opener.map(|(_, at)| at).unwrap_or(0);
            return Err(parse_error(offset, "{for} without {end}"));
        }
        Ok(ReportTemplate { segments: frames.pop().expect("frame").0 })
    }

    pub fn render(&self, doc: &XmlDocument) -> String {
        let mut out = String::new();
        render_into(&self.segments, doc, &doc.root, &mut out);
        out
    }
}

fn render_into(segments: &[Segment], doc: &XmlDocument, context: &XmlNode, out: &mut String) {
    for seg in segments {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Value(path) => {
                if let Some(v) = eval_path_from(doc, context, path).into_iter().next() {
                    out.push_str(&v);
                }
            }
            Segment::For { path, body } => {
                let base = if path.absolute { &doc.root } else { context };
                for node in path.select(base) {
                    render_into(body, doc, node, out);
                }
            }
        }
    }
}

/// Parses `template` and renders it against `doc`.
pub fn apply_template(doc: &XmlDocument, template: &str) -> Result<String, XmlError> {
    Ok(ReportTemplate::parse(template)?.render(doc))
}
