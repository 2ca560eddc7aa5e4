use std::fmt;
use std::str::FromStr;

use super::node::{is_valid_name, XmlDocument, XmlNode};
use super::XmlError;

/// `/a/b/c@attr` (absolute) or `c@attr` (relative to a context node). The
/// first step always names the context node itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplatePath {
    pub absolute: bool,
    pub steps: Vec<String>,
    pub terminal: Option<String>,
}

impl FromStr for TemplatePath {
    type Err = XmlError;

    fn from_str(s: &str) -> Result<Self, XmlError> {
        let bad = |reason: &str| XmlError::BadPath { path: s.to_string(), reason: reason.to_string() };
        let trimmed = s.trim();
        let (absolute, body) = match trimmed.strip_prefix('/') {
            Some(rest) => (true, rest),
            None => (false, trimmed),
        };
        let (elements, terminal) = match body.split_once('@') {
            Some((e, a)) => (e, Some(a)),
            None => (body, None),
        };
        if elements.is_empty() {
            return Err(bad("at least one step is required"));
        }
        let steps: Vec<String> = elements.split('/').map(str::to_string).collect();
        if let Some(step) = steps.iter().find(|s| !is_valid_name(s)) {
            return Err(bad(&format!("bad step {step:?}")));
        }
        if let Some(a) = terminal {
            if !is_valid_name(a) {
                return Err(bad(&format!("bad attribute {a:?}")));
            }
        }
        Ok(TemplatePath { absolute, steps, terminal: terminal.map(str::to_string) })
    }
}

impl fmt::Display for TemplatePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.absolute {
            f.write_str("/")?;
        }
        f.write_str(&self.steps.join("/"))?;
        if let Some(a) = &self.terminal {
            write!(f, "@{a}")?;
        }
        Ok(())
    }
}

impl TemplatePath {
    /// Elements reached by the steps, in document order.
    pub(crate) fn select<'a>(&self, context: &'a XmlNode) -> Vec<&'a XmlNode> {
        if context.name != self.steps[0] {
            return Vec::new();
        }
        let mut current = vec![context];
        for step in &self.steps[1..] {
            current = current.into_iter().flat_map(|n| n.children_named(step)).collect();
        }
        current
    }

    pub(crate) fn values(&self, context: &XmlNode) -> Vec<String> {
        self.select(context)
            .into_iter()
            .filter_map(|n| match &self.terminal {
                Some(a) => n.get_attr(a).map(str::to_string),
                None => Some(n.text.clone()),
            })
            .collect()
    }
}

/// Values at `path` from the document root: attribute values for an `@attr`
/// terminal, element text otherwise. An absent path yields an empty list.
pub fn eval_path(doc: &XmlDocument, path: &TemplatePath) -> Vec<String> {
    path.values(&doc.root)
}

/// Like [`eval_path`] but relative paths start at `context`.
pub fn eval_path_from(doc: &XmlDocument, context: &XmlNode, path: &TemplatePath) -> Vec<String> {
    if path.absolute {
        path.values(&doc.root)
    } else {
        path.values(context)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml::parse;

    fn doc() -> XmlDocument {
        parse(r#"<work-order id="WO-000007"><routing><step center="URP" status="COMPLETED"/><step center="DP" status="IN_PROGRESS">dp</step></routing></work-order>"#).unwrap()
    }

    fn p(s: &str) -> TemplatePath {
        s.parse().unwrap()
    }

    #[test]
    fn attribute_and_text_terminals() {
        let d = doc();
        assert_eq!(eval_path(&d, &p("/work-order@id")), vec!["WO-000007"]);
        assert_eq!(eval_path(&d, &p("/work-order/routing/step@status")), vec!["COMPLETED", "IN_PROGRESS"]);
        assert_eq!(eval_path(&d, &p("/work-order/routing/step")), vec!["", "dp"]);
    }

    #[test]
    fn absent_paths() {
        let d = doc();
        assert!(eval_path(&d, &p("/work-order/history/event@seq")).is_empty());
        assert!(eval_path(&d, &p("/other@id")).is_empty());
        assert!(eval_path(&d, &p("/work-order@missing")).is_empty());
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "/", "@id", "/a//b", "/a@", "/a@b@c", "/1a"] {
            assert!(bad.parse::<TemplatePath>().is_err(), "{bad}");
        }
        assert_eq!(p("/a/b@c").to_string(), "/a/b@c");
    }
}
