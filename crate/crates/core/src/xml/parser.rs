use indexmap::IndexMap;

use super::node::{is_allowed_char, is_name_byte, is_name_start, XmlDocument, XmlNode};
use super::XmlError;

/// Parses `input` into a tree, rejecting anything outside the supported
/// subset with the line and column of the offending byte.
pub fn parse(input: &str) -> Result<XmlDocument, XmlError> {
    Parser { src: input.as_bytes(), pos: 0 }.document()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

type PResult<T> = Result<T, XmlError>;

impl<'a> Parser<'a> {
    fn error_at(&self, offset: usize, reason: impl Into<String>) -> XmlError {
        let offset = offset.min(self.src.len());
        let before = &self.src[..offset];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = offset - before.iter().rposition(|&b| b == b'\n').map(|p| p + 1).unwrap_or(0) + 1;
        XmlError::NotWellFormed { line, column, reason: reason.into() }
    }

    fn error(&self, reason: impl Into<String>) -> XmlError {
        self.error_at(self.pos, reason)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn check_chars(&self) -> PResult<()> {
        for (i, &b) in self.src.iter().enumerate() {
            if !is_allowed_char(b as char) {
                let what = if b.is_ascii() { "control character" } else { "non-ASCII byte" };
                return Err(self.error_at(i, format!("{what} 0x{b:02X}")));
            }
        }
        Ok(())
    }

    fn document(mut self) -> PResult<XmlDocument> {
        self.check_chars()?;
        if self.starts_with("<?xml") && matches!(self.src.get(5), Some(b' ' | b'\t' | b'\n' | b'\r' | b'?')) {
            match find(self.src, self.pos, b"?>") {
                Some(end) => self.pos = end + 2,
                None => return Err(self.error("unterminated XML declaration")),
            }
        }
        self.misc()?;
        if self.eof() {
            return Err(self.error("no root element"));
        }
        if self.peek() != Some(b'<') {
            return Err(self.error("text before the root element"));
        }
        let root = self.element()?;
        self.misc()?;
        if !self.eof() {
            if self.peek() == Some(b'<') && self.src.get(self.pos + 1).copied().is_some_and(is_name_start) {
                return Err(self.error("multiple root elements"));
            }
            return Err(self.error("content after the root element"));
        }
        Ok(XmlDocument { root })
    }

    /// Whitespace and comments outside the root.
    fn misc(&mut self) -> PResult<()> {
        loop {
            self.skip_ws();
            if self.starts_with("<!--") {
                self.comment()?;
            } else if self.starts_with("<?") {
                return Err(self.error("processing instructions are not supported"));
            } else if self.starts_with("<!") {
                return Err(self.error("DOCTYPE declarations are not supported"));
            } else {
                return Ok(());
            }
        }
    }

    fn comment(&mut self) -> PResult<()> {
        let start = self.pos;
        self.pos += 4;
        let end = find(self.src, self.pos, b"--").ok_or_else(|| self.error_at(start, "unterminated comment"))?;
        if self.src.get(end + 2) != Some(&b'>') {
            return Err(self.error_at(end, "'--' inside a comment"));
        }
        self.pos = end + 3;
        Ok(())
    }

    fn name(&mut self) -> PResult<String> {
        let start = self.pos;
        match self.peek() {
            Some(b) if is_name_start(b) => self.pos += 1,
            Some(b':') => return Err(self.error("namespaces are not supported")),
            _ => return Err(self.error("expected a name")),
        }
        while self.peek().is_some_and(is_name_byte) {
            self.pos += 1;
        }
        if self.peek() == Some(b':') {
            return Err(self.error("namespaces are not supported"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn reference(&mut self, out: &mut String) -> PResult<()> {
        let start = self.pos;
        let end = self.src[self.pos..]
            .iter()
            .take(12)
            .position(|&b| b == b';')
            .map(|p| p + self.pos)
            .ok_or_else(|| self.error_at(start, "stray '&'"))?;
        let body = std::str::from_utf8(&self.src[start + 1..end]).unwrap_or("");
        let c = match body {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            _ if body.starts_with("#x") => char_ref(u32::from_str_radix(&body[2..], 16).ok())
                .ok_or_else(|| self.error_at(start, format!("bad character reference &{body};")))?,
            _ if body.starts_with('#') => char_ref(body[1..].parse().ok())
                .ok_or_else(|| self.error_at(start, format!("bad character reference &{body};")))?,
            _ => return Err(self.error_at(start, format!("unknown entity &{body};"))),
        };
        out.push(c);
        self.pos = end + 1;
        Ok(())
    }

    /// Parses a start tag; returns the node and whether it self-closed.
    fn start_tag(&mut self) -> PResult<(XmlNode, bool)> {
        self.pos += 1;
        let name = self.name()?;
        let mut attributes = IndexMap::new();
        loop {
            let had_ws = self.skip_ws();
            match self.peek() {
                Some(b'>') => {
                    self.pos += 1;
                    return Ok((XmlNode { name, attributes, ..Default::default() }, false));
                }
                Some(b'/') => {
                    if self.src.get(self.pos + 1) != Some(&b'>') {
                        return Err(self.error("expected '/>'"));
                    }
                    self.pos += 2;
                    return Ok((XmlNode { name, attributes, ..Default::default() }, true));
                }
                None => return Err(self.error(format!("unclosed start tag <{name}>"))),
                Some(_) => {
                    if !had_ws {
                        return Err(self.error("expected whitespace before attribute"));
                    }
                    let at = self.pos;
                    let key = self.name()?;
                    self.skip_ws();
                    if self.peek() != Some(b'=') {
                        return Err(self.error(format!("expected '=' after attribute {key}")));
                    }
                    self.pos += 1;
                    self.skip_ws();
                    let value = self.attr_value()?;
                    if attributes.contains_key(&key) {
                        return Err(self.error_at(at, format!("duplicate attribute {key}")));
                    }
                    attributes.insert(key, value);
                }
            }
        }
    }

    fn attr_value(&mut self) -> PResult<String> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => q,
            _ => return Err(self.error("attribute value must be quoted")),
        };
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated attribute value")),
                Some(b) if b == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(b'<') => return Err(self.error("'<' in attribute value")),
                Some(b'&') => self.reference(&mut out)?,
                Some(b) => {
                    out.push(b as char);
                    self.pos += 1;
                }
            }
        }
    }

    fn element(&mut self) -> PResult<XmlNode> {
        let (root, closed) = self.start_tag()?;
        if closed {
            return Ok(root);
        }
        // Open elements with the offset of their start tag.
        let mut stack: Vec<(XmlNode, usize)> = vec![(root, 0)];
        loop {
            match self.peek() {
                None => {
                    let (open, _) = stack.last().expect("open element");
                    return Err(self.error(format!("unclosed element <{}>", open.name)));
                }
                Some(b'<') => {
                    if self.starts_with("</") {
                        let at = self.pos;
                        self.pos += 2;
                        let name = self.name()?;
                        self.skip_ws();
                        if self.peek() != Some(b'>') {
                            return Err(self.error("expected '>' to close end tag"));
                        }
                        self.pos += 1;
                        let (node, _) = stack.pop().expect("open element");
                        if node.name != name {
                            return Err(self.error_at(
                                at,
                                format!("end tag </{}> does not match <{}>", name, node.name),
                            ));
                        }
                        match stack.last_mut() {
                            Some((parent, _)) => parent.children.push(node),
                            None => return Ok(node),
                        }
                    } else if self.starts_with("<!--") {
                        self.comment()?;
                    } else if self.starts_with("<![CDATA[") {
                        return Err(self.error("CDATA sections are not supported"));
                    } else if self.starts_with("<?") {
                        return Err(self.error("processing instructions are not supported"));
                    } else if self.src.get(self.pos + 1).copied().is_some_and(is_name_start) {
                        let at = self.pos;
                        let (node, closed) = self.start_tag()?;
                        if closed {
                            stack.last_mut().expect("open element").0.children.push(node);
                        } else {
                            stack.push((node, at));
                        }
                    } else {
                        return Err(self.error("stray '<'"));
                    }
                }
                Some(b'&') => {
                    let mut text = std::mem::take(&mut stack.last_mut().expect("open element").0.text);
                    let r = self.reference(&mut text);
                    stack.last_mut().expect("open element").0.text = text;
                    r?;
                }
                Some(_) => {
                    let start = self.pos;
                    while !matches!(self.peek(), None | Some(b'<' | b'&')) {
                        if self.starts_with("]]>") {
                            return Err(self.error("']]>' in character data"));
                        }
                        self.pos += 1;
                    }
                    let chunk = std::str::from_utf8(&self.src[start..self.pos]).expect("ASCII checked");
                    stack.last_mut().expect("open element").0.text.push_str(chunk);
                }
            }
        }
    }
}

fn char_ref(code: Option<u32>) -> Option<char> {
    code.and_then(char::from_u32).filter(|&c| is_allowed_char(c))
}

fn find(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    hay.get(from..)?.windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_pos(input: &str) -> (usize, usize) {
        match parse(input) {
            Err(XmlError::NotWellFormed { line, column, .. }) => (line, column),
            other => panic!("expected NotWellFormed for {input:?}, got {other:?}"),
        }
    }

    #[test]
    fn simple_document() {
        let doc = parse(r#"<a><b x="1"/>t</a>"#).unwrap();
        assert_eq!(doc.root.name, "a");
        assert_eq!(doc.root.text, "t");
        assert_eq!(doc.root.children.len(), 1);
        assert_eq!(doc.root.children[0].name, "b");
        assert_eq!(doc.root.children[0].get_attr("x"), Some("1"));
    }

    #[test]
    fn mismatch_reports_end_tag_position() {
        assert_eq!(err_pos("<a><b></a></b>"), (1, 7));
    }

    #[test]
    fn prolog_comments_entities() {
        let doc = parse("<?xml version=\"1.0\"?>\n<!-- hi -->\n<r k='a&quot;b'>&lt;&amp;&gt;&apos;&#65;&#x42;<!-- c --></r>\n<!-- tail -->").unwrap();
        assert_eq!(doc.root.text, "<&>'AB");
        assert_eq!(doc.root.get_attr("k"), Some("a\"b"));
    }

    #[test]
    fn positions_on_later_lines() {
        assert_eq!(err_pos("<a>\n  <b x='1' x='2'/>\n</a>"), (2, 12));
        assert_eq!(err_pos("<a>\n\n  & </a>"), (3, 3));
    }

    #[test]
    fn rejects_outside_subset() {
        for bad in [
            "<a><![CDATA[x]]></a>",
            "<a><?pi x?></a>",
            "<!DOCTYPE a><a/>",
            "<ns:a/>",
            "<a b:c='1'/>",
            "<a>\u{e9}</a>",
            "<a/><b/>",
            "<a>",
            "",
            "text<a/>",
            "<a>&bogus;</a>",
            "<a>&#0;</a>",
            "<a x=1/>",
            "<a x='<'/>",
            "<a><!-- a -- b --></a>",
            "<a>x]]></a>",
        ] {
            assert!(parse(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn deep_nesting_does_not_recurse() {
        let depth = 2_000;
        let doc = "<a>".repeat(depth) + &"</a>".repeat(depth);
        let mut node = &parse(&doc).unwrap().root;
        let mut seen = 1;
        while let Some(c) = node.children.first() {
            node = c;
            seen += 1;
        }
        assert_eq!(seen, depth);
    }
}
