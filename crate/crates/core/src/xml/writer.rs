use super::node::{is_allowed_char, is_valid_name, XmlDocument, XmlNode};
use super::XmlError;

/// Canonical single-line form: attributes in stored order, double quotes,
/// the five predefined entities escaped, tab/newline/carriage return as
/// character references, element text before children, and `<x/>` only for
/// elements with neither text nor children. No XML declaration.
pub fn serialize(doc: &XmlDocument) -> Result<String, XmlError> {
    let mut out = String::new();
    write_node(&doc.root, &mut out)?;
    Ok(out)
}

fn write_node(node: &XmlNode, out: &mut String) -> Result<(), XmlError> {
    if !is_valid_name(&node.name) {
        return Err(XmlError::InvalidName(node.name.clone()));
    }
    out.push('<');
    out.push_str(&node.name);
    for (k, v) in &node.attributes {
        if !is_valid_name(k) {
            return Err(XmlError::InvalidName(k.clone()));
        }
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        escape_into(v, out)?;
        out.push('"');
    }
    if node.is_empty() {
        out.push_str("/>");
        return Ok(());
    }
    out.push('>');
    escape_into(&node.text, out)?;
    for child in &node.children {
        write_node(child, out)?;
    }
    out.push_str("</");
    out.push_str(&node.name);
    out.push('>');
    Ok(())
}

fn escape_into(s: &str, out: &mut String) -> Result<(), XmlError> {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c if is_allowed_char(c) => out.push(c),
            c => return Err(XmlError::InvalidCharacter(c)),
        }
    }
    Ok(())
}
