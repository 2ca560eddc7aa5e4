//! Line-oriented config files: `#` comments, `[section]` headers, and
//! free-form lines that each section interprets (`key = value`, rules, ...).

use thiserror::Error;

use crate::time::{DAY, HOUR, MINUTE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Section {
    /// Empty for lines that appear before the first header.
    pub name: String,
    pub lines: Vec<Line>,
}

/// Splits `text` into sections, dropping comments and blank lines.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections = vec![Section::default()];
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::new(number, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::new(number, "empty section name"));
            }
            sections.push(Section { name: name.to_string(), lines: Vec::new() });
            continue;
        }
        sections
            .last_mut()
            .expect("at least one section")
            .lines
            .push(Line { number, text: line.to_string() });
    }
    Ok(sections)
}

/// Splits `key = value`.
pub fn key_value(line: &Line) -> Result<(&str, &str), ConfigError> {
    let (k, v) = line
        .text
        .split_once('=')
        .ok_or_else(|| ConfigError::new(line.number, "expected key = value"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::new(line.number, "empty key"));
    }
    Ok((k, v.trim()))
}

/// `90`, `90s`, `15m`, `2h` or `1d`, in seconds.
pub fn parse_duration(s: &str) -> Option<i64> {
    let s = s.trim();
    let (num, unit) = match s.char_indices().find(|(_, c)| !c.is_ascii_digit()) {
        Some((i, _)) => s.split_at(i),
        None => (s, "s"),
    };
    let n: i64 = num.parse().ok()?;
    let unit = match unit {
        "s" => 1,
        "m" => MINUTE,
        "h" => HOUR,
        "d" => DAY,
        _ => return None,
    };
    n.checked_mul(unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "version = 2 # trailing\n\n[catalog]\nIRS-P6: AWIFS\n# whole line\n[rules]\n* : URP\n";
        let s = parse_sections(text).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].name, "");
        assert_eq!(s[0].lines[0].text, "version = 2");
        assert_eq!(s[1].name, "catalog");
        assert_eq!(s[2].lines[0], Line { number: 7, text: "* : URP".into() });
        assert_eq!(key_value(&s[0].lines[0]).unwrap(), ("version", "2"));
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("90"), Some(90));
        assert_eq!(parse_duration("15m"), Some(900));
        assert_eq!(parse_duration("2h"), Some(7200));
        assert_eq!(parse_duration("1d"), Some(DAY));
        assert_eq!(parse_duration("1w"), None);
    }

    #[test]
    fn bad_header() {
        assert_eq!(parse_sections("[rules\n").unwrap_err().line, 1);
    }
}
