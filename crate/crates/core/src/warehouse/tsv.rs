//! Tab-separated tables with a header row. Backslash escapes `\\`, `\t`,
//! `\n` and `\r` inside fields.

use std::fs;
use std::io;
use std::path::Path;

use super::WarehouseError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(field: &str) -> Result<String, WarehouseError> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next() {
            Some('\\') => '\\',
            Some('t') => '\t',
            Some('n') => '\n',
            Some('r') => '\r',
            other => return Err(WarehouseError::BadTable(format!("bad escape \\{}", other.map(String::from).unwrap_or_default()))),
        });
    }
    Ok(out)
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let fields: Vec<String> = row.iter().map(|f| escape(f)).collect();
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Table, WarehouseError> {
        let mut lines = text.lines();
        let split = |line: &str| line.split('\t').map(unescape).collect::<Result<Vec<_>, _>>();
        let header = split(lines.next().ok_or_else(|| WarehouseError::BadTable("missing header".into()))?)?;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = if line.is_empty() && header.len() == 1 { vec![String::new()] } else { split(line)? };
            if row.len() != header.len() {
                return Err(WarehouseError::BadTable(format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }

    pub fn read(path: &Path) -> Result<Table, WarehouseError> {
        let text = fs::read_to_string(path).map_err(|e| WarehouseError::Io(format!("{}: {e}", path.display())))?;
        Table::parse(&text)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}
