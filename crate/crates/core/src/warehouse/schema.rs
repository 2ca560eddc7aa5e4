use std::collections::HashSet;

use super::WarehouseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDef {
    pub name: String,
    /// Coarser attribute of the same dimension.
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionDef {
    pub name: String,
    pub attributes: Vec<AttributeDef>,
}

/// A fact table with fixed measures (quantity, amount, tat) keyed by one
/// surrogate per dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarSchema {
    pub fact: String,
    pub measures: Vec<String>,
    pub dimensions: Vec<DimensionDef>,
}

/// Position of an attribute: dimension index and attribute index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrRef {
    pub dim: usize,
    pub attr: usize,
}

pub const MEASURES: [&str; 3] = ["quantity", "amount", "tat"];

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl DimensionDef {
    pub fn new(name: &str, attributes: &[(&str, Option<&str>)]) -> DimensionDef {
        DimensionDef {
            name: name.to_string(),
            attributes: attributes
                .iter()
                .map(|(a, p)| AttributeDef { name: a.to_string(), parent: p.map(str::to_string) })
                .collect(),
        }
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn parent_of(&self, attr: usize) -> Option<usize> {
        self.attributes[attr].parent.as_deref().and_then(|p| self.attr_index(p))
    }

    pub fn has_hierarchy(&self) -> bool {
        self.attributes.iter().any(|a| a.parent.is_some())
    }
}

impl StarSchema {
    pub fn new(fact: &str, dimensions: Vec<DimensionDef>) -> Result<StarSchema, WarehouseError> {
        let schema = StarSchema {
            fact: fact.to_string(),
            measures: MEASURES.iter().map(|m| m.to_string()).collect(),
            dimensions,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<(), WarehouseError> {
        let invalid = |m: String| Err(WarehouseError::InvalidSchema(m));
        if !is_ident(&self.fact) {
            return invalid(format!("bad fact name {:?}", self.fact));
        }
        let mut names = HashSet::new();
        for m in &self.measures {
            if !names.insert(m.as_str()) {
                return invalid(format!("measure {m:?} repeated"));
            }
        }
        if self.measures != MEASURES {
            return invalid("measures must be quantity, amount, tat".into());
        }
        let mut dims = HashSet::new();
        for d in &self.dimensions {
            if !is_ident(&d.name) || !dims.insert(d.name.as_str()) {
                return invalid(format!("bad or repeated dimension {:?}", d.name));
            }
            if d.attributes.is_empty() {
                return invalid(format!("dimension {} has no attributes", d.name));
            }
            let mut attrs = HashSet::new();
            for a in &d.attributes {
                if !is_ident(&a.name) || !attrs.insert(a.name.as_str()) {
                    return invalid(format!("bad or repeated attribute {}.{}", d.name, a.name));
                }
            }
            for a in &d.attributes {
                if let Some(p) = &a.parent {
                    if d.attr_index(p).is_none() {
                        return invalid(format!("{}.{} has unknown parent {p:?}", d.name, a.name));
                    }
                }
            }
            for start in 0..d.attributes.len() {
                let mut cur = Some(start);
                for _ in 0..=d.attributes.len() {
                    cur = cur.and_then(|c| d.parent_of(c));
                }
                if cur.is_some() {
                    return Err(WarehouseError::CyclicHierarchy(d.name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn attr_name(&self, r: AttrRef) -> String {
        let d = &self.dimensions[r.dim];
        format!("{}.{}", d.name, d.attributes[r.attr].name)
    }

    /// Resolves `dim.attr`, a bare dimension name (its first attribute) or
    /// an attribute name that occurs in exactly one dimension.
    pub fn resolve(&self, name: &str) -> Result<AttrRef, WarehouseError> {
        if let Some((dim, attr)) = name.split_once('.') {
            let d = self.dimensions.iter().position(|d| d.name == dim);
            if let Some(d) = d {
                if let Some(a) = self.dimensions[d].attr_index(attr) {
                    return Ok(AttrRef { dim: d, attr: a });
                }
            }
            return Err(WarehouseError::UnknownAttribute(name.to_string()));
        }
        if let Some(d) = self.dimensions.iter().position(|d| d.name == name) {
            return Ok(AttrRef { dim: d, attr: 0 });
        }
        let hits: Vec<AttrRef> = self
            .dimensions
            .iter()
            .enumerate()
            .filter_map(|(d, dim)| dim.attr_index(name).map(|a| AttrRef { dim: d, attr: a }))
            .collect();
        match hits.as_slice() {
            [one] => Ok(*one),
            [] => Err(WarehouseError::UnknownAttribute(name.to_string())),
            _ => Err(WarehouseError::AmbiguousAttribute(name.to_string())),
        }
    }

    pub fn parent(&self, r: AttrRef) -> Option<AttrRef> {
        self.dimensions[r.dim].parent_of(r.attr).map(|a| AttrRef { dim: r.dim, attr: a })
    }

    pub fn all_attributes(&self) -> Vec<AttrRef> {
        self.dimensions
            .iter()
            .enumerate()
            .flat_map(|(d, dim)| (0..dim.attributes.len()).map(move |a| AttrRef { dim: d, attr: a }))
            .collect()
    }
}
