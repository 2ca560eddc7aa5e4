use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::par::{self, Exec};

use super::schema::{AttrRef, StarSchema};
use super::tsv::Table;
use super::{Money, WarehouseError};

/// Dimension rows with interned attribute values. Row `i` has surrogate
/// key `i`.
#[derive(Debug, Clone, Default)]
pub struct DimTable {
    columns: Vec<Vec<u32>>,
    dictionaries: Vec<Vec<String>>,
    lookup: Vec<HashMap<String, u32>>,
    rows: HashMap<Vec<u32>, u32>,
}

impl DimTable {
    pub fn new(attributes: usize) -> DimTable {
        DimTable {
            columns: vec![Vec::new(); attributes],
            dictionaries: vec![Vec::new(); attributes],
            lookup: vec![HashMap::new(); attributes],
            rows: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Key of the row with exactly these values, inserting it if new.
    pub fn upsert(&mut self, values: &[&str]) -> u32 {
        assert_eq!(values.len(), self.columns.len(), "one value per attribute");
        let ids: Vec<u32> = values
            .iter()
            .enumerate()
            .map(|(a, v)| match self.lookup[a].get(*v) {
                Some(&id) => id,
                None => {
                    let id = self.dictionaries[a].len() as u32;
                    self.dictionaries[a].push(v.to_string());
                    self.lookup[a].insert(v.to_string(), id);
                    id
                }
            })
            .collect();
        if let Some(&key) = self.rows.get(&ids) {
            return key;
        }
        let key = self.len() as u32;
        for (col, id) in self.columns.iter_mut().zip(&ids) {
            col.push(*id);
        }
        self.rows.insert(ids, key);
        key
    }

    pub fn row(&self, key: u32) -> Vec<&str> {
        (0..self.columns.len()).map(|a| self.value(a, key)).collect()
    }

    pub fn value(&self, attr: usize, key: u32) -> &str {
        &self.dictionaries[attr][self.columns[attr][key as usize] as usize]
    }

    pub(crate) fn value_id(&self, attr: usize, key: u32) -> u32 {
        self.columns[attr][key as usize]
    }

    pub(crate) fn id_of(&self, attr: usize, value: &str) -> Option<u32> {
        self.lookup[attr].get(value).copied()
    }

    pub(crate) fn dictionary(&self, attr: usize) -> &[String] {
        &self.dictionaries[attr]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    /// One surrogate key per dimension, in schema order.
    pub keys: Vec<u32>,
    pub quantity: u64,
    pub amount: Money,
    /// Seconds from order creation to completion.
    pub tat: i64,
}

/// Additive summary of a group of facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Agg {
    pub count: u64,
    pub quantity: u64,
    pub amount: Money,
    pub tat_sum: i64,
}

impl Agg {
    pub fn add(&mut self, f: &Fact) {
        self.count += 1;
        self.quantity += f.quantity;
        self.amount = self.amount + f.amount;
        self.tat_sum += f.tat;
    }

    pub fn merge(&mut self, o: &Agg) {
        self.count += o.count;
        self.quantity += o.quantity;
        self.amount = self.amount + o.amount;
        self.tat_sum += o.tat_sum;
    }

    pub fn value(&self, m: Measure) -> MeasureValue {
        match m {
            Measure::Count => MeasureValue::Count(self.count),
            Measure::SumQuantity => MeasureValue::Quantity(self.quantity),
            Measure::SumAmount => MeasureValue::Amount(self.amount),
            Measure::AvgTat => MeasureValue::Mean { sum: self.tat_sum, count: self.count },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Measure {
    Count,
    SumQuantity,
    SumAmount,
    AvgTat,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Count, Measure::SumQuantity, Measure::SumAmount, Measure::AvgTat];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Count => "COUNT",
            Measure::SumQuantity => "SUM_QUANTITY",
            Measure::SumAmount => "SUM_AMOUNT",
            Measure::AvgTat => "AVG_TAT",
        }
    }

    pub fn is_additive(self) -> bool {
        self != Measure::AvgTat
    }
}

impl FromStr for Measure {
    type Err = WarehouseError;
    fn from_str(s: &str) -> Result<Self, WarehouseError> {
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| WarehouseError::UnknownMeasure(s.to_string()))
    }
}

/// Exact measure values. Means keep their numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureValue {
    Count(u64),
    Quantity(u64),
    Amount(Money),
    Mean { sum: i64, count: u64 },
}

impl fmt::Display for MeasureValue {
    /// Means print with two decimals, rounded half away from zero; an
    /// empty mean prints as nothing.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MeasureValue::Count(n) | MeasureValue::Quantity(n) => write!(f, "{n}"),
            MeasureValue::Amount(m) => write!(f, "{m}"),
            MeasureValue::Mean { count: 0, .. } => Ok(()),
            MeasureValue::Mean { sum, count } => {
                let scaled = sum as i128 * 100;
                let c = count as i128;
                let q = (scaled.abs() + c / 2) / c * scaled.signum();
                write!(f, "{}", Money(q as i64))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseQuery {
    pub group_by: Vec<String>,
    pub measure: Measure,
    #[serde(default)]
    pub filters: Vec<(String, String)>,
}

impl WarehouseQuery {
    pub fn new(group_by: &[&str], measure: Measure) -> WarehouseQuery {
        WarehouseQuery { group_by: group_by.iter().map(|s| s.to_string()).collect(), measure, filters: Vec::new() }
    }

    pub fn filter(mut self, attr: &str, value: &str) -> WarehouseQuery {
        self.filters.push((attr.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultRow {
    pub group: Vec<String>,
    pub agg: Agg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub measure: Measure,
    pub rows: Vec<ResultRow>,
}

impl QueryResult {
    pub fn values(&self) -> Vec<(Vec<String>, MeasureValue)> {
        self.rows.iter().map(|r| (r.group.clone(), r.agg.value(self.measure))).collect()
    }

    pub fn to_table(&self) -> Table {
        let mut header = self.columns.clone();
        header.push(self.measure.as_str().to_string());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut row = r.group.clone();
                row.push(r.agg.value(self.measure).to_string());
                row
            })
            .collect();
        Table { header, rows }
    }
}

/// A query resolved against a schema; filter values become interned ids
/// (`None` when the value never occurs, so nothing matches).
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub group: Vec<AttrRef>,
    pub filters: Vec<(AttrRef, Option<u32>)>,
    pub measure: Measure,
}

impl Compiled {
    pub fn attributes(&self) -> Vec<AttrRef> {
        let mut all: Vec<AttrRef> = self.group.iter().copied().chain(self.filters.iter().map(|f| f.0)).collect();
        all.sort();
        all.dedup();
        all
    }
}

/// Star-schema data: dimension tables and the fact table.
#[derive(Debug, Clone)]
pub struct StarData {
    pub schema: StarSchema,
    pub dims: Vec<DimTable>,
    pub facts: Vec<Fact>,
}

impl StarData {
    pub fn new(schema: StarSchema) -> StarData {
        let dims = schema.dimensions.iter().map(|d| DimTable::new(d.attributes.len())).collect();
        StarData { schema, dims, facts: Vec::new() }
    }

    pub fn dim_index(&self, name: &str) -> Result<usize, WarehouseError> {
        self.schema
            .dimensions
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| WarehouseError::UnknownAttribute(name.to_string()))
    }

    pub fn upsert(&mut self, dim: usize, values: &[&str]) -> u32 {
        self.dims[dim].upsert(values)
    }

    pub fn push_fact(&mut self, fact: Fact) -> Result<(), WarehouseError> {
        if fact.keys.len() != self.dims.len() {
            return Err(WarehouseError::SchemaMismatch("fact key count differs from dimension count".into()));
        }
        for (d, &k) in fact.keys.iter().enumerate() {
            if k as usize >= self.dims[d].len() {
                return Err(WarehouseError::DanglingKey { dimension: self.schema.dimensions[d].name.clone(), key: k });
            }
        }
        if fact.amount.0 < 0 {
            return Err(WarehouseError::SchemaMismatch("negative amount".into()));
        }
        self.facts.push(fact);
        Ok(())
    }

    /// Rows of a dimension as strings, in key order.
    pub fn dim_rows(&self, dim: usize) -> Vec<Vec<String>> {
        let t = &self.dims[dim];
        (0..t.len() as u32).map(|k| t.row(k).into_iter().map(str::to_string).collect()).collect()
    }

    pub(crate) fn compile(&self, q: &WarehouseQuery) -> Result<Compiled, WarehouseError> {
        let group = q.group_by.iter().map(|g| self.schema.resolve(g)).collect::<Result<Vec<_>, _>>()?;
        let filters = q
            .filters
            .iter()
            .map(|(a, v)| {
                let r = self.schema.resolve(a)?;
                Ok((r, self.dims[r.dim].id_of(r.attr, v)))
            })
            .collect::<Result<Vec<_>, WarehouseError>>()?;
        Ok(Compiled { group, filters, measure: q.measure })
    }

    #[inline]
    pub(crate) fn fact_value(&self, f: &Fact, a: AttrRef) -> u32 {
        self.dims[a.dim].value_id(a.attr, f.keys[a.dim])
    }

    /// Answers by one pass over the fact table.
    pub fn scan(&self, q: &WarehouseQuery, exec: Exec) -> Result<QueryResult, WarehouseError> {
        let c = self.compile(q)?;
        let groups = par::fold(
            exec,
            &self.facts,
            HashMap::<Vec<u32>, Agg>::new,
            |acc, f| {
                let pass = c.filters.iter().all(|(a, want)| *want == Some(self.fact_value(f, *a)));
                if pass {
                    let key: Vec<u32> = c.group.iter().map(|a| self.fact_value(f, *a)).collect();
                    acc.entry(key).or_default().add(f);
                }
            },
            merge_groups,
        );
        Ok(self.finish(&c, groups))
    }

    pub(crate) fn finish(&self, c: &Compiled, groups: HashMap<Vec<u32>, Agg>) -> QueryResult {
        let mut rows: Vec<ResultRow> = groups
            .into_iter()
            .map(|(key, agg)| ResultRow {
                group: c
                    .group
                    .iter()
                    .zip(&key)
                    .map(|(a, id)| self.dims[a.dim].dictionary(a.attr)[*id as usize].clone())
                    .collect(),
                agg,
            })
            .collect();
        rows.sort_by(|a, b| a.group.cmp(&b.group));
        if c.group.is_empty() && rows.is_empty() {
            rows.push(ResultRow { group: Vec::new(), agg: Agg::default() });
        }
        QueryResult { columns: c.group.iter().map(|a| self.schema.attr_name(*a)).collect(), measure: c.measure, rows }
    }
}

pub(crate) fn merge_groups(mut a: HashMap<Vec<u32>, Agg>, b: HashMap<Vec<u32>, Agg>) -> HashMap<Vec<u32>, Agg> {
    if a.len() < b.len() {
        return merge_groups(b, a);
    }
    for (k, v) in b {
        a.entry(k).or_default().merge(&v);
    }
    a
}

/// Replaces the finest (last) grouping attribute with its hierarchy parent,
/// or drops it when it has none or the parent is already grouped.
pub fn rollup(schema: &StarSchema, q: &WarehouseQuery) -> Result<WarehouseQuery, WarehouseError> {
    let mut out = q.clone();
    let Some(last) = out.group_by.pop() else { return Ok(out) };
    let r = schema.resolve(&last)?;
    if let Some(p) = schema.parent(r) {
        let name = schema.attr_name(p);
        let grouped = out.group_by.iter().map(|g| schema.resolve(g)).collect::<Result<Vec<_>, _>>()?;
        if !grouped.contains(&p) {
            out.group_by.push(name);
        }
    }
    Ok(out)
}

/// Adds `attr` as the new finest grouping attribute.
pub fn drilldown(schema: &StarSchema, q: &WarehouseQuery, attr: &str) -> Result<WarehouseQuery, WarehouseError> {
    schema.resolve(attr)?;
    let mut out = q.clone();
    out.group_by.push(attr.to_string());
    Ok(out)
}
