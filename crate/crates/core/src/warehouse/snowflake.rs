use std::collections::{BTreeMap, HashMap};

use crate::par::{self, Exec};

use super::schema::{AttrRef, StarSchema};
use super::star::{Agg, Fact, QueryResult, ResultRow, StarData, WarehouseQuery};
use super::WarehouseError;

/// Table for one hierarchy level: distinct (value, parent-level row) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelTable {
    pub attr: usize,
    pub rows: Vec<(String, Option<u32>)>,
}

/// A dimension split along its hierarchy. Attributes that are some other
/// attribute's parent move to level tables; the base table keeps the rest
/// plus foreign keys to the levels its attributes point at. Base row `i`
/// is the star row with surrogate key `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnowDimension {
    pub name: String,
    pub base_attrs: Vec<usize>,
    pub base_fks: Vec<usize>,
    pub base_rows: Vec<(Vec<String>, Vec<u32>)>,
    pub levels: Vec<LevelTable>,
}

impl SnowDimension {
    fn level(&self, attr: usize) -> &LevelTable {
        self.levels.iter().find(|l| l.attr == attr).expect("level table exists")
    }

    /// Joins base row `key` back to every attribute value.
    fn resolve_row(&self, schema_attrs: usize, parents: &[Option<usize>], key: usize) -> Vec<String> {
        let mut out = vec![String::new(); schema_attrs];
        let (values, fks) = &self.base_rows[key];
        for (a, v) in self.base_attrs.iter().zip(values) {
            out[*a] = v.clone();
        }
        for (&l, &fk) in self.base_fks.iter().zip(fks) {
            let (mut attr, mut row) = (l, Some(fk));
            while let Some(r) = row {
                let (value, up) = &self.level(attr).rows[r as usize];
                out[attr] = value.clone();
                match parents[attr] {
                    Some(p) => {
                        attr = p;
                        row = *up;
                    }
                    None => row = None,
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnowflakeData {
    pub schema: StarSchema,
    pub dims: Vec<SnowDimension>,
    pub facts: Vec<Fact>,
}

pub fn normalize_to_snowflake(star: &StarData) -> Result<SnowflakeData, WarehouseError> {
    star.schema.check()?;
    let mut dims = Vec::new();
    for (d, def) in star.schema.dimensions.iter().enumerate() {
        let n = def.attributes.len();
        let parents: Vec<Option<usize>> = (0..n).map(|a| def.parent_of(a)).collect();
        let is_level: Vec<bool> = (0..n).map(|a| parents.contains(&Some(a))).collect();
        let base_attrs: Vec<usize> = (0..n).filter(|a| !is_level[*a]).collect();
        let mut base_fks: Vec<usize> =
            base_attrs.iter().filter_map(|a| parents[*a]).collect();
        base_fks.sort();
        base_fks.dedup();

        let mut levels: BTreeMap<usize, (LevelTable, HashMap<(String, Option<u32>), u32>)> = (0..n)
            .filter(|a| is_level[*a])
            .map(|a| (a, (LevelTable { attr: a, rows: Vec::new() }, HashMap::new())))
            .collect();

        let table = &star.dims[d];
        let mut base_rows = Vec::with_capacity(table.len());
        for key in 0..table.len() as u32 {
            let row = table.row(key);
            let mut memo: HashMap<usize, u32> = HashMap::new();
            let fks = base_fks.iter().map(|&l| level_row(l, &row, &parents, &mut levels, &mut memo)).collect();
            let values = base_attrs.iter().map(|a| row[*a].to_string()).collect();
            base_rows.push((values, fks));
        }
        dims.push(SnowDimension {
            name: def.name.clone(),
            base_attrs,
            base_fks,
            base_rows,
            levels: levels.into_values().map(|(t, _)| t).collect(),
        });
    }
    Ok(SnowflakeData { schema: star.schema.clone(), dims, facts: star.facts.clone() })
}

type Levels = BTreeMap<usize, (LevelTable, HashMap<(String, Option<u32>), u32>)>;

fn level_row(attr: usize, row: &[&str], parents: &[Option<usize>], levels: &mut Levels, memo: &mut HashMap<usize, u32>) -> u32 {
    if let Some(&r) = memo.get(&attr) {
        return r;
    }
    let up = parents[attr].map(|p| level_row(p, row, parents, levels, memo));
    let (table, index) = levels.get_mut(&attr).expect("attr is a level");
    let key = (row[attr].to_string(), up);
    let r = *index.entry(key.clone()).or_insert_with(|| {
        table.rows.push(key);
        (table.rows.len() - 1) as u32
    });
    memo.insert(attr, r);
    r
}

impl SnowflakeData {
    fn parents(&self, d: usize) -> Vec<Option<usize>> {
        let def = &self.schema.dimensions[d];
        (0..def.attributes.len()).map(|a| def.parent_of(a)).collect()
    }

    /// Joins every dimension back into star form.
    pub fn denormalize(&self) -> StarData {
        let mut star = StarData::new(self.schema.clone());
        for (d, dim) in self.dims.iter().enumerate() {
            let n = self.schema.dimensions[d].attributes.len();
            let parents = self.parents(d);
            for key in 0..dim.base_rows.len() {
                let row = dim.resolve_row(n, &parents, key);
                let refs: Vec<&str> = row.iter().map(String::as_str).collect();
                star.upsert(d, &refs);
            }
        }
        star.facts = self.facts.clone();
        star
    }

    /// Answers by joining facts through base and level tables.
    pub fn query(&self, q: &WarehouseQuery, exec: Exec) -> Result<QueryResult, WarehouseError> {
        let group: Vec<AttrRef> = q.group_by.iter().map(|g| self.schema.resolve(g)).collect::<Result<_, _>>()?;
        let filters: Vec<(AttrRef, &str)> =
            q.filters.iter().map(|(a, v)| Ok((self.schema.resolve(a)?, v.as_str()))).collect::<Result<_, WarehouseError>>()?;
        let joined: Vec<Vec<Vec<String>>> = (0..self.dims.len())
            .map(|d| {
                let n = self.schema.dimensions[d].attributes.len();
                let parents = self.parents(d);
                (0..self.dims[d].base_rows.len()).map(|k| self.dims[d].resolve_row(n, &parents, k)).collect()
            })
            .collect();
        let value = |f: &Fact, a: &AttrRef| -> &str { &joined[a.dim][f.keys[a.dim] as usize][a.attr] };
        let groups = par::fold(
            exec,
            &self.facts,
            BTreeMap::<Vec<String>, Agg>::new,
            |acc, f| {
                if filters.iter().all(|(a, v)| value(f, a) == *v) {
                    let key = group.iter().map(|a| value(f, a).to_string()).collect();
                    acc.entry(key).or_default().add(f);
                }
            },
            |mut a, b| {
                for (k, v) in b {
                    a.entry(k).or_default().merge(&v);
                }
                a
            },
        );
        let mut rows: Vec<ResultRow> = groups.into_iter().map(|(group, agg)| ResultRow { group, agg }).collect();
        if group.is_empty() && rows.is_empty() {
            rows.push(ResultRow { group: Vec::new(), agg: Agg::default() });
        }
        Ok(QueryResult { columns: group.iter().map(|a| self.schema.attr_name(*a)).collect(), measure: q.measure, rows })
    }
}
