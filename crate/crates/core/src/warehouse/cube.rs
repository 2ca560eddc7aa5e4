use std::collections::HashMap;

use crate::par::{self, Exec};

use super::schema::AttrRef;
use super::star::{Agg, Compiled, QueryResult, StarData, WarehouseQuery};
use super::WarehouseError;

/// Pre-aggregated facts for one attribute subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cuboid {
    /// Sorted, without duplicates.
    pub attrs: Vec<AttrRef>,
    pub cells: HashMap<Vec<u32>, Agg>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregateCube {
    pub cuboids: Vec<Cuboid>,
}

fn normalized(attrs: &[AttrRef]) -> Vec<AttrRef> {
    let mut v = attrs.to_vec();
    v.sort();
    v.dedup();
    v
}

fn cuboid(data: &StarData, attrs: Vec<AttrRef>) -> Cuboid {
    let mut cells: HashMap<Vec<u32>, Agg> = HashMap::new();
    for f in &data.facts {
        let key: Vec<u32> = attrs.iter().map(|a| data.fact_value(f, *a)).collect();
        cells.entry(key).or_default().add(f);
    }
    Cuboid { attrs, cells }
}

/// Aggregates the facts once per requested subset; subsets are built
/// concurrently under [`Exec::Parallel`].
pub fn build_aggregates(data: &StarData, subsets: &[Vec<AttrRef>], exec: Exec) -> AggregateCube {
    let mut wanted: Vec<Vec<AttrRef>> = subsets.iter().map(|s| normalized(s)).collect();
    wanted.sort();
    wanted.dedup();
    AggregateCube { cuboids: par::map(exec, &wanted, |attrs| cuboid(data, attrs.clone())) }
}

/// Every subset of `attrs`.
pub fn power_set(attrs: &[AttrRef]) -> Vec<Vec<AttrRef>> {
    (0u32..1 << attrs.len())
        .map(|mask| attrs.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, a)| *a).collect())
        .collect()
}

impl AggregateCube {
    /// The smallest cuboid covering every attribute `c` touches.
    fn covering(&self, c: &Compiled) -> Option<&Cuboid> {
        let need = c.attributes();
        self.cuboids
            .iter()
            .filter(|cb| need.iter().all(|a| cb.attrs.binary_search(a).is_ok()))
            .min_by_key(|cb| (cb.cells.len(), cb.attrs.len()))
    }

    pub fn covers(&self, data: &StarData, q: &WarehouseQuery) -> Result<bool, WarehouseError> {
        Ok(self.covering(&data.compile(q)?).is_some())
    }

    /// Answers from a covering cuboid by re-aggregating its cells; `None`
    /// when no cuboid covers the query.
    pub fn answer(&self, data: &StarData, q: &WarehouseQuery) -> Result<Option<QueryResult>, WarehouseError> {
        let c = data.compile(q)?;
        let Some(cb) = self.covering(&c) else { return Ok(None) };
        let pos = |a: &AttrRef| cb.attrs.binary_search(a).expect("covering cuboid");
        let group_pos: Vec<usize> = c.group.iter().map(pos).collect();
        let filter_pos: Vec<(usize, Option<u32>)> = c.filters.iter().map(|(a, v)| (pos(a), *v)).collect();
        let mut groups = HashMap::new();
        for (key, agg) in &cb.cells {
            if filter_pos.iter().all(|(p, v)| *v == Some(key[*p])) {
                let g: Vec<u32> = group_pos.iter().map(|p| key[*p]).collect();
                groups.entry(g).or_insert_with(Agg::default).merge(agg);
            }
        }
        Ok(Some(data.finish(&c, groups)))
    }
}
