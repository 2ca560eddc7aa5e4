//! Generators and independent oracles shared by the integration suites.

#![allow(dead_code)]

pub mod bus_model;
pub mod corpus;
pub mod crash;

use std::collections::{BTreeMap, HashSet};

use chrono::{Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use orbitflow_core::time::HOUR;
use orbitflow_core::warehouse::{
    Agg, DimensionDef, Fact, Measure, Money, QueryResult, StarData, StarSchema, WarehouseQuery,
};
use orbitflow_core::workorder::{
    advance, create_work_order, set_parameter, CorrectionLevel, EventKind, IdSequence, Media, OrderStatus, Outcome,
    ProductSpec, ProductType, RoutingRuleSet, StepStatus, WorkCenterId, WorkOrder,
};
use orbitflow_core::Timestamp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- work orders -------------------------------------------------------

pub fn random_spec(rng: &mut impl Rng, rules: &RoutingRuleSet) -> ProductSpec {
    let sats: Vec<_> = rules.catalog.iter().collect();
    let (sat, sensors) = sats[rng.gen_range(0..sats.len())];
    let sensors: Vec<_> = sensors.iter().collect();
    ProductSpec {
        satellite: sat.clone(),
        sensor: sensors[rng.gen_range(0..sensors.len())].clone(),
        product_type: *ProductType::ALL.choose(rng).unwrap(),
        correction_level: *CorrectionLevel::ALL.choose(rng).unwrap(),
        media: *Media::ALL.choose(rng).unwrap(),
        path: rng.gen_range(1..=130),
        row: rng.gen_range(1..=120),
        acquisition_date: NaiveDate::from_ymd_opt(2005, 1, 1).unwrap() + Days::new(rng.gen_range(0..3000)),
    }
}

const PARAM_KEYS: [&str; 6] = ["scene_shift", "qc_note", "customer", "priority", "a.b-c", "x"];
const PARAM_VALUES: [&str; 8] = ["", "+1", "a & b", "<tag attr=\"v\">", "it's", "line\nbreak\tand tab", "  padded  ", "]]>"];

/// A fresh order driven through a random legal walk: starts, completions,
/// QC rejections to random earlier steps, parameter writes and occasional
/// cancellation. Clock steps may be zero.
pub fn random_order(rng: &mut impl Rng, rules: &RoutingRuleSet, ids: &IdSequence, max_steps: usize) -> WorkOrder {
    let mut t = Timestamp(1_200_000_000 + rng.gen_range(0..1_000_000));
    let mut wo = create_work_order(random_spec(rng, rules), rules, t, ids).expect("catalog spec");
    for _ in 0..rng.gen_range(0..=max_steps) {
        if !wo.is_open() {
            break;
        }
        t = t + rng.gen_range(0..HOUR);
        let step = wo.plan.current().unwrap().clone();
        let roll = rng.gen_range(0..100);
        wo = if roll < 10 {
            let k = PARAM_KEYS.choose(rng).unwrap();
            let v = PARAM_VALUES.choose(rng).unwrap();
            set_parameter(&wo, k, v, t).unwrap()
        } else if roll < 12 {
            advance(&wo, Outcome::Cancel, t).unwrap().0
        } else if step.status == StepStatus::Pending {
            advance(&wo, Outcome::Start, t).unwrap().0
        } else if step.center == WorkCenterId::Qc && roll < 40 {
            let target = wo.plan.steps[rng.gen_range(0..step.index)].center;
            advance(&wo, Outcome::Reject { target }, t).unwrap().0
        } else {
            advance(&wo, Outcome::Complete, t).unwrap().0
        };
    }
    wo
}

/// Drives an order to a terminal state with random rework.
pub fn finish_order(rng: &mut impl Rng, mut wo: WorkOrder, reject_p: f64) -> WorkOrder {
    let mut t = wo.last_update_at();
    while wo.is_open() {
        t = t + rng.gen_range(0..2 * HOUR);
        let step = wo.plan.current().unwrap().clone();
        let outcome = if step.status == StepStatus::Pending {
            Outcome::Start
        } else if step.center == WorkCenterId::Qc && rng.gen_bool(reject_p) {
            Outcome::Reject { target: wo.plan.steps[rng.gen_range(0..step.index)].center }
        } else {
            Outcome::Complete
        };
        wo = advance(&wo, outcome, t).unwrap().0;
    }
    wo
}

// ---- turnaround oracle -------------------------------------------------

/// Per-center residence totals recomputed by walking the plan index through
/// the history: (total seconds, visits).
pub fn brute_center_tat(orders: &[WorkOrder]) -> BTreeMap<String, (i64, u64)> {
    let mut out: BTreeMap<String, (i64, u64)> = BTreeMap::new();
    for wo in orders.iter().filter(|o| o.status == OrderStatus::Completed) {
        let plan: Vec<WorkCenterId> = wo.plan.steps.iter().map(|s| s.center).collect();
        let mut idx = 0usize;
        let mut since = wo.created_at;
        for e in &wo.history {
            let leave = match e.kind {
                EventKind::CompletedStep => Some(idx + 1),
                EventKind::Rejected => Some(plan.iter().position(|c| *c == e.center).unwrap()),
                _ => None,
            };
            if let Some(next) = leave {
                let cell = out.entry(plan[idx].to_string()).or_default();
                cell.0 += e.at.0 - since.0;
                cell.1 += 1;
                idx = next;
                since = e.at;
            }
        }
    }
    out
}

/// End-to-end turnaround of completed orders per product type.
pub fn brute_product_tat(orders: &[WorkOrder]) -> BTreeMap<String, (i64, u64)> {
    let mut out: BTreeMap<String, (i64, u64)> = BTreeMap::new();
    for wo in orders.iter().filter(|o| o.status == OrderStatus::Completed) {
        let done = wo.history.iter().rev().find(|e| e.kind == EventKind::CompletedStep).unwrap().at;
        let cell = out.entry(wo.spec.product_type.to_string()).or_default();
        cell.0 += done.0 - wo.created_at.0;
        cell.1 += 1;
    }
    out
}

// ---- warehouse ---------------------------------------------------------

/// A random star schema with data, plus the oracle's own copy of every
/// fact as plain strings.
pub struct Dataset {
    pub star: StarData,
    /// Attribute names as `dim.attr`, in schema order.
    pub attrs: Vec<String>,
    /// Values seen per attribute.
    pub domains: Vec<Vec<String>>,
    /// Every fact's attribute values (aligned with `attrs`) and measures.
    pub rows: Vec<(Vec<String>, u64, i64, i64)>,
}

/// Dimensions with 1..=3 attributes. Hierarchies are chains, and a parent
/// value is a function of the child value so snowflaking is lossless.
pub fn random_dataset(rng: &mut impl Rng, max_facts: usize) -> Dataset {
    let ndims = rng.gen_range(1..=4);
    let mut defs = Vec::new();
    // Per dimension: attribute names, parent indices, domain sizes.
    let mut shapes = Vec::new();
    for d in 0..ndims {
        let n = rng.gen_range(1..=3);
        let names: Vec<String> = (0..n).map(|a| format!("a{a}")).collect();
        // Attribute a may roll up to a + 1.
        let parents: Vec<Option<usize>> = (0..n).map(|a| (a + 1 < n && rng.gen_bool(0.7)).then_some(a + 1)).collect();
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=12)).collect();
        let attr_specs: Vec<(&str, Option<&str>)> =
            names.iter().zip(&parents).map(|(nm, p)| (nm.as_str(), p.map(|p| names[p].as_str()))).collect();
        defs.push(DimensionDef::new(&format!("d{d}"), &attr_specs));
        shapes.push((parents, sizes));
    }
    let schema = StarSchema::new("sales", defs).expect("generated schema is valid");
    let mut star = StarData::new(schema.clone());
    let attrs: Vec<String> =
        schema.dimensions.iter().flat_map(|d| d.attributes.iter().map(move |a| format!("{}.{}", d.name, a.name))).collect();

    // Fixed child -> parent value maps.
    let mut dim_rows: Vec<Vec<Vec<String>>> = Vec::new();
    for (d, (parents, sizes)) in shapes.iter().enumerate() {
        let n = parents.len();
        let maps: Vec<Vec<usize>> =
            (0..n).map(|a| match parents[a] { Some(p) => (0..sizes[a]).map(|_| rng.gen_range(0..sizes[p])).collect(), None => vec![] }).collect();
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for _ in 0..rng.gen_range(1..=25) {
            let mut vals: Vec<Option<usize>> = vec![None; n];
            for a in 0..n {
                let is_child = parents.contains(&Some(a));
                if !is_child {
                    // Chain start: pick freely, then derive ancestors.
                    let mut cur = a;
                    let mut v = rng.gen_range(0..sizes[a]);
                    vals[cur] = Some(v);
                    while let Some(p) = parents[cur] {
                        v = maps[cur][v];
                        vals[p] = Some(v);
                        cur = p;
                    }
                }
            }
            // Values repeat across attributes and dimensions on purpose.
            let row: Vec<String> = vals.iter().map(|v| format!("v{}", v.unwrap())).collect();
            if seen.insert(row.clone()) {
                let refs: Vec<&str> = row.iter().map(String::as_str).collect();
                star.upsert(d, &refs);
                rows.push(row);
            }
        }
        dim_rows.push(rows);
    }

    let nfacts = rng.gen_range(0..=max_facts);
    let mut rows = Vec::with_capacity(nfacts);
    for _ in 0..nfacts {
        let keys: Vec<u32> = dim_rows.iter().map(|r| rng.gen_range(0..r.len()) as u32).collect();
        let quantity = rng.gen_range(1..=5);
        let amount = rng.gen_range(0..1_000_000);
        let tat = rng.gen_range(0..30 * 86_400);
        star.push_fact(Fact { keys: keys.clone(), quantity, amount: Money(amount), tat }).unwrap();
        let values: Vec<String> = keys.iter().enumerate().flat_map(|(d, k)| dim_rows[d][*k as usize].clone()).collect();
        rows.push((values, quantity, amount, tat));
    }
    let mut domains = vec![Vec::new(); attrs.len()];
    for (values, ..) in &rows {
        for (i, v) in values.iter().enumerate() {
            if !domains[i].contains(v) {
                domains[i].push(v.clone());
            }
        }
    }
    Dataset { star, attrs, domains, rows }
}

pub fn random_query(rng: &mut impl Rng, ds: &Dataset) -> WarehouseQuery {
    let n = ds.attrs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let group: Vec<String> = idx[..rng.gen_range(0..=n.min(3))].iter().map(|i| ds.attrs[*i].clone()).collect();
    let mut filters = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let a = rng.gen_range(0..n);
        let value = match ds.domains[a].choose(rng) {
            Some(v) if rng.gen_bool(0.9) => v.clone(),
            _ => "missing".to_string(),
        };
        filters.push((ds.attrs[a].clone(), value));
    }
    let measure = *Measure::ALL.choose(rng).unwrap();
    WarehouseQuery { group_by: group, measure, filters }
}

/// Group-by over the oracle's string rows. Without grouping attributes the
/// answer is a single row, as in SQL.
pub fn brute_force(ds: &Dataset, q: &WarehouseQuery) -> Vec<(Vec<String>, Agg)> {
    let pos = |name: &String| ds.attrs.iter().position(|a| a == name).unwrap();
    let group: Vec<usize> = q.group_by.iter().map(pos).collect();
    let filters: Vec<(usize, &String)> = q.filters.iter().map(|(a, v)| (pos(a), v)).collect();
    let mut out: BTreeMap<Vec<String>, Agg> = BTreeMap::new();
    for (values, quantity, amount, tat) in &ds.rows {
        if filters.iter().all(|(i, v)| values[*i] == **v) {
            let key: Vec<String> = group.iter().map(|i| values[*i].clone()).collect();
            let agg = out.entry(key).or_default();
            agg.count += 1;
            agg.quantity += quantity;
            agg.amount = Money(agg.amount.0 + amount);
            agg.tat_sum += tat;
        }
    }
    if group.is_empty() && out.is_empty() {
        out.insert(Vec::new(), Agg::default());
    }
    out.into_iter().collect()
}

pub fn rows_of(r: &QueryResult) -> Vec<(Vec<String>, Agg)> {
    r.rows.iter().map(|row| (row.group.clone(), row.agg)).collect()
}

/// Runs `queries` random queries against one dataset through every path:
/// brute force, scan (both executors), aggregates, snowflake and the
/// denormalized snowflake. Panics on the first disagreement.
pub fn check_dataset(rng: &mut impl Rng, ds: &Dataset, queries: usize) {
    use orbitflow_core::par::Exec;
    use orbitflow_core::warehouse::{build_aggregates, normalize_to_snowflake};

    let qs: Vec<WarehouseQuery> = (0..queries).map(|_| random_query(rng, ds)).collect();
    // One cuboid per query: exactly its attributes, or those plus one more
    // so the re-aggregation path is exercised too.
    let subsets: Vec<_> = qs
        .iter()
        .map(|q| {
            let mut s: Vec<_> = q.group_by.iter().chain(q.filters.iter().map(|(a, _)| a)).map(|a| ds.star.schema.resolve(a).unwrap()).collect();
            if rng.gen_bool(0.5) {
                s.push(ds.star.schema.resolve(ds.attrs.choose(rng).unwrap()).unwrap());
            }
            s
        })
        .collect();
    let cube = build_aggregates(&ds.star, &subsets, Exec::Parallel);
    let snow = normalize_to_snowflake(&ds.star).unwrap();
    let back = snow.denormalize();
    for d in 0..ds.star.dims.len() {
        assert_eq!(back.dim_rows(d), ds.star.dim_rows(d), "dimension {d} changed through the snowflake");
    }
    assert_eq!(back.facts, ds.star.facts);

    for q in &qs {
        let want = brute_force(ds, q);
        let scan = ds.star.scan(q, Exec::Sequential).unwrap();
        let cols: Vec<&str> = scan.columns.iter().map(String::as_str).collect();
        assert_eq!(cols, q.group_by.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(rows_of(&scan), want, "scan {q:?}");
        assert_eq!(rows_of(&ds.star.scan(q, Exec::Parallel).unwrap()), want, "parallel scan {q:?}");
        let from_cube = cube.answer(&ds.star, q).unwrap().expect("a cuboid covers every query");
        assert_eq!(rows_of(&from_cube), want, "cube {q:?}");
        assert_eq!(rows_of(&snow.query(q, Exec::Parallel).unwrap()), want, "snowflake {q:?}");
        assert_eq!(rows_of(&back.scan(q, Exec::Sequential).unwrap()), want, "denormalized {q:?}");
    }
}
