use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::par::Exec;
use crate::store::OperationalStore;
use crate::time::{Timestamp, DAY};
use crate::workorder::{EventKind, OrderStatus, ProductType, WorkCenterId, WorkOrder, WorkOrderId};

use super::cube::{build_aggregates, power_set, AggregateCube};
use super::schema::{AttrRef, DimensionDef, StarSchema};
use super::star::{Fact, Measure, MeasureValue, QueryResult, StarData, WarehouseQuery};
use super::tsv::Table;
use super::{Money, WarehouseError};

/// Orders are eligible for loading once untouched for this long.
pub const DEFAULT_WRINKLE: i64 = DAY;

const CUSTOMER: usize = 0;
const SATELLITE: usize = 1;
const SENSOR: usize = 2;
const PRODUCT_TYPE: usize = 3;
const CORRECTION_LEVEL: usize = 4;

pub fn product_sales_schema() -> StarSchema {
    StarSchema::new(
        "sales",
        vec![
            DimensionDef::new("customer", &[("name", Some("region")), ("region", None)]),
            DimensionDef::new("satellite", &[("name", None), ("launch_year", None)]),
            DimensionDef::new("sensor", &[("name", Some("satellite")), ("satellite", None)]),
            DimensionDef::new("product_type", &[("name", None)]),
            DimensionDef::new("correction_level", &[("name", None)]),
        ],
    )
    .expect("product sales schema is valid")
}

pub fn launch_year(satellite: &str) -> &'static str {
    match satellite {
        "IRS-1C" => "1995",
        "IRS-1D" => "1997",
        "IRS-P6" => "2003",
        "IRS-P5" => "2005",
        "CARTOSAT-2" => "2007",
        _ => "unknown",
    }
}

/// List price per unit when an order carries no `amount` parameter.
pub fn price_of(pt: ProductType) -> Money {
    match pt {
        ProductType::Standard => Money::from_units(1000),
        ProductType::Precision => Money::from_units(2500),
        ProductType::ValueAdded => Money::from_units(4000),
    }
}

/// One stay of an order at a center: from the moment it is routed there
/// (creation, completion of the previous step, or a QC rejection) until the
/// step completes or QC sends it back. Waiting and service time both count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub order: WorkOrderId,
    pub center: WorkCenterId,
    pub entered: Timestamp,
    pub exited: Timestamp,
}

/// Visits of a completed order cover its whole life without gaps, so their
/// durations add up to its end-to-end turnaround.
pub fn extract_visits(wo: &WorkOrder) -> Vec<Visit> {
    let centers = wo.plan.centers();
    let mut out = Vec::new();
    let mut open: Option<(WorkCenterId, Timestamp)> = None;
    let mut close = |open: &mut Option<(WorkCenterId, Timestamp)>, at: Timestamp| {
        if let Some((center, entered)) = open.take() {
            out.push(Visit { order: wo.id.clone(), center, entered, exited: at });
        }
    };
    for e in &wo.history {
        match e.kind {
            EventKind::Created => open = centers.first().map(|c| (*c, e.at)),
            EventKind::CompletedStep => {
                close(&mut open, e.at);
                let next = centers.iter().position(|c| *c == e.center).and_then(|i| centers.get(i + 1));
                open = next.map(|c| (*c, e.at));
            }
            // The event names the rework target.
            EventKind::Rejected => {
                close(&mut open, e.at);
                open = Some((e.center, e.at));
            }
            EventKind::Cancelled => open = None,
            EventKind::Started | EventKind::ParamSet => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TatBy {
    Center,
    ProductType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TatRow {
    pub key: String,
    pub total_seconds: i64,
    pub samples: u64,
}

impl TatRow {
    pub fn mean(&self) -> MeasureValue {
        MeasureValue::Mean { sum: self.total_seconds, count: self.samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub facts_added: usize,
    /// Completed orders still inside the wrinkle window.
    pub rows_skipped: usize,
    /// Completed orders whose parameters could not be transformed.
    pub invalid: usize,
}

/// The product-sales warehouse.
#[derive(Debug, Clone)]
pub struct Warehouse {
    pub data: StarData,
    pub fact_orders: Vec<WorkOrderId>,
    pub visits: Vec<Visit>,
    pub cube: AggregateCube,
    pub cube_subsets: Vec<Vec<AttrRef>>,
    pub exec: Exec,
    loaded: BTreeSet<WorkOrderId>,
}

impl Default for Warehouse {
    fn default() -> Self {
        Warehouse::new()
    }
}

impl Warehouse {
    pub fn new() -> Warehouse {
        let schema = product_sales_schema();
        let names = ["customer.name", "customer.region", "satellite.name", "sensor.name", "product_type", "correction_level"];
        let attrs: Vec<AttrRef> = names.iter().map(|n| schema.resolve(n).expect("known attribute")).collect();
        Warehouse {
            data: StarData::new(schema),
            fact_orders: Vec::new(),
            visits: Vec::new(),
            cube: AggregateCube::default(),
            cube_subsets: power_set(&attrs),
            exec: Exec::default(),
            loaded: BTreeSet::new(),
        }
    }

    pub fn is_loaded(&self, id: &WorkOrderId) -> bool {
        self.loaded.contains(id)
    }

    pub fn loaded_count(&self) -> usize {
        self.loaded.len()
    }

    fn check_schema(&self) -> Result<(), WarehouseError> {
        if self.data.schema != product_sales_schema() {
            return Err(WarehouseError::SchemaMismatch("warehouse is not the product sales schema".into()));
        }
        Ok(())
    }

    fn fact_for(&mut self, wo: &WorkOrder) -> Result<Fact, String> {
        let param = |k: &str| wo.parameters.get(k).map(String::as_str);
        let quantity: u64 = match param("quantity") {
            Some(q) => q.trim().parse().map_err(|_| format!("quantity {q:?}"))?,
            None => 1,
        };
        let amount = match param("amount") {
            Some(a) => a.trim().parse::<Money>().map_err(|_| format!("amount {a:?}"))?,
            None => price_of(wo.spec.product_type).times(quantity),
        };
        if amount.0 < 0 {
            return Err("negative amount".into());
        }
        let completed = wo.completed_at().ok_or("not completed")?;
        let s = &wo.spec;
        let keys = vec![
            self.data.upsert(CUSTOMER, &[param("customer").unwrap_or("UNKNOWN"), param("region").unwrap_or("UNKNOWN")]),
            self.data.upsert(SATELLITE, &[&s.satellite, launch_year(&s.satellite)]),
            self.data.upsert(SENSOR, &[&s.sensor, &s.satellite]),
            self.data.upsert(PRODUCT_TYPE, &[s.product_type.as_str()]),
            self.data.upsert(CORRECTION_LEVEL, &[s.correction_level.as_str()]),
        ];
        Ok(Fact { keys, quantity, amount, tat: completed - wo.created_at })
    }

    /// Loads one completed order; false if it was already loaded.
    pub fn load_order(&mut self, wo: &WorkOrder) -> Result<bool, WarehouseError> {
        self.check_schema()?;
        if self.loaded.contains(&wo.id) {
            return Ok(false);
        }
        if wo.status != OrderStatus::Completed {
            return Err(WarehouseError::SchemaMismatch(format!("{} is not completed", wo.id)));
        }
        let fact = self.fact_for(wo).map_err(WarehouseError::SchemaMismatch)?;
        self.data.push_fact(fact)?;
        self.fact_orders.push(wo.id.clone());
        self.visits.extend(extract_visits(wo));
        self.loaded.insert(wo.id.clone());
        Ok(true)
    }

    pub fn rebuild_aggregates(&mut self) {
        self.cube = build_aggregates(&self.data, &self.cube_subsets, self.exec);
    }

    /// Answers from the aggregates when a cuboid covers the query, else by
    /// scanning the facts.
    pub fn query(&self, q: &WarehouseQuery) -> Result<QueryResult, WarehouseError> {
        match self.cube.answer(&self.data, q)? {
            Some(r) => Ok(r),
            None => self.data.scan(q, self.exec),
        }
    }

    pub fn report_tat(&self, by: TatBy) -> Vec<TatRow> {
        match by {
            TatBy::Center => {
                let mut acc: BTreeMap<&str, (i64, u64)> = BTreeMap::new();
                for v in &self.visits {
                    let e = acc.entry(v.center.as_str()).or_default();
                    e.0 += v.exited - v.entered;
                    e.1 += 1;
                }
                acc.into_iter()
                    .map(|(k, (total, n))| TatRow { key: k.to_string(), total_seconds: total, samples: n })
                    .collect()
            }
            TatBy::ProductType => {
                let q = WarehouseQuery::new(&["product_type"], Measure::AvgTat);
                self.query(&q)
                    .expect("product_type is a known attribute")
                    .rows
                    .into_iter()
                    .map(|r| TatRow { key: r.group[0].clone(), total_seconds: r.agg.tat_sum, samples: r.agg.count })
                    .collect()
            }
        }
    }

    /// Writes every table as `<name>.tsv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), WarehouseError> {
        let io = |e: std::io::Error| WarehouseError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        let schema = &self.data.schema;
        let mut st = Table::new(&["dimension", "attribute", "parent"]);
        for d in &schema.dimensions {
            for a in &d.attributes {
                st.rows.push(vec![d.name.clone(), a.name.clone(), a.parent.clone().unwrap_or_default()]);
            }
        }
        st.write(&dir.join("schema.tsv")).map_err(io)?;
        for (i, d) in schema.dimensions.iter().enumerate() {
            let mut header = vec!["key".to_string()];
            header.extend(d.attributes.iter().map(|a| a.name.clone()));
            let rows = self
                .data
                .dim_rows(i)
                .into_iter()
                .enumerate()
                .map(|(k, mut r)| {
                    r.insert(0, k.to_string());
                    r
                })
                .collect();
            Table { header, rows }.write(&dir.join(format!("dim_{}.tsv", d.name))).map_err(io)?;
        }
        let mut header = vec!["order".to_string()];
        header.extend(schema.dimensions.iter().map(|d| format!("{}_key", d.name)));
        header.extend(["quantity", "amount", "tat"].map(String::from));
        let mut facts = Table { header, rows: Vec::new() };
        for (f, id) in self.data.facts.iter().zip(&self.fact_orders) {
            let mut row = vec![id.to_string()];
            row.extend(f.keys.iter().map(u32::to_string));
            row.extend([f.quantity.to_string(), f.amount.to_string(), f.tat.to_string()]);
            facts.rows.push(row);
        }
        facts.write(&dir.join(format!("fact_{}.tsv", schema.fact))).map_err(io)?;
        let mut visits = Table::new(&["order", "center", "entered", "exited"]);
        for v in &self.visits {
            visits.rows.push(vec![v.order.to_string(), v.center.to_string(), v.entered.to_string(), v.exited.to_string()]);
        }
        visits.write(&dir.join("visits.tsv")).map_err(io)?;
        let mut cubes = Table::new(&["cuboid", "attributes"]);
        for (i, cb) in self.cube.cuboids.iter().enumerate() {
            let names: Vec<String> = cb.attrs.iter().map(|a| schema.attr_name(*a)).collect();
            cubes.rows.push(vec![format!("agg_{i}"), names.join(",")]);
            let mut header = names.clone();
            header.extend(["count", "quantity", "amount", "tat_sum"].map(String::from));
            let mut rows: Vec<Vec<String>> = cb
                .cells
                .iter()
                .map(|(key, agg)| {
                    let mut row: Vec<String> = cb
                        .attrs
                        .iter()
                        .zip(key)
                        .map(|(a, id)| self.data.dims[a.dim].dictionary(a.attr)[*id as usize].clone())
                        .collect();
                    row.extend([agg.count.to_string(), agg.quantity.to_string(), agg.amount.to_string(), agg.tat_sum.to_string()]);
                    row
                })
                .collect();
            rows.sort();
            Table { header, rows }.write(&dir.join(format!("agg_{i}.tsv"))).map_err(io)?;
        }
        cubes.write(&dir.join("cubes.tsv")).map_err(io)?;
        Ok(())
    }

    /// Reads a directory written by [`Warehouse::save`]. Aggregates are
    /// rebuilt from the facts.
    pub fn load(dir: &Path) -> Result<Warehouse, WarehouseError> {
        let bad = |m: String| WarehouseError::BadTable(m);
        let st = Table::read(&dir.join("schema.tsv"))?;
        let mut dims: Vec<(String, Vec<(String, Option<String>)>)> = Vec::new();
        for r in &st.rows {
            let parent = (!r[2].is_empty()).then(|| r[2].clone());
            match dims.last_mut() {
                Some((name, attrs)) if *name == r[0] => attrs.push((r[1].clone(), parent)),
                _ => dims.push((r[0].clone(), vec![(r[1].clone(), parent)])),
            }
        }
        let defs = dims
            .iter()
            .map(|(n, attrs)| {
                let a: Vec<(&str, Option<&str>)> = attrs.iter().map(|(x, p)| (x.as_str(), p.as_deref())).collect();
                DimensionDef::new(n, &a)
            })
            .collect();
        let schema = StarSchema::new("sales", defs)?;
        let mut wh = Warehouse::new();
        if schema != wh.data.schema {
            return Err(WarehouseError::SchemaMismatch("stored schema differs from the product sales schema".into()));
        }
        for (i, d) in schema.dimensions.iter().enumerate() {
            let t = Table::read(&dir.join(format!("dim_{}.tsv", d.name)))?;
            for (k, row) in t.rows.iter().enumerate() {
                let values: Vec<&str> = row[1..].iter().map(String::as_str).collect();
                if wh.data.upsert(i, &values) as usize != k || row[0] != k.to_string() {
                    return Err(bad(format!("dim_{} row {k} is out of order or repeated", d.name)));
                }
            }
        }
        let facts = Table::read(&dir.join(format!("fact_{}.tsv", schema.fact)))?;
        let n = schema.dimensions.len();
        for row in &facts.rows {
            let num = |s: &str| s.parse::<i64>().map_err(|_| bad(format!("bad number {s:?}")));
            let keys = row[1..=n].iter().map(|k| num(k).map(|v| v as u32)).collect::<Result<Vec<_>, _>>()?;
            let fact = Fact { keys, quantity: num(&row[n + 1])? as u64, amount: row[n + 2].parse()?, tat: num(&row[n + 3])? };
            wh.data.push_fact(fact)?;
            let id = WorkOrderId::from(row[0].as_str());
            wh.loaded.insert(id.clone());
            wh.fact_orders.push(id);
        }
        let visits = Table::read(&dir.join("visits.tsv"))?;
        for row in &visits.rows {
            let t = |s: &str| s.parse::<i64>().map(Timestamp).map_err(|_| bad(format!("bad time {s:?}")));
            wh.visits.push(Visit {
                order: row[0].as_str().into(),
                center: row[1].parse().map_err(|e: crate::workorder::UnknownVariant| bad(e.to_string()))?,
                entered: t(&row[2])?,
                exited: t(&row[3])?,
            });
        }
        let cubes = Table::read(&dir.join("cubes.tsv"))?;
        wh.cube_subsets = cubes
            .rows
            .iter()
            .map(|r| {
                r[1].split(',').filter(|s| !s.is_empty()).map(|a| schema.resolve(a)).collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        wh.rebuild_aggregates();
        Ok(wh)
    }
}

/// Loads every completed order last touched at or before `now - wrinkle`
/// that is not loaded yet, then rebuilds the aggregates.
pub fn etl_run(store: &OperationalStore, wrinkle: i64, now: Timestamp, wh: &mut Warehouse) -> Result<LoadReport, WarehouseError> {
    wh.check_schema()?;
    let cutoff = now - wrinkle;
    let mut report = LoadReport::default();
    for wo in store.all_orders() {
        if wo.status != OrderStatus::Completed || wh.is_loaded(&wo.id) {
            continue;
        }
        if wo.last_update_at() > cutoff {
            report.rows_skipped += 1;
            continue;
        }
        match wh.load_order(&wo) {
            Ok(true) => report.facts_added += 1,
            Ok(false) => {}
            Err(WarehouseError::SchemaMismatch(_)) => report.invalid += 1,
            Err(e) => return Err(e),
        }
    }
    wh.rebuild_aggregates();
    Ok(report)
}
