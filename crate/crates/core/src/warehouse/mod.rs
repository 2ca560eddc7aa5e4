//! Analytical store for completed orders: a star schema with interned
//! dimension tables, precomputed aggregates, snowflake normalization, the
//! ETL from the operational store, and turnaround-time reports.

mod cube;
mod product;
mod schema;
mod snowflake;
mod star;
pub mod tsv;

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use cube::{build_aggregates, power_set, AggregateCube, Cuboid};
pub use product::{
    etl_run, extract_visits, launch_year, price_of, product_sales_schema, LoadReport, TatBy, TatRow, Visit,
    Warehouse, DEFAULT_WRINKLE,
};
pub use schema::{AttrRef, AttributeDef, DimensionDef, StarSchema, MEASURES};
pub use snowflake::{normalize_to_snowflake, LevelTable, SnowDimension, SnowflakeData};
pub use star::{drilldown, rollup, Agg, DimTable, Fact, Measure, MeasureValue, QueryResult, ResultRow, StarData, WarehouseQuery};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WarehouseError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("hierarchy of dimension {0} is cyclic")]
    CyclicHierarchy(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {0:?} matches more than one dimension")]
    AmbiguousAttribute(String),
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("fact references missing {dimension} row {key}")]
    DanglingKey { dimension: String, key: u32 },
    #[error("bad amount {0:?}")]
    BadAmount(String),
    #[error("bad table: {0}")]
    BadTable(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Currency amount in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(pub i64);

impl Money {
    pub const fn from_units(units: i64) -> Money {
        Money(units * 100)
    }

    pub fn times(self, n: u64) -> Money {
        Money(self.0 * n as i64)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, o: Money) -> Money {
        Money(self.0 + o.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money(0), |a, b| a + b)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = WarehouseError;

    /// Accepts `123`, `123.4` and `123.45`, optionally negative.
    fn from_str(s: &str) -> Result<Money, WarehouseError> {
        let bad = || WarehouseError::BadAmount(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (units, frac) = body.split_once('.').unwrap_or((body, ""));
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if !digits(units) || (body.contains('.') && !digits(frac)) || frac.len() > 2 {
            return Err(bad());
        }
        let units: i64 = units.parse().map_err(|_| bad())?;
        let cents: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<2}").parse().map_err(|_| bad())? };
        let total = units.checked_mul(100).and_then(|u| u.checked_add(cents)).ok_or_else(bad)?;
        Ok(Money(if neg { -total } else { total }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}
