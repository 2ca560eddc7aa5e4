//! Simulation-clock timestamps.
//!
//! Nothing in this crate reads the wall clock; callers inject [`Timestamp`]s.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

pub const MINUTE: i64 = 60;
pub const HOUR: i64 = 60 * MINUTE;
pub const DAY: i64 = 24 * HOUR;

/// Seconds since the Unix epoch on the caller's clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_secs(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn secs(self) -> i64 {
        self.0
    }

    /// Midnight at the start of `date`.
    pub fn start_of(date: NaiveDate) -> Self {
        Timestamp(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
    }

    /// Last second of `date`.
    pub fn end_of(date: NaiveDate) -> Self {
        Timestamp(Self::start_of(date).0 + DAY - 1)
    }

    pub fn date(self) -> NaiveDate {
        DateTime::from_timestamp(self.0, 0)
            .map(|dt| dt.date_naive())
            .unwrap_or_default()
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl Sub<i64> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 - rhs)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn day_bounds() {
        let d = NaiveDate::from_ymd_opt(2008, 3, 1).unwrap();
        let start = Timestamp::start_of(d);
        assert_eq!(Timestamp::end_of(d) - start, DAY - 1);
        assert_eq!(start.date(), d);
        assert_eq!(Timestamp::end_of(d).date(), d);
        assert_eq!((Timestamp::end_of(d) + 1).date(), d.succ_opt().unwrap());
    }
}
