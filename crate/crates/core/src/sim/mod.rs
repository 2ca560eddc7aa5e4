//! Deterministic discrete-event simulation of the production chain.
//!
//! Synthetic orders arrive through the [`Plant`](crate::plant::Plant), and
//! one logical agent per automated work center consumes its
//! `workorder.assigned.<center>` queue, starts the step, holds it for a drawn
//! service time and completes it. Everything runs on one thread against a
//! simulated clock, so a seed fully determines the run.

mod clock;
mod engine;
mod generate;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::conf::{self, parse_duration, ConfigError, Section};
use crate::par::{self, Exec};
use crate::plant::PlantError;
use crate::time::{HOUR, MINUTE};
use crate::workorder::{CorrectionLevel, Media, ProductType, RoutingRuleSet, WorkCenterId};

pub use clock::Clock;
pub use engine::{AdifRecord, AttitudeQuality, Simulation};
pub use generate::{generate_orders, OrderArrival};
pub use report::{CenterStats, QueueSample, SimReport, SUMMARY_TEMPLATE};

/// The shipped simulator configuration.
pub const DEFAULT_SIM_CONFIG: &str = include_str!("../../config/sim.conf");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Orders per simulated day.
    pub order_rate: u32,
    /// Days during which orders arrive.
    pub duration_days: u32,
    pub start_date: NaiveDate,
    /// Inclusive (min, max) service time in seconds.
    pub service_times: BTreeMap<WorkCenterId, (i64, i64)>,
    /// Parallel servers per center.
    pub servers: BTreeMap<WorkCenterId, u32>,
    /// Centers handed to human operators when `auto_qc` is off.
    pub manual_centers: BTreeSet<WorkCenterId>,
    pub qc_reject_probability: f64,
    pub reject_target: WorkCenterId,
    /// QC rejections after which a further rejection cancels the order.
    pub max_rework: u32,
    pub auto_qc: bool,
    pub adif_late_probability: f64,
    /// Inclusive (min, max) delay of late ADIF records in seconds.
    pub adif_delay: (i64, i64),
    pub product_mix: Vec<(ProductType, u32)>,
    pub media_mix: Vec<(Media, u32)>,
    pub correction_mix: Vec<(CorrectionLevel, u32)>,
    pub sample_interval: i64,
    /// Extra days allowed for in-flight orders to finish after arrivals stop.
    pub drain_days: u32,
    pub rules: RoutingRuleSet,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::parse(DEFAULT_SIM_CONFIG).expect("shipped simulator config parses")
    }
}

fn parse_range(s: &str) -> Option<(i64, i64)> {
    let (a, b) = s.split_once("..")?;
    Some((parse_duration(a)?, parse_duration(b)?))
}

fn parse_mix<T: FromStr>(s: &str) -> Option<Vec<(T, u32)>> {
    s.split(',')
        .map(|item| {
            let (k, w) = item.split_once(':')?;
            Some((k.trim().parse().ok()?, w.trim().parse().ok()?))
        })
        .collect()
}

impl SimConfig {
    /// Placeholder values for keys a config file leaves out, sized for a
    /// plausible load of about a hundred orders a day.
    fn builtin(rules: RoutingRuleSet) -> SimConfig {
        use WorkCenterId::*;
        SimConfig {
            seed: 42,
            order_rate: 100,
            duration_days: 10,
            start_date: NaiveDate::from_ymd_opt(2008, 1, 1).expect("valid date"),
            service_times: [
                (Urp, (2 * MINUTE, 10 * MINUTE)),
                (Dp, (10 * MINUTE, 30 * MINUTE)),
                (Val, (15 * MINUTE, 45 * MINUTE)),
                (Film, (20 * MINUTE, 40 * MINUTE)),
                (Photo, (20 * MINUTE, 40 * MINUTE)),
                (Qc, (3 * MINUTE, 12 * MINUTE)),
                (Dispatch, (MINUTE, 5 * MINUTE)),
            ]
            .into(),
            servers: [(Dp, 2)].into(),
            manual_centers: [Qc].into(),
            qc_reject_probability: 0.05,
            reject_target: Dp,
            max_rework: 3,
            auto_qc: true,
            adif_late_probability: 0.2,
            adif_delay: (HOUR, 6 * HOUR),
            product_mix: vec![(ProductType::Standard, 6), (ProductType::Precision, 3), (ProductType::ValueAdded, 1)],
            media_mix: vec![(Media::Digital, 8), (Media::Film, 1), (Media::Photo, 1)],
            correction_mix: vec![
                (CorrectionLevel::Raw, 1),
                (CorrectionLevel::Radiometric, 3),
                (CorrectionLevel::Geo, 4),
                (CorrectionLevel::Ortho, 2),
            ],
            sample_interval: HOUR,
            drain_days: 30,
            rules,
        }
    }

    /// Reads the `[sim]` section plus the routing `[catalog]` and `[rules]`.
    /// Without routing sections the shipped rules apply.
    pub fn parse(text: &str) -> Result<SimConfig, SimError> {
        let sections = conf::parse_sections(text)?;
        let has_routing = sections.iter().any(|s| s.name == "rules" || s.name == "catalog");
        let rules = if has_routing {
            RoutingRuleSet::from_sections(&sections)?
        } else {
            RoutingRuleSet::default_rules()
        };
        let mut cfg = SimConfig::builtin(rules);
        for section in sections.iter().filter(|s| s.name == "sim") {
            cfg.apply_section(section)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_section(&mut self, section: &Section) -> Result<(), SimError> {
        for line in &section.lines {
            let (key, value) = conf::key_value(line)?;
            let bad = || SimError::Config(ConfigError::new(line.number, format!("bad value for {key}: {value:?}")));
            let center = |name: &str| name.parse::<WorkCenterId>().map_err(|_| bad());
            match key {
                "seed" => self.seed = value.parse().map_err(|_| bad())?,
                "order_rate" => self.order_rate = value.parse().map_err(|_| bad())?,
                "duration_days" => self.duration_days = value.parse().map_err(|_| bad())?,
                "start_date" => self.start_date = value.parse().map_err(|_| bad())?,
                "auto_qc" => self.auto_qc = value.parse().map_err(|_| bad())?,
                "manual_centers" => {
                    self.manual_centers =
                        value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(center).collect::<Result<_, _>>()?
                }
                "qc_reject_probability" => self.qc_reject_probability = value.parse().map_err(|_| bad())?,
                "reject_target" => self.reject_target = center(value)?,
                "max_rework" => self.max_rework = value.parse().map_err(|_| bad())?,
                "adif_late_probability" => self.adif_late_probability = value.parse().map_err(|_| bad())?,
                "adif_delay" => self.adif_delay = parse_range(value).ok_or_else(bad)?,
                "sample_interval" => self.sample_interval = parse_duration(value).ok_or_else(bad)?,
                "drain_days" => self.drain_days = value.parse().map_err(|_| bad())?,
                "mix.product_type" => self.product_mix = parse_mix(value).ok_or_else(bad)?,
                "mix.media" => self.media_mix = parse_mix(value).ok_or_else(bad)?,
                "mix.correction_level" => self.correction_mix = parse_mix(value).ok_or_else(bad)?,
                _ => {
                    if let Some(c) = key.strip_prefix("service.") {
                        self.service_times.insert(center(c)?, parse_range(value).ok_or_else(bad)?);
                    } else if let Some(c) = key.strip_prefix("servers.") {
                        self.servers.insert(center(c)?, value.parse().map_err(|_| bad())?);
                    } else {
                        return Err(ConfigError::new(line.number, format!("unknown key {key:?}")).into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::Invalid(m));
        for (c, (lo, hi)) in &self.service_times {
            if *lo < 0 || lo > hi {
                return invalid(format!("service time of {c} must satisfy 0 <= min <= max"));
            }
        }
        let used: BTreeSet<WorkCenterId> = self.rules.rules.iter().flat_map(|r| r.centers.iter().copied()).collect();
        if let Some(c) = used.iter().find(|c| !self.service_times.contains_key(c)) {
            return invalid(format!("no service time for {c}"));
        }
        if let Some((c, _)) = self.servers.iter().find(|(_, n)| **n == 0) {
            return invalid(format!("{c} needs at least one server"));
        }
        for (name, p) in [("qc_reject_probability", self.qc_reject_probability), ("adif_late_probability", self.adif_late_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.adif_delay.0 < 0 || self.adif_delay.0 > self.adif_delay.1 {
            return invalid("adif_delay must satisfy 0 <= min <= max".into());
        }
        if self.sample_interval <= 0 {
            return invalid("sample_interval must be positive".into());
        }
        let weights = [
            self.product_mix.iter().map(|x| x.1).sum::<u32>(),
            self.media_mix.iter().map(|x| x.1).sum(),
            self.correction_mix.iter().map(|x| x.1).sum(),
        ];
        if weights.contains(&0) {
            return invalid("every mix needs a positive total weight".into());
        }
        if matches!(self.reject_target, WorkCenterId::Qc | WorkCenterId::Dispatch) {
            return invalid("reject target must precede QC".into());
        }
        if self.rules.catalog.is_empty() {
            return invalid("catalog is empty".into());
        }
        Ok(())
    }

    pub fn servers_at(&self, c: WorkCenterId) -> u32 {
        self.servers.get(&c).copied().unwrap_or(1)
    }

    /// Centers run by operators in this configuration.
    pub fn effective_manual_centers(&self) -> BTreeSet<WorkCenterId> {
        if self.auto_qc {
            BTreeSet::new()
        } else {
            self.manual_centers.clone()
        }
    }
}

/// Runs one simulation to completion.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport, SimError> {
    let mut sim = Simulation::new(cfg.clone())?;
    sim.run()?;
    Ok(sim.report())
}

/// Runs `n` independent replications with seeds `cfg.seed`, `cfg.seed + 1`,
/// and so on. The result does not depend on `exec`.
pub fn run_replications(cfg: &SimConfig, n: usize, exec: Exec) -> Result<Vec<SimReport>, SimError> {
    let seeds: Vec<u64> = (0..n as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    par::map(exec, &seeds, |&seed| run_simulation(&SimConfig { seed, ..cfg.clone() })).into_iter().collect()
}
