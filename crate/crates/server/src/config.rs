use std::collections::BTreeSet;

use orbitflow_core::conf::{self, parse_duration, ConfigError};
use orbitflow_core::tasks::DEFAULT_TASK_LEASE;
use orbitflow_core::warehouse::DEFAULT_WRINKLE;
use orbitflow_core::workorder::{RoutingRuleSet, WorkCenterId};

/// Settings for `serve`: the routing `[catalog]`/`[rules]` plus a
/// `[service]` section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub rules: RoutingRuleSet,
    pub manual_centers: BTreeSet<WorkCenterId>,
    /// Age in seconds before a completed order is loaded into the warehouse.
    pub wrinkle: i64,
    pub task_lease: i64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            rules: RoutingRuleSet::default_rules(),
            manual_centers: BTreeSet::from([WorkCenterId::Qc]),
            wrinkle: DEFAULT_WRINKLE,
            task_lease: DEFAULT_TASK_LEASE,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<ServiceConfig, ConfigError> {
        let sections = conf::parse_sections(text)?;
        let mut cfg = ServiceConfig::default();
        if sections.iter().any(|s| s.name == "rules" || s.name == "catalog") {
            cfg.rules = RoutingRuleSet::from_sections(&sections)?;
        }
        for line in sections.iter().filter(|s| s.name == "service").flat_map(|s| &s.lines) {
            let (key, value) = conf::key_value(line)?;
            let bad = || ConfigError::new(line.number, format!("bad value for {key}: {value:?}"));
            match key {
                "manual_centers" => {
                    cfg.manual_centers = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|c| c.parse().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?
                }
                "wrinkle" => cfg.wrinkle = parse_duration(value).ok_or_else(bad)?,
                "task_lease" => cfg.task_lease = parse_duration(value).filter(|l| *l > 0).ok_or_else(bad)?,
                _ => return Err(ConfigError::new(line.number, format!("unknown key {key:?}"))),
            }
        }
        Ok(cfg)
    }
}
