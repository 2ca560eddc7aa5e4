use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::conf::{self, ConfigError, Section};

use super::{ProductSpec, ProductType, RoutingPlan, WorkCenterId, WorkOrderError};

/// The shipped routing table.
pub const DEFAULT_RULES: &str = include_str!("../../config/routing.conf");

/// Product fields a rule predicate can test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecField {
    Satellite,
    Sensor,
    ProductType,
    CorrectionLevel,
    Media,
}

impl SpecField {
    fn value_of(self, spec: &ProductSpec) -> &str {
        match self {
            SpecField::Satellite => &spec.satellite,
            SpecField::Sensor => &spec.sensor,
            SpecField::ProductType => spec.product_type.as_str(),
            SpecField::CorrectionLevel => spec.correction_level.as_str(),
            SpecField::Media => spec.media.as_str(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            SpecField::Satellite => "satellite",
            SpecField::Sensor => "sensor",
            SpecField::ProductType => "product_type",
            SpecField::CorrectionLevel => "correction_level",
            SpecField::Media => "media",
        }
    }
}

impl FromStr for SpecField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "satellite" => SpecField::Satellite,
            "sensor" => SpecField::Sensor,
            "product_type" => SpecField::ProductType,
            "correction_level" => SpecField::CorrectionLevel,
            "media" => SpecField::Media,
            other => return Err(format!("unknown predicate field {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingRule {
    /// Conjunction of field equalities; empty for the default rule.
    pub predicate: Vec<(SpecField, String)>,
    pub centers: Vec<WorkCenterId>,
}

impl RoutingRule {
    pub fn matches(&self, spec: &ProductSpec) -> bool {
        self.predicate.iter().all(|(field, value)| field.value_of(spec) == value)
    }

    pub fn is_default(&self) -> bool {
        self.predicate.is_empty()
    }

    fn check(&self) -> Result<(), String> {
        let c = &self.centers;
        if c.first() != Some(&WorkCenterId::Urp) {
            return Err(format!("rule {self} must start at URP"));
        }
        if c.last() != Some(&WorkCenterId::Dispatch) {
            return Err(format!("rule {self} must end at DISPATCH"));
        }
        let qc = c.iter().filter(|&&x| x == WorkCenterId::Qc).count();
        if qc != 1 || c.len() < 3 || c[c.len() - 2] != WorkCenterId::Qc {
            return Err(format!("rule {self} must contain QC exactly once, right before DISPATCH"));
        }
        let unique: BTreeSet<_> = c.iter().collect();
        if unique.len() != c.len() {
            return Err(format!("rule {self} visits a center twice"));
        }
        let value_added = self.predicate.iter().any(|(f, v)| {
            *f == SpecField::ProductType && v == ProductType::ValueAdded.as_str()
        });
        if value_added && !c.contains(&WorkCenterId::Val) {
            return Err(format!("rule {self} routes VALUE_ADDED products without VAL"));
        }
        Ok(())
    }
}

impl fmt::Display for RoutingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicate.is_empty() {
            f.write_str("*")?;
        } else {
            for (i, (field, value)) in self.predicate.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}={}", field.name(), value)?;
            }
        }
        f.write_str(" : ")?;
        for (i, c) in self.centers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(c.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingRuleSet {
    pub catalog: BTreeMap<String, BTreeSet<String>>,
    pub rules: Vec<RoutingRule>,
    pub version: u32,
}

impl RoutingRuleSet {
    pub fn new(
        catalog: BTreeMap<String, BTreeSet<String>>,
        rules: Vec<RoutingRule>,
        version: u32,
    ) -> Result<Self, WorkOrderError> {
        for rule in &rules {
            rule.check().map_err(WorkOrderError::InvalidRuleSet)?;
        }
        if !rules.iter().any(RoutingRule::is_default) {
            return Err(WorkOrderError::InvalidRuleSet("no default (*) rule".into()));
        }
        for (sat, sensors) in &catalog {
            if sat.is_empty() || sensors.is_empty() || sensors.iter().any(String::is_empty) {
                return Err(WorkOrderError::InvalidRuleSet(format!(
                    "catalog entry {sat:?} is empty"
                )));
            }
        }
        Ok(RoutingRuleSet { catalog, rules, version })
    }

    /// The shipped default table.
    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("shipped routing table parses")
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_sections(&conf::parse_sections(text)?)
    }

    /// Reads `version`, `[catalog]` and `[rules]`; other sections are ignored
    /// so the same file can carry simulator settings.
    pub fn from_sections(sections: &[Section]) -> Result<Self, ConfigError> {
        let mut version = 1;
        let mut catalog: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut rules = Vec::new();
        let mut last_line = 0;
        for section in sections {
            for line in &section.lines {
                last_line = line.number;
                match section.name.as_str() {
                    "" => {
                        let (k, v) = conf::key_value(line)?;
                        if k == "version" {
                            version = v
                                .parse()
                                .map_err(|_| ConfigError::new(line.number, "bad version"))?;
                        }
                    }
                    "catalog" => {
                        let (sat, sensors) = line
                            .text
                            .split_once(':')
                            .ok_or_else(|| ConfigError::new(line.number, "expected satellite: sensors"))?;
                        let entry = catalog.entry(sat.trim().to_string()).or_default();
                        for s in sensors.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                            entry.insert(s.to_string());
                        }
                    }
                    "rules" => rules.push(parse_rule(&line.text).map_err(|m| ConfigError::new(line.number, m))?),
                    _ => {}
                }
            }
        }
        RoutingRuleSet::new(catalog, rules, version).map_err(|e| ConfigError::new(last_line, e.to_string()))
    }

    /// Renders the rule set back to its config form.
    pub fn to_config(&self) -> String {
        let mut out = format!("version = {}\n\n[catalog]\n", self.version);
        for (sat, sensors) in &self.catalog {
            let list: Vec<&str> = sensors.iter().map(String::as_str).collect();
            out.push_str(&format!("{}: {}\n", sat, list.join(", ")));
        }
        out.push_str("\n[rules]\n");
        for rule in &self.rules {
            out.push_str(&format!("{rule}\n"));
        }
        out
    }

    pub fn check_catalog(&self, spec: &ProductSpec) -> Result<(), WorkOrderError> {
        let listed = !spec.satellite.is_empty()
            && !spec.sensor.is_empty()
            && self
                .catalog
                .get(&spec.satellite)
                .is_some_and(|sensors| sensors.contains(&spec.sensor));
        if listed {
            Ok(())
        } else {
            Err(WorkOrderError::UnknownSensor {
                satellite: spec.satellite.clone(),
                sensor: spec.sensor.clone(),
            })
        }
    }

    /// Builds the plan of the first rule matching `spec`.
    pub fn plan_route(&self, spec: &ProductSpec) -> Result<RoutingPlan, WorkOrderError> {
        self.check_catalog(spec)?;
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(spec))
            .ok_or(WorkOrderError::NoMatchingRule)?;
        if spec.product_type == ProductType::ValueAdded && !rule.centers.contains(&WorkCenterId::Val) {
            return Err(WorkOrderError::InvalidRuleSet(format!(
                "VALUE_ADDED product matched rule without VAL: {rule}"
            )));
        }
        Ok(RoutingPlan::new(&rule.centers))
    }
}

fn parse_rule(text: &str) -> Result<RoutingRule, String> {
    let (pred, centers) = text.rsplit_once(':').ok_or("expected predicate : centers")?;
    let pred = pred.trim();
    let mut predicate = Vec::new();
    if pred != "*" {
        for term in pred.split(',') {
            let (field, value) = term.split_once('=').ok_or_else(|| format!("bad predicate term {term:?}"))?;
            let value = value.trim();
            if value.is_empty() {
                return Err(format!("empty value in predicate term {term:?}"));
            }
            predicate.push((field.trim().parse()?, value.to_string()));
        }
    }
    let centers = centers
        .split(',')
        .map(|c| c.trim().parse::<WorkCenterId>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RoutingRule { predicate, centers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workorder::{CorrectionLevel, Media};
    use chrono::NaiveDate;
    use WorkCenterId::*;

    fn spec(pt: ProductType, media: Media) -> ProductSpec {
        ProductSpec {
            satellite: "IRS-P6".into(),
            sensor: "AWIFS".into(),
            product_type: pt,
            correction_level: CorrectionLevel::Geo,
            media,
            path: 100,
            row: 55,
            acquisition_date: NaiveDate::from_ymd_opt(2008, 1, 15).unwrap(),
        }
    }

    #[test]
    fn standard_digital_takes_default_route() {
        let plan = RoutingRuleSet::default_rules()
            .plan_route(&spec(ProductType::Standard, Media::Digital))
            .unwrap();
        assert_eq!(plan.centers(), vec![Urp, Dp, Qc, Dispatch]);
        assert_eq!(plan.current_index, 0);
        assert!(plan.steps.iter().all(|s| s.status == crate::workorder::StepStatus::Pending));
    }

    #[test]
    fn value_added_film_route() {
        let plan = RoutingRuleSet::default_rules()
            .plan_route(&spec(ProductType::ValueAdded, Media::Film))
            .unwrap();
        assert_eq!(plan.centers(), vec![Urp, Dp, Val, Film, Qc, Dispatch]);
    }

    #[test]
    fn every_combination_routes() {
        let rules = RoutingRuleSet::default_rules();
        for &pt in ProductType::ALL {
            for &m in Media::ALL {
                let plan = rules.plan_route(&spec(pt, m)).unwrap();
                let c = plan.centers();
                assert_eq!(c.contains(&Val), pt == ProductType::ValueAdded);
                assert_eq!(c.contains(&Film), m == Media::Film);
                assert_eq!(c.contains(&Photo), m == Media::Photo);
            }
        }
    }

    #[test]
    fn sensor_not_under_satellite() {
        let mut s = spec(ProductType::Standard, Media::Digital);
        s.sensor = "PAN-F".into();
        assert!(matches!(
            RoutingRuleSet::default_rules().plan_route(&s),
            Err(WorkOrderError::UnknownSensor { .. })
        ));
        s.satellite = String::new();
        assert!(RoutingRuleSet::default_rules().plan_route(&s).is_err());
    }

    #[test]
    fn config_round_trip() {
        let rules = RoutingRuleSet::default_rules();
        assert_eq!(RoutingRuleSet::parse(&rules.to_config()).unwrap(), rules);
    }

    #[test]
    fn rejects_bad_tables() {
        let missing_default = "[catalog]\nA: B\n[rules]\nmedia=FILM : URP,DP,FILM,QC,DISPATCH\n";
        assert!(RoutingRuleSet::parse(missing_default).is_err());
        let qc_not_last = "[catalog]\nA: B\n[rules]\n* : URP,QC,DP,DISPATCH\n";
        assert!(RoutingRuleSet::parse(qc_not_last).is_err());
        let no_urp = "[catalog]\nA: B\n[rules]\n* : DP,QC,DISPATCH\n";
        assert!(RoutingRuleSet::parse(no_urp).is_err());
        let va_without_val = "[catalog]\nA: B\n[rules]\nproduct_type=VALUE_ADDED : URP,DP,QC,DISPATCH\n* : URP,DP,QC,DISPATCH\n";
        assert!(RoutingRuleSet::parse(va_without_val).is_err());
        let bad_field = "[catalog]\nA: B\n[rules]\ncolour=red : URP,DP,QC,DISPATCH\n";
        assert_eq!(RoutingRuleSet::parse(bad_field).unwrap_err().line, 4);
    }

    #[test]
    fn value_added_falling_through_to_default_is_refused() {
        let text = "[catalog]\nIRS-P6: AWIFS\n[rules]\n* : URP,DP,QC,DISPATCH\n";
        let rules = RoutingRuleSet::parse(text).unwrap();
        assert!(matches!(
            rules.plan_route(&spec(ProductType::ValueAdded, Media::Digital)),
            Err(WorkOrderError::InvalidRuleSet(_))
        ));
    }

    #[test]
    fn first_match_wins() {
        let text = "[catalog]\nIRS-P6: AWIFS\n[rules]\nmedia=FILM : URP,DP,FILM,QC,DISPATCH\nsensor=AWIFS : URP,DP,PHOTO,QC,DISPATCH\n* : URP,DP,QC,DISPATCH\n";
        let rules = RoutingRuleSet::parse(text).unwrap();
        let plan = rules.plan_route(&spec(ProductType::Standard, Media::Film)).unwrap();
        assert_eq!(plan.centers(), vec![Urp, Dp, Film, Qc, Dispatch]);
    }
}
