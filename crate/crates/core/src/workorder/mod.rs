//! Work orders, work centers, routing rules and the state machine that moves
//! a product through the production chain.
//!
//! Every operation here is a pure transformation: it takes the current order
//! and returns the next one together with the domain events to publish.
//! Serializing concurrent updates to one order is the operational store's job.

mod machine;
mod replay;
mod rules;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

pub use machine::{
    advance, create_work_order, initial_events, set_parameter, DomainEvent, IdSequence, Outcome,
};
pub use replay::replay;
pub use rules::{RoutingRule, RoutingRuleSet, SpecField, DEFAULT_RULES};

/// Declares a closed string enum with SCREAMING_SNAKE_CASE wire names.
macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownVariant;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UnknownVariant { kind: stringify!($name), value: s.to_string() }),
                }
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} value {value:?}")]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
}

wire_enum!(ProductType {
    Standard => "STANDARD",
    Precision => "PRECISION",
    ValueAdded => "VALUE_ADDED",
});

wire_enum!(CorrectionLevel {
    Raw => "RAW",
    Radiometric => "RADIOMETRIC",
    Geo => "GEO",
    Ortho => "ORTHO",
});

wire_enum!(Media {
    Digital => "DIGITAL",
    Film => "FILM",
    Photo => "PHOTO",
});

wire_enum!(
    /// Production stages. URP is always first and DISPATCH always last.
    WorkCenterId {
        Urp => "URP",
        Dp => "DP",
        Val => "VAL",
        Film => "FILM",
        Photo => "PHOTO",
        Qc => "QC",
        Dispatch => "DISPATCH",
    }
);

impl WorkCenterId {
    /// Lower-case code used as a topic segment.
    pub fn topic_segment(self) -> String {
        self.as_str().to_ascii_lowercase()
    }
}

wire_enum!(StepStatus {
    Pending => "PENDING",
    InProgress => "IN_PROGRESS",
    Completed => "COMPLETED",
    Rework => "REWORK",
});

wire_enum!(OrderStatus {
    Open => "OPEN",
    Completed => "COMPLETED",
    Cancelled => "CANCELLED",
});

wire_enum!(EventKind {
    Created => "CREATED",
    Started => "STARTED",
    CompletedStep => "COMPLETED_STEP",
    Rejected => "REJECTED",
    ParamSet => "PARAM_SET",
    Cancelled => "CANCELLED",
});

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductSpec {
    pub satellite: String,
    pub sensor: String,
    pub product_type: ProductType,
    pub correction_level: CorrectionLevel,
    pub media: Media,
    pub path: u32,
    pub row: u32,
    pub acquisition_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingStep {
    pub index: usize,
    pub center: WorkCenterId,
    pub status: StepStatus,
    pub entered_at: Option<Timestamp>,
    pub exited_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub steps: Vec<RoutingStep>,
    pub current_index: usize,
}

impl RoutingPlan {
    pub fn new(centers: &[WorkCenterId]) -> Self {
        RoutingPlan {
            steps: centers
                .iter()
                .enumerate()
                .map(|(index, &center)| RoutingStep {
                    index,
                    center,
                    status: StepStatus::Pending,
                    entered_at: None,
                    exited_at: None,
                })
                .collect(),
            current_index: 0,
        }
    }

    pub fn centers(&self) -> Vec<WorkCenterId> {
        self.steps.iter().map(|s| s.center).collect()
    }

    pub fn current(&self) -> Option<&RoutingStep> {
        self.steps.get(self.current_index)
    }

    pub fn position_of(&self, center: WorkCenterId) -> Option<usize> {
        self.steps.iter().position(|s| s.center == center)
    }

    /// Checks the status layout around `current_index`. A closed plan has
    /// every step COMPLETED with the cursor on the last step.
    pub fn check_layout(&self, closed: bool) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("plan has no steps".into());
        }
        if self.current_index >= self.steps.len() {
            return Err(format!(
                "current index {} out of range for {} steps",
                self.current_index,
                self.steps.len()
            ));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.index != i {
                return Err(format!("step {} carries index {}", i, step.index));
            }
            let ok = if closed || i < self.current_index {
                step.status == StepStatus::Completed
            } else if i == self.current_index {
                matches!(step.status, StepStatus::Pending | StepStatus::InProgress)
            } else {
                step.status == StepStatus::Pending
            };
            if !ok {
                return Err(format!("step {} ({}) has status {}", i, step.center, step.status));
            }
            if let (Some(a), Some(b)) = (step.entered_at, step.exited_at) {
                if a > b {
                    return Err(format!("step {} exited before it was entered", i));
                }
            }
        }
        if closed && self.current_index != self.steps.len() - 1 {
            return Err("closed plan must rest on its last step".into());
        }
        Ok(())
    }
}

/// `WO-` followed by a zero-padded sequence number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkOrderId(pub String);

impl WorkOrderId {
    pub fn from_sequence(seq: u64) -> Self {
        WorkOrderId(format!("WO-{seq:06}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for WorkOrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for WorkOrderId {
    fn from(s: &str) -> Self {
        WorkOrderId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub center: WorkCenterId,
    pub at: Timestamp,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkOrder {
    pub id: WorkOrderId,
    pub spec: ProductSpec,
    pub plan: RoutingPlan,
    pub parameters: IndexMap<String, String>,
    pub history: Vec<TransitionEvent>,
    pub status: OrderStatus,
    pub created_at: Timestamp,
}

impl WorkOrder {
    pub fn last_seq(&self) -> u64 {
        self.history.last().map(|e| e.seq).unwrap_or(0)
    }

    pub fn current_center(&self) -> Option<WorkCenterId> {
        self.plan.current().map(|s| s.center)
    }

    pub fn is_open(&self) -> bool {
        self.status == OrderStatus::Open
    }

    /// Timestamp of the last history event.
    pub fn last_update_at(&self) -> Timestamp {
        self.history.last().map(|e| e.at).unwrap_or(self.created_at)
    }

    /// When the order closed as COMPLETED.
    pub fn completed_at(&self) -> Option<Timestamp> {
        if self.status != OrderStatus::Completed {
            return None;
        }
        self.plan.steps.last().and_then(|s| s.exited_at)
    }

    /// Number of QC rejections in the history.
    pub fn rework_cycles(&self) -> usize {
        self.history.iter().filter(|e| e.kind == EventKind::Rejected).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkOrderError {
    #[error("sensor {sensor:?} is not listed under satellite {satellite:?}")]
    UnknownSensor { satellite: String, sensor: String },
    #[error("no routing rule matched; the rule set has no default rule")]
    NoMatchingRule,
    #[error("invalid routing rule set: {0}")]
    InvalidRuleSet(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("reject is only allowed at QC, order is at {0}")]
    NotAtQc(WorkCenterId),
    #[error("reject target {0} is not an earlier step of the plan")]
    BadRejectTarget(WorkCenterId),
    #[error("work order is {0}")]
    OrderClosed(OrderStatus),
    #[error("clock went backwards: {at} is before {earlier}")]
    ClockRegression { at: Timestamp, earlier: Timestamp },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("history cannot be replayed: {0}")]
    CorruptHistory(String),
}
