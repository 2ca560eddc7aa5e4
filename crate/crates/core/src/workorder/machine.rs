use std::sync::atomic::{AtomicU64, Ordering};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

use super::{
    EventKind, OrderStatus, ProductSpec, RoutingPlan, RoutingRuleSet, StepStatus, TransitionEvent,
    WorkCenterId, WorkOrder, WorkOrderError, WorkOrderId,
};

/// What happened at the current step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Start,
    Complete,
    Reject { target: WorkCenterId },
    Cancel,
}

/// Transition descriptions for publication on the bus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainEvent {
    Created { order: WorkOrderId },
    Assigned { order: WorkOrderId, center: WorkCenterId },
    StepStarted { order: WorkOrderId, center: WorkCenterId },
    StepCompleted { order: WorkOrderId, center: WorkCenterId },
    Rejected { order: WorkOrderId, target: WorkCenterId },
    WorkOrderCompleted { order: WorkOrderId },
    Cancelled { order: WorkOrderId },
}

impl DomainEvent {
    pub fn order(&self) -> &WorkOrderId {
        match self {
            DomainEvent::Created { order }
            | DomainEvent::Assigned { order, .. }
            | DomainEvent::StepStarted { order, .. }
            | DomainEvent::StepCompleted { order, .. }
            | DomainEvent::Rejected { order, .. }
            | DomainEvent::WorkOrderCompleted { order }
            | DomainEvent::Cancelled { order } => order,
        }
    }

    /// Bus topic this event is published under.
    pub fn topic(&self) -> String {
        match self {
            DomainEvent::Created { .. } => "workorder.created".into(),
            DomainEvent::Assigned { center, .. } => format!("workorder.assigned.{}", center.topic_segment()),
            DomainEvent::StepStarted { center, .. } => format!("workorder.started.{}", center.topic_segment()),
            DomainEvent::StepCompleted { center, .. } => {
                format!("workorder.completed.{}", center.topic_segment())
            }
            DomainEvent::Rejected { .. } => "workorder.rejected".into(),
            DomainEvent::WorkOrderCompleted { .. } => "workorder.finished".into(),
            DomainEvent::Cancelled { .. } => "workorder.cancelled".into(),
        }
    }
}

/// Hands out work-order sequence numbers.
#[derive(Debug)]
pub struct IdSequence {
    next: AtomicU64,
}

impl IdSequence {
    pub fn new(first: u64) -> Self {
        IdSequence { next: AtomicU64::new(first) }
    }

    /// The sequence number the next call to [`IdSequence::take`] returns.
    pub fn peek(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }

    pub fn take(&self) -> WorkOrderId {
        WorkOrderId::from_sequence(self.next.fetch_add(1, Ordering::SeqCst))
    }

    /// Moves the counter past `seq` if it is behind.
    pub fn observe(&self, seq: u64) {
        self.next.fetch_max(seq + 1, Ordering::SeqCst);
    }
}

impl Default for IdSequence {
    fn default() -> Self {
        IdSequence::new(1)
    }
}

/// Routes `spec` and opens a fresh order. No id is consumed on failure.
pub fn create_work_order(
    spec: ProductSpec,
    rules: &RoutingRuleSet,
    clock: Timestamp,
    ids: &IdSequence,
) -> Result<WorkOrder, WorkOrderError> {
    let plan = rules.plan_route(&spec)?;
    let route = plan.centers().iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",");
    Ok(WorkOrder {
        id: ids.take(),
        spec,
        plan,
        parameters: IndexMap::new(),
        history: vec![TransitionEvent {
            seq: 1,
            kind: EventKind::Created,
            center: WorkCenterId::Urp,
            at: clock,
            note: route,
        }],
        status: OrderStatus::Open,
        created_at: clock,
    })
}

/// Events announcing a freshly created order.
pub fn initial_events(wo: &WorkOrder) -> Vec<DomainEvent> {
    let mut events = vec![DomainEvent::Created { order: wo.id.clone() }];
    if let Some(center) = wo.current_center() {
        events.push(DomainEvent::Assigned { order: wo.id.clone(), center });
    }
    events
}

fn check_open(wo: &WorkOrder, clock: Timestamp) -> Result<(), WorkOrderError> {
    if wo.status != OrderStatus::Open {
        return Err(WorkOrderError::OrderClosed(wo.status));
    }
    let last = wo.last_update_at();
    if clock < last {
        return Err(WorkOrderError::ClockRegression { at: clock, earlier: last });
    }
    Ok(())
}

fn push_event(wo: &mut WorkOrder, kind: EventKind, center: WorkCenterId, at: Timestamp, note: String) {
    let seq = wo.last_seq() + 1;
    wo.history.push(TransitionEvent { seq, kind, center, at, note });
}

/// Applies `outcome` at the current step.
pub fn advance(
    wo: &WorkOrder,
    outcome: Outcome,
    clock: Timestamp,
) -> Result<(WorkOrder, Vec<DomainEvent>), WorkOrderError> {
    check_open(wo, clock)?;
    let mut next = wo.clone();
    let id = wo.id.clone();
    let idx = next.plan.current_index;
    let step = next
        .plan
        .steps
        .get(idx)
        .ok_or_else(|| WorkOrderError::IllegalTransition(format!("no step at index {idx}")))?;
    let center = step.center;
    let status = step.status;
    let mut events = Vec::new();

    match outcome {
        Outcome::Start => {
            if status != StepStatus::Pending {
                return Err(WorkOrderError::IllegalTransition(format!(
                    "START at {center} which is {status}"
                )));
            }
            let step = &mut next.plan.steps[idx];
            step.status = StepStatus::InProgress;
            step.entered_at = Some(clock);
            step.exited_at = None;
            push_event(&mut next, EventKind::Started, center, clock, String::new());
            events.push(DomainEvent::StepStarted { order: id, center });
        }
        Outcome::Complete => {
            if status != StepStatus::InProgress {
                return Err(WorkOrderError::IllegalTransition(format!(
                    "COMPLETE at {center} which is {status}"
                )));
            }
            let step = &mut next.plan.steps[idx];
            step.status = StepStatus::Completed;
            step.exited_at = Some(clock);
            push_event(&mut next, EventKind::CompletedStep, center, clock, String::new());
            events.push(DomainEvent::StepCompleted { order: id.clone(), center });
            if idx + 1 == next.plan.steps.len() {
                next.status = OrderStatus::Completed;
                events.push(DomainEvent::WorkOrderCompleted { order: id });
            } else {
                next.plan.current_index = idx + 1;
                let center = next.plan.steps[idx + 1].center;
                events.push(DomainEvent::Assigned { order: id, center });
            }
        }
        Outcome::Reject { target } => {
            if center != WorkCenterId::Qc {
                return Err(WorkOrderError::NotAtQc(center));
            }
            if status != StepStatus::InProgress {
                return Err(WorkOrderError::IllegalTransition(format!("REJECT at QC which is {status}")));
            }
            let to = match next.plan.position_of(target) {
                Some(pos) if pos < idx => pos,
                _ => return Err(WorkOrderError::BadRejectTarget(target)),
            };
            reset_for_rework(&mut next.plan, to, idx);
            push_event(&mut next, EventKind::Rejected, target, clock, format!("rework from {center}"));
            events.push(DomainEvent::Rejected { order: id.clone(), target });
            events.push(DomainEvent::Assigned { order: id, center: target });
        }
        Outcome::Cancel => {
            next.status = OrderStatus::Cancelled;
            push_event(&mut next, EventKind::Cancelled, center, clock, String::new());
            events.push(DomainEvent::Cancelled { order: id });
        }
    }
    Ok((next, events))
}

/// Steps `from..=through` pass through REWORK and settle as PENDING.
pub(super) fn reset_for_rework(plan: &mut RoutingPlan, from: usize, through: usize) {
    for step in &mut plan.steps[from..=through] {
        step.status = StepStatus::Rework;
        step.entered_at = None;
        step.exited_at = None;
    }
    for step in &mut plan.steps[from..=through] {
        step.status = StepStatus::Pending;
    }
    plan.current_index = from;
}

pub(super) fn check_parameter(key: &str, value: &str) -> Result<(), WorkOrderError> {
    if key.is_empty() || key.contains('=') || key.chars().any(|c| c.is_ascii_control() || !c.is_ascii()) {
        return Err(WorkOrderError::InvalidParameter(format!("key {key:?}")));
    }
    if value.chars().any(|c| !c.is_ascii() || (c.is_ascii_control() && !matches!(c, '\t' | '\n' | '\r'))) {
        return Err(WorkOrderError::InvalidParameter(format!("value for {key:?} is not printable ASCII")));
    }
    Ok(())
}

/// Inserts or overwrites a dynamic parameter. Overwrites keep the key's
/// original position.
pub fn set_parameter(
    wo: &WorkOrder,
    key: &str,
    value: &str,
    clock: Timestamp,
) -> Result<WorkOrder, WorkOrderError> {
    check_open(wo, clock)?;
    check_parameter(key, value)?;
    let mut next = wo.clone();
    next.parameters.insert(key.to_string(), value.to_string());
    let center = next.current_center().unwrap_or(WorkCenterId::Urp);
    push_event(&mut next, EventKind::ParamSet, center, clock, format!("{key}={value}"));
    Ok(next)
}
