use indexmap::IndexMap;

use super::{
    EventKind, OrderStatus, ProductSpec, RoutingPlan, StepStatus, TransitionEvent, WorkCenterId, WorkOrder,
    WorkOrderError, WorkOrderId,
};

fn corrupt(msg: impl Into<String>) -> WorkOrderError {
    WorkOrderError::CorruptHistory(msg.into())
}

/// Rebuilds an order by folding its history from the CREATED event, whose
/// note carries the route.
pub fn replay(
    id: &WorkOrderId,
    spec: &ProductSpec,
    history: &[TransitionEvent],
) -> Result<WorkOrder, WorkOrderError> {
    let first = history.first().ok_or_else(|| corrupt("empty history"))?;
    if first.kind != EventKind::Created || first.seq != 1 {
        return Err(corrupt("history must start with CREATED seq 1"));
    }
    let route = first
        .note
        .split(',')
        .map(|c| c.trim().parse::<WorkCenterId>().map_err(|e| corrupt(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut plan = RoutingPlan::new(&route);
    let mut parameters = IndexMap::new();
    let mut status = OrderStatus::Open;

    for (i, ev) in history.iter().enumerate().skip(1) {
        if ev.seq != i as u64 + 1 {
            return Err(corrupt(format!("sequence gap at event {}", ev.seq)));
        }
        if status != OrderStatus::Open {
            return Err(corrupt(format!("event {} after the order closed", ev.seq)));
        }
        let cur = plan.current_index;
        match ev.kind {
            EventKind::Created => return Err(corrupt("second CREATED event")),
            EventKind::Started => {
                let step = &mut plan.steps[cur];
                if step.center != ev.center || step.status != StepStatus::Pending {
                    return Err(corrupt(format!("STARTED {} does not fit step {}", ev.center, cur)));
                }
                step.status = StepStatus::InProgress;
                step.entered_at = Some(ev.at);
            }
            EventKind::CompletedStep => {
                let step = &mut plan.steps[cur];
                if step.center != ev.center || step.status != StepStatus::InProgress {
                    return Err(corrupt(format!("COMPLETED_STEP {} does not fit step {}", ev.center, cur)));
                }
                step.status = StepStatus::Completed;
                step.exited_at = Some(ev.at);
                if cur + 1 == plan.steps.len() {
                    status = OrderStatus::Completed;
                } else {
                    plan.current_index += 1;
                }
            }
            EventKind::Rejected => {
                let target = plan
                    .steps
                    .iter()
                    .position(|s| s.center == ev.center)
                    .filter(|&p| p < cur)
                    .ok_or_else(|| corrupt(format!("REJECTED to {} is not behind step {}", ev.center, cur)))?;
                for step in &mut plan.steps[target..=cur] {
                    step.status = StepStatus::Pending;
                    step.entered_at = None;
                    step.exited_at = None;
                }
                plan.current_index = target;
            }
            EventKind::ParamSet => {
                let (k, v) = ev
                    .note
                    .split_once('=')
                    .ok_or_else(|| corrupt("PARAM_SET note is not key=value"))?;
                parameters.insert(k.to_string(), v.to_string());
            }
            EventKind::Cancelled => status = OrderStatus::Cancelled,
        }
    }

    Ok(WorkOrder {
        id: id.clone(),
        spec: spec.clone(),
        plan,
        parameters,
        history: history.to_vec(),
        status,
        created_at: first.at,
    })
}
