//! The running production chain: operational store, message broker, routing
//! rules and manual task queue behind one facade. Every state change goes
//! through the work-order state machine, is persisted, and then published.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use thiserror::Error;

use crate::bus::{Broker, BusError, SyncPolicy};
use crate::store::{OperationalStore, Recovery, StoreError, StoreOptions};
use crate::tasks::{TaskClaim, TaskError, TaskQueue};
use crate::time::Timestamp;
use crate::workorder::{
    self, advance, create_work_order, initial_events, DomainEvent, IdSequence, Outcome, ProductSpec, RoutingRuleSet,
    StepStatus, WorkCenterId, WorkOrder, WorkOrderError, WorkOrderId,
};
use crate::xml::{self, to_xml, XmlError};

pub const BUS_JOURNAL_FILE: &str = "bus.journal";
pub const ORDERS_DIR: &str = "orders";

/// Attempts per update when concurrent writers race on one order.
const CONFLICT_RETRIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlantError {
    #[error(transparent)]
    WorkOrder(#[from] WorkOrderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("task {task} is for {expected} but the order is at {actual:?}")]
    TaskOutOfDate { task: String, expected: WorkCenterId, actual: Option<WorkCenterId> },
}

pub struct Plant {
    store: OperationalStore,
    broker: Arc<Broker>,
    rules: RwLock<RoutingRuleSet>,
    ids: IdSequence,
    tasks: TaskQueue,
    manual: BTreeSet<WorkCenterId>,
}

impl std::fmt::Debug for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Plant").field("orders", &self.store.len()).field("manual", &self.manual).finish()
    }
}

/// Canonical XML text of an order.
pub fn order_payload(wo: &WorkOrder) -> Result<String, XmlError> {
    xml::serialize(&to_xml(wo))
}

fn id_sequence(id: &WorkOrderId) -> Option<u64> {
    id.as_str().strip_prefix("WO-")?.parse().ok()
}

impl Plant {
    /// Wraps existing components. Orders already waiting at a manual center
    /// get a task.
    pub fn new(
        store: OperationalStore,
        broker: Arc<Broker>,
        rules: RoutingRuleSet,
        manual: BTreeSet<WorkCenterId>,
        tasks: TaskQueue,
        now: Timestamp,
    ) -> Plant {
        let ids = IdSequence::default();
        for id in store.ids() {
            if let Some(seq) = id_sequence(&id) {
                ids.observe(seq);
            }
        }
        for c in &manual {
            for id in store.list_open(Some(*c)) {
                tasks.open(&id, *c, now);
            }
        }
        Plant { store, broker, rules: RwLock::new(rules), ids, tasks, manual }
    }

    pub fn in_memory(rules: RoutingRuleSet, manual: BTreeSet<WorkCenterId>) -> Plant {
        Plant::new(
            OperationalStore::in_memory(),
            Arc::new(Broker::new("plant")),
            rules,
            manual,
            TaskQueue::default(),
            Timestamp(0),
        )
    }

    /// Opens a durable plant in `dir`: orders under `orders/`, the bus
    /// journal in `bus.journal`.
    pub fn open(
        dir: &Path,
        rules: RoutingRuleSet,
        manual: BTreeSet<WorkCenterId>,
        now: Timestamp,
    ) -> Result<(Plant, Recovery), PlantError> {
        let (store, recovery) = OperationalStore::open(dir.join(ORDERS_DIR), StoreOptions::default())?;
        let (broker, _) = Broker::open("plant", dir.join(BUS_JOURNAL_FILE), SyncPolicy::Always)?;
        Ok((Plant::new(store, Arc::new(broker), rules, manual, TaskQueue::default(), now), recovery))
    }

    pub fn store(&self) -> &OperationalStore {
        &self.store
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    pub fn tasks(&self) -> &TaskQueue {
        &self.tasks
    }

    pub fn rules(&self) -> RoutingRuleSet {
        self.rules.read().clone()
    }

    pub fn set_rules(&self, rules: RoutingRuleSet) {
        *self.rules.write() = rules;
    }

    pub fn manual_centers(&self) -> &BTreeSet<WorkCenterId> {
        &self.manual
    }

    pub fn create_order(&self, spec: ProductSpec, now: Timestamp) -> Result<WorkOrder, PlantError> {
        let wo = create_work_order(spec, &self.rules.read(), now, &self.ids)?;
        self.store.insert(&wo, now)?;
        self.publish(&wo, &initial_events(&wo), now)?;
        Ok(wo)
    }

    /// Loads, transforms and saves an order, retrying when another writer
    /// got there first.
    fn update<F>(&self, id: &WorkOrderId, now: Timestamp, f: F) -> Result<(WorkOrder, Vec<DomainEvent>), PlantError>
    where
        F: Fn(&WorkOrder) -> Result<(WorkOrder, Vec<DomainEvent>), WorkOrderError>,
    {
        let mut attempt = 0;
        loop {
            let current = self.store.load(id)?;
            let (next, events) = f(&current)?;
            match self.store.save(&next, now) {
                Ok(_) => return Ok((next, events)),
                Err(StoreError::SequenceConflict { .. }) if attempt + 1 < CONFLICT_RETRIES => attempt += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn apply(&self, id: &WorkOrderId, outcome: Outcome, now: Timestamp) -> Result<WorkOrder, PlantError> {
        let (wo, events) = self.update(id, now, |wo| advance(wo, outcome, now))?;
        self.publish(&wo, &events, now)?;
        Ok(wo)
    }

    pub fn set_parameter(&self, id: &WorkOrderId, key: &str, value: &str, now: Timestamp) -> Result<WorkOrder, PlantError> {
        let (wo, _) = self.update(id, now, |wo| Ok((workorder::set_parameter(wo, key, value, now)?, Vec::new())))?;
        Ok(wo)
    }

    /// Publishes domain events. Assignments carry the order's canonical XML,
    /// everything else just the order id. Assignments to manual centers also
    /// open a task.
    fn publish(&self, wo: &WorkOrder, events: &[DomainEvent], now: Timestamp) -> Result<(), PlantError> {
        for e in events {
            let payload = match e {
                DomainEvent::Assigned { .. } => order_payload(wo)?,
                _ => wo.id.to_string(),
            };
            self.broker.publish(&e.topic(), payload, now)?;
            match e {
                DomainEvent::Assigned { center, .. } if self.manual.contains(center) => {
                    self.tasks.open(&wo.id, *center, now);
                }
                DomainEvent::Cancelled { order } => self.tasks.close_order(order),
                _ => {}
            }
        }
        Ok(())
    }

    fn task_order(&self, task_id: &str) -> Result<(WorkOrder, WorkCenterId), PlantError> {
        let task = self.tasks.get(task_id)?;
        let wo = self.store.load(&task.work_order_id)?;
        if !wo.is_open() || wo.current_center() != Some(task.center) {
            return Err(PlantError::TaskOutOfDate { task: task_id.to_string(), expected: task.center, actual: wo.current_center() });
        }
        Ok((wo, task.center))
    }

    /// Claims a manual task and starts the step if it has not started yet.
    pub fn claim_task(&self, task_id: &str, operator: &str, now: Timestamp) -> Result<TaskClaim, PlantError> {
        let (wo, _) = self.task_order(task_id)?;
        let claim = self.tasks.claim(task_id, operator, now)?;
        if wo.plan.current().is_some_and(|s| s.status == StepStatus::Pending) {
            self.apply(&wo.id, Outcome::Start, now)?;
        }
        Ok(claim)
    }

    /// Completes a claimed task with COMPLETE or REJECT.
    pub fn complete_task(&self, task_id: &str, operator: &str, outcome: Outcome, now: Timestamp) -> Result<WorkOrder, PlantError> {
        if matches!(outcome, Outcome::Start | Outcome::Cancel) {
            return Err(WorkOrderError::IllegalTransition(format!("{outcome:?} is not a task outcome")).into());
        }
        self.tasks.check_claim(task_id, operator, now)?;
        let (wo, _) = self.task_order(task_id)?;
        let wo = self.apply(&wo.id, outcome, now)?;
        self.tasks.finish(task_id)?;
        Ok(wo)
    }
}
