//! Manual work queue: one task per order waiting at a human-operated center,
//! claimed by an operator under a lease.

use indexmap::IndexMap;
use parking_lot::Mutex;
use serde::Serialize;
use thiserror::Error;

use crate::time::{Timestamp, MINUTE};
use crate::workorder::{WorkCenterId, WorkOrderId};

pub const DEFAULT_TASK_LEASE: i64 = 10 * MINUTE;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("task {0} not found")]
    NotFound(String),
    #[error("task {task} is claimed by {operator}")]
    Claimed { task: String, operator: String },
    #[error("task {task} is not claimed by {operator}")]
    NotClaimed { task: String, operator: String },
    #[error("claim on task {0} expired")]
    LeaseExpired(String),
    #[error("task {0} is already done")]
    Done(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskClaim {
    pub task_id: String,
    pub work_order_id: WorkOrderId,
    pub center: WorkCenterId,
    pub operator_id: String,
    pub claimed_at: Timestamp,
    pub lease_until: Timestamp,
}

impl TaskClaim {
    pub fn is_live(&self, now: Timestamp) -> bool {
        now < self.lease_until
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Task {
    pub task_id: String,
    pub work_order_id: WorkOrderId,
    pub center: WorkCenterId,
    pub created_at: Timestamp,
    pub claim: Option<TaskClaim>,
    pub done: bool,
}

#[derive(Debug)]
struct Inner {
    next: u64,
    tasks: IndexMap<String, Task>,
}

#[derive(Debug)]
pub struct TaskQueue {
    inner: Mutex<Inner>,
    lease: i64,
}

impl Default for TaskQueue {
    fn default() -> Self {
        TaskQueue::new(DEFAULT_TASK_LEASE)
    }
}

impl TaskQueue {
    pub fn new(lease: i64) -> TaskQueue {
        TaskQueue { inner: Mutex::new(Inner { next: 1, tasks: IndexMap::new() }), lease }
    }

    pub fn lease(&self) -> i64 {
        self.lease
    }

    /// Opens a task unless one is already open for the same order and
    /// center. Returns the task id either way.
    pub fn open(&self, order: &WorkOrderId, center: WorkCenterId, now: Timestamp) -> String {
        let mut inner = self.inner.lock();
        if let Some(t) = inner.tasks.values().find(|t| !t.done && t.work_order_id == *order && t.center == center) {
            return t.task_id.clone();
        }
        let id = format!("T-{:06}", inner.next);
        inner.next += 1;
        inner.tasks.insert(
            id.clone(),
            Task { task_id: id.clone(), work_order_id: order.clone(), center, created_at: now, claim: None, done: false },
        );
        id
    }

    pub fn get(&self, id: &str) -> Result<Task, TaskError> {
        self.inner.lock().tasks.get(id).cloned().ok_or_else(|| TaskError::NotFound(id.to_string()))
    }

    /// Open tasks without a live claim, oldest first.
    pub fn unclaimed(&self, center: Option<WorkCenterId>, now: Timestamp) -> Vec<Task> {
        self.inner
            .lock()
            .tasks
            .values()
            .filter(|t| !t.done && center.is_none_or(|c| t.center == c))
            .filter(|t| t.claim.as_ref().is_none_or(|c| !c.is_live(now)))
            .map(|t| Task { claim: None, ..t.clone() })
            .collect()
    }

    /// Every task that is not done, claimed or not.
    pub fn open_tasks(&self) -> Vec<Task> {
        self.inner.lock().tasks.values().filter(|t| !t.done).cloned().collect()
    }

    /// Claims a task. Re-claiming one's own live claim renews the lease.
    pub fn claim(&self, id: &str, operator: &str, now: Timestamp) -> Result<TaskClaim, TaskError> {
        let mut inner = self.inner.lock();
        let task = inner.tasks.get_mut(id).ok_or_else(|| TaskError::NotFound(id.to_string()))?;
        if task.done {
            return Err(TaskError::Done(id.to_string()));
        }
        if let Some(c) = &task.claim {
            if c.is_live(now) && c.operator_id != operator {
                return Err(TaskError::Claimed { task: id.to_string(), operator: c.operator_id.clone() });
            }
        }
        let claim = TaskClaim {
            task_id: id.to_string(),
            work_order_id: task.work_order_id.clone(),
            center: task.center,
            operator_id: operator.to_string(),
            claimed_at: now,
            lease_until: now + self.lease,
        };
        task.claim = Some(claim.clone());
        Ok(claim)
    }

    /// Checks that `operator` holds a live claim. An expired claim is
    /// released, returning the task to the pool.
    pub fn check_claim(&self, id: &str, operator: &str, now: Timestamp) -> Result<Task, TaskError> {
        let mut inner = self.inner.lock();
        let task = inner.tasks.get_mut(id).ok_or_else(|| TaskError::NotFound(id.to_string()))?;
        if task.done {
            return Err(TaskError::Done(id.to_string()));
        }
        match &task.claim {
            Some(c) if c.operator_id == operator && c.is_live(now) => Ok(task.clone()),
            Some(c) if c.operator_id == operator => {
                task.claim = None;
                Err(TaskError::LeaseExpired(id.to_string()))
            }
            _ => Err(TaskError::NotClaimed { task: id.to_string(), operator: operator.to_string() }),
        }
    }

    pub fn finish(&self, id: &str) -> Result<(), TaskError> {
        let mut inner = self.inner.lock();
        let task = inner.tasks.get_mut(id).ok_or_else(|| TaskError::NotFound(id.to_string()))?;
        task.done = true;
        Ok(())
    }

    /// Marks every open task of `order` done, e.g. after cancellation.
    pub fn close_order(&self, order: &WorkOrderId) {
        for t in self.inner.lock().tasks.values_mut() {
            if t.work_order_id == *order {
                t.done = true;
            }
        }
    }
}
