use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use orbitflow_core::plant::PlantError;
use orbitflow_core::store::StoreError;
use orbitflow_core::tasks::TaskError;
use orbitflow_core::warehouse::WarehouseError;
use orbitflow_core::workorder::WorkOrderError;

/// Error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> ApiError {
        ApiError { status, body: ErrorBody { code: code.to_string(), message: message.into(), detail } }
    }

    pub fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "VALIDATION", message, Value::Null)
    }

    pub fn not_found(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", message, Value::Null)
    }

    pub fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message, Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<WorkOrderError> for ApiError {
    fn from(e: WorkOrderError) -> Self {
        let msg = e.to_string();
        match e {
            WorkOrderError::UnknownSensor { satellite, sensor } => ApiError::new(
                StatusCode::BAD_REQUEST,
                "VALIDATION",
                msg,
                json!({"satellite": satellite, "sensor": sensor}),
            ),
            WorkOrderError::BadRejectTarget(c) => {
                ApiError::new(StatusCode::BAD_REQUEST, "VALIDATION", msg, json!({"reject_target": c}))
            }
            WorkOrderError::NoMatchingRule | WorkOrderError::InvalidParameter(_) => ApiError::bad_request(msg),
            WorkOrderError::NotAtQc(c) => {
                ApiError::new(StatusCode::CONFLICT, "CONFLICT", msg, json!({"current_center": c}))
            }
            WorkOrderError::OrderClosed(s) => ApiError::new(StatusCode::CONFLICT, "CONFLICT", msg, json!({"status": s})),
            WorkOrderError::IllegalTransition(_) => ApiError::new(StatusCode::CONFLICT, "CONFLICT", msg, Value::Null),
            _ => ApiError::internal(msg),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(id) => ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", msg, json!({"id": id})),
            StoreError::SequenceConflict { order, .. } => {
                ApiError::new(StatusCode::CONFLICT, "CONFLICT", msg, json!({"id": order}))
            }
            StoreError::InvalidEvent(e) => e.into(),
            _ => ApiError::internal(msg),
        }
    }
}

impl From<TaskError> for ApiError {
    fn from(e: TaskError) -> Self {
        let msg = e.to_string();
        match e {
            TaskError::NotFound(t) => ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", msg, json!({"task_id": t})),
            TaskError::Claimed { task, operator } => ApiError::new(
                StatusCode::CONFLICT,
                "CLAIMED",
                msg,
                json!({"task_id": task, "operator_id": operator}),
            ),
            TaskError::NotClaimed { task, operator } => ApiError::new(
                StatusCode::CONFLICT,
                "NOT_CLAIMED",
                msg,
                json!({"task_id": task, "operator_id": operator}),
            ),
            TaskError::LeaseExpired(t) => {
                ApiError::new(StatusCode::GONE, "LEASE_EXPIRED", msg, json!({"task_id": t}))
            }
            TaskError::Done(t) => ApiError::new(StatusCode::CONFLICT, "TASK_DONE", msg, json!({"task_id": t})),
        }
    }
}

impl From<PlantError> for ApiError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::WorkOrder(e) => e.into(),
            PlantError::Store(e) => e.into(),
            PlantError::Task(e) => e.into(),
            PlantError::TaskOutOfDate { ref task, expected, actual } => ApiError::new(
                StatusCode::CONFLICT,
                "TASK_OUT_OF_DATE",
                e.to_string(),
                json!({"task_id": task, "expected": expected, "actual": actual}),
            ),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<WarehouseError> for ApiError {
    fn from(e: WarehouseError) -> Self {
        match e {
            WarehouseError::UnknownAttribute(_)
            | WarehouseError::AmbiguousAttribute(_)
            | WarehouseError::UnknownMeasure(_) => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}
