use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use parking_lot::MutexGuard;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use orbitflow_core::plant::order_payload;
use orbitflow_core::warehouse::tsv::Table;
use orbitflow_core::warehouse::{etl_run, Measure, TatBy, Warehouse, WarehouseQuery};
use orbitflow_core::workorder::{OrderStatus, Outcome, ProductSpec, WorkCenterId, WorkOrderId};

use crate::error::ApiError;
use crate::{AppState, DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE};

type S = State<Arc<AppState>>;
type Params = Query<HashMap<String, String>>;

pub(crate) fn routes(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/services", get(list_services))
        .route("/services/{name}", get(lookup_service))
        .route("/work-orders", get(list_orders).post(create_order))
        .route("/work-orders/{id}", get(get_order))
        .route("/tasks", get(list_tasks))
        .route("/tasks/{id}/claim", post(claim_task))
        .route("/tasks/{id}/complete", post(complete_task))
        .route("/reports/tat", get(report_tat))
        .route("/reports/pending", get(report_pending))
        .route("/reports/completed", get(report_completed))
        .route("/warehouse/query", post(warehouse_query))
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "VALIDATION", "invalid request body", json!({"error": e.to_string()}))
    })
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    match q.get(name).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "VALIDATION",
                format!("bad value for {name}"),
                json!({"parameter": name, "value": v}),
            )
        }),
    }
}

fn required<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<T, ApiError> {
    param(q, name)?.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "VALIDATION",
            format!("missing parameter {name}"),
            json!({"parameter": name}),
        )
    })
}

fn table_json(t: &Table) -> Value {
    json!({"columns": t.header, "rows": t.rows})
}

async fn list_services(State(s): S) -> Json<Value> {
    Json(json!(s.registry.snapshot()))
}

async fn lookup_service(State(s): S, Path(name): Path<String>) -> Json<Value> {
    Json(json!(s.registry.lookup(&name)))
}

/// Orders sorted by id. `center` selects open orders currently at that
/// center.
async fn list_orders(State(s): S, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let status: Option<OrderStatus> = param(&q, "status")?;
    let center: Option<WorkCenterId> = param(&q, "center")?;
    let page: usize = param(&q, "page")?.unwrap_or(1);
    let page_size: usize = param(&q, "page_size")?.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 || page_size == 0 {
        return Err(ApiError::bad_request("page and page_size start at 1"));
    }
    let page_size = page_size.min(MAX_PAGE_SIZE);
    let mut orders: Vec<_> = s
        .plant
        .store()
        .all_orders()
        .into_iter()
        .filter(|o| status.is_none_or(|st| o.status == st))
        .filter(|o| center.is_none_or(|c| o.is_open() && o.current_center() == Some(c)))
        .collect();
    orders.sort_by(|a, b| a.id.cmp(&b.id));
    let total = orders.len();
    let items: Vec<_> = orders.into_iter().skip((page - 1).saturating_mul(page_size)).take(page_size).collect();
    Ok(Json(json!({"items": items, "page": page, "page_size": page_size, "total": total})))
}

fn wants_xml(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/xml") || v.contains("text/xml"))
}

async fn get_order(State(s): S, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    let wo = s.plant.store().load(&WorkOrderId(id))?;
    if wants_xml(&headers) {
        let text = order_payload(&wo).map_err(|e| ApiError::internal(e.to_string()))?;
        return Ok(([(header::CONTENT_TYPE, "application/xml")], text).into_response());
    }
    Ok(Json(wo).into_response())
}

async fn create_order(State(s): S, body: Bytes) -> Result<Response, ApiError> {
    let spec: ProductSpec = parse_body(&body)?;
    let wo = s.plant.create_order(spec, s.now())?;
    Ok((StatusCode::CREATED, Json(wo)).into_response())
}

async fn list_tasks(State(s): S, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let center: Option<WorkCenterId> = param(&q, "center")?;
    Ok(Json(json!(s.plant.tasks().unclaimed(center, s.now()))))
}

#[derive(Deserialize)]
struct ClaimBody {
    operator_id: String,
}

fn check_operator(op: &str) -> Result<(), ApiError> {
    if op.trim().is_empty() {
        return Err(ApiError::bad_request("operator_id must not be empty"));
    }
    Ok(())
}

async fn claim_task(State(s): S, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let b: ClaimBody = parse_body(&body)?;
    check_operator(&b.operator_id)?;
    let claim = s.plant.claim_task(&id, &b.operator_id, s.now())?;
    Ok(Json(json!(claim)))
}

#[derive(Deserialize)]
struct CompleteBody {
    operator_id: String,
    outcome: String,
    #[serde(default)]
    reject_target: Option<String>,
    /// Stored on the order as `qc_note`.
    #[serde(default)]
    note: Option<String>,
}

pub const QC_NOTE_KEY: &str = "qc_note";

async fn complete_task(State(s): S, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let b: CompleteBody = parse_body(&body)?;
    check_operator(&b.operator_id)?;
    let target = b.reject_target.as_deref().filter(|t| !t.is_empty());
    let outcome = match (b.outcome.as_str(), target) {
        ("COMPLETE", None) => Outcome::Complete,
        ("COMPLETE", Some(_)) => return Err(ApiError::bad_request("reject_target only applies to REJECT")),
        ("REJECT", Some(t)) => Outcome::Reject {
            target: t.parse().map_err(|_| {
                ApiError::new(StatusCode::BAD_REQUEST, "VALIDATION", "unknown reject_target", json!({"reject_target": t}))
            })?,
        },
        ("REJECT", None) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "VALIDATION",
                "REJECT requires reject_target",
                json!({"field": "reject_target"}),
            ))
        }
        (other, _) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "VALIDATION",
                "outcome must be COMPLETE or REJECT",
                json!({"outcome": other}),
            ))
        }
    };
    let now = s.now();
    let task = s.plant.tasks().check_claim(&id, &b.operator_id, now)?;
    if let Some(note) = b.note.as_deref().filter(|n| !n.is_empty()) {
        s.plant.set_parameter(&task.work_order_id, QC_NOTE_KEY, note, now)?;
    }
    let wo = s.plant.complete_task(&id, &b.operator_id, outcome, now)?;
    Ok(Json(json!(wo)))
}

/// Loads newly final orders and returns the locked warehouse.
fn refreshed(s: &AppState) -> Result<MutexGuard<'_, Warehouse>, ApiError> {
    let mut wh = s.warehouse.lock();
    let report = etl_run(s.plant.store(), s.wrinkle, s.now(), &mut wh)?;
    if report.facts_added > 0 {
        if let Some(dir) = &s.warehouse_dir {
            wh.save(dir)?;
        }
    }
    Ok(wh)
}

async fn report_tat(State(s): S, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let by = match q.get("by").map(String::as_str) {
        Some("center") => TatBy::Center,
        Some("product_type") => TatBy::ProductType,
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "VALIDATION",
                "by must be center or product_type",
                json!({"by": other}),
            ))
        }
    };
    let rows = refreshed(&s)?.report_tat(by);
    let key = if by == TatBy::Center { "center" } else { "product_type" };
    let mut t = Table::new(&[key, "samples", "total_seconds", "mean_seconds"]);
    for r in rows {
        t.rows.push(vec![r.key.clone(), r.samples.to_string(), r.total_seconds.to_string(), r.mean().to_string()]);
    }
    Ok(Json(table_json(&t)))
}

/// Open orders per current center.
async fn report_pending(State(s): S) -> Json<Value> {
    let mut t = Table::new(&["center", "pending"]);
    for c in WorkCenterId::ALL {
        t.rows.push(vec![c.to_string(), s.plant.store().list_open(Some(*c)).len().to_string()]);
    }
    Json(table_json(&t))
}

async fn report_completed(State(s): S, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let from: NaiveDate = required(&q, "from")?;
    let to: NaiveDate = required(&q, "to")?;
    if to < from {
        return Err(ApiError::bad_request("to is before from"));
    }
    let mut ids = s.plant.store().completed_between(from, to);
    ids.sort();
    let mut t = Table::new(&["work_order_id", "product_type", "media", "created_at", "completed_at", "tat_seconds"]);
    for id in ids {
        let wo = s.plant.store().load(&id)?;
        let done = wo.completed_at().expect("completed order");
        t.rows.push(vec![
            wo.id.to_string(),
            wo.spec.product_type.to_string(),
            wo.spec.media.to_string(),
            wo.created_at.to_string(),
            done.to_string(),
            (done - wo.created_at).to_string(),
        ]);
    }
    Ok(Json(table_json(&t)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Filters {
    Pairs(Vec<(String, String)>),
    Map(ordered::Ordered),
}

mod ordered {
    use serde::de::{MapAccess, Visitor};
    use serde::{Deserialize, Deserializer};

    /// A JSON object kept in document order.
    pub struct Ordered(pub Vec<(String, String)>);

    impl<'de> Deserialize<'de> for Ordered {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl<'de> Visitor<'de> for V {
                type Value = Ordered;
                fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                    f.write_str("an object of attribute values")
                }
                fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Ordered, A::Error> {
                    let mut out = Vec::new();
                    while let Some(kv) = m.next_entry()? {
                        out.push(kv);
                    }
                    Ok(Ordered(out))
                }
            }
            d.deserialize_map(V)
        }
    }
}

#[derive(Deserialize)]
struct QueryBody {
    group_by: Vec<String>,
    measure: Measure,
    #[serde(default)]
    filters: Option<Filters>,
}

/// `filters` is either `[["attr", "value"], ...]` or `{"attr": "value"}`.
async fn warehouse_query(State(s): S, body: Bytes) -> Result<Json<Value>, ApiError> {
    let b: QueryBody = parse_body(&body)?;
    let filters = match b.filters {
        None => Vec::new(),
        Some(Filters::Pairs(p)) => p,
        Some(Filters::Map(m)) => m.0,
    };
    let q = WarehouseQuery { group_by: b.group_by, measure: b.measure, filters };
    let result = refreshed(&s)?.query(&q)?;
    let t = result.to_table();
    Ok(Json(json!({"columns": t.header, "measure": result.measure, "rows": t.rows})))
}
