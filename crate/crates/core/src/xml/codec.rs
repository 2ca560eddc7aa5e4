//! Lossless mapping between [`WorkOrder`] and the work-order XML format.

use std::str::FromStr;
use std::sync::OnceLock;

use chrono::NaiveDate;
use indexmap::IndexMap;

use crate::time::Timestamp;
use crate::workorder::{
    OrderStatus, ProductSpec, RoutingPlan, RoutingStep, TransitionEvent, WorkOrder, WorkOrderId,
};

use super::node::{XmlDocument, XmlNode};
use super::schema::{validate, SchemaDecl};
use super::XmlError;

pub const WORK_ORDER_SCHEMA: &str = include_str!("../../schema/work-order.schema");

pub fn work_order_schema() -> &'static SchemaDecl {
    static SCHEMA: OnceLock<SchemaDecl> = OnceLock::new();
    SCHEMA.get_or_init(|| SchemaDecl::parse(WORK_ORDER_SCHEMA).expect("shipped work-order schema parses"))
}

pub fn to_xml(wo: &WorkOrder) -> XmlDocument {
    let s = &wo.spec;
    let product = XmlNode::new("product")
        .attr("satellite", &s.satellite)
        .attr("sensor", &s.sensor)
        .attr("product-type", s.product_type.as_str())
        .attr("correction-level", s.correction_level.as_str())
        .attr("media", s.media.as_str())
        .attr("path", s.path.to_string())
        .attr("row", s.row.to_string())
        .attr("acquisition-date", s.acquisition_date.format("%Y-%m-%d").to_string());

    let mut routing = XmlNode::new("routing").attr("current", wo.plan.current_index.to_string());
    for step in &wo.plan.steps {
        let mut node = XmlNode::new("step")
            .attr("index", step.index.to_string())
            .attr("center", step.center.as_str())
            .attr("status", step.status.as_str());
        if let Some(t) = step.entered_at {
            node = node.attr("entered", t.to_string());
        }
        if let Some(t) = step.exited_at {
            node = node.attr("exited", t.to_string());
        }
        routing.children.push(node);
    }

    let mut parameters = XmlNode::new("parameters");
    for (k, v) in &wo.parameters {
        parameters.children.push(XmlNode::new("param").attr("key", k).attr("value", v));
    }

    let mut history = XmlNode::new("history");
    history.children.extend(wo.history.iter().map(event_node));

    XmlDocument::new(
        XmlNode::new("work-order")
            .attr("id", wo.id.as_str())
            .attr("created", wo.created_at.to_string())
            .attr("status", wo.status.as_str())
            .child(product)
            .child(routing)
            .child(parameters)
            .child(history),
    )
}

/// `<event seq type center at note/>` as used inside `<history>`.
pub fn event_node(e: &TransitionEvent) -> XmlNode {
    XmlNode::new("event")
        .attr("seq", e.seq.to_string())
        .attr("type", e.kind.as_str())
        .attr("center", e.center.as_str())
        .attr("at", e.at.to_string())
        .attr("note", &e.note)
}

/// Inverse of [`event_node`]; a missing note reads as empty.
pub fn event_from_node(e: &XmlNode) -> Result<TransitionEvent, XmlError> {
    if e.name != "event" {
        return Err(semantic(format!("expected <event>, found <{}>", e.name)));
    }
    Ok(TransitionEvent {
        seq: num(e, "seq")?,
        kind: enumerated(e, "type")?,
        center: enumerated(e, "center")?,
        at: Timestamp(num(e, "at")?),
        note: e.get_attr("note").unwrap_or("").to_string(),
    })
}

fn semantic(msg: impl Into<String>) -> XmlError {
    XmlError::SemanticError(msg.into())
}

fn attr<'a>(node: &'a XmlNode, key: &str) -> Result<&'a str, XmlError> {
    node.get_attr(key)
        .ok_or_else(|| semantic(format!("<{}> lacks {}", node.name, key)))
}

fn num<T: FromStr>(node: &XmlNode, key: &str) -> Result<T, XmlError> {
    let raw = attr(node, key)?;
    raw.parse().map_err(|_| semantic(format!("<{}> {}={:?} is not a number", node.name, key, raw)))
}

fn enumerated<T: FromStr>(node: &XmlNode, key: &str) -> Result<T, XmlError>
where
    T::Err: std::fmt::Display,
{
    attr(node, key)?.parse().map_err(|e: T::Err| semantic(e.to_string()))
}

fn opt_time(node: &XmlNode, key: &str) -> Result<Option<Timestamp>, XmlError> {
    match node.get_attr(key) {
        None => Ok(None),
        Some(_) => Ok(Some(Timestamp(num(node, key)?))),
    }
}

/// Validates `doc` against the work-order schema, then rebuilds the order
/// and checks the state-machine invariants the grammar cannot express.
pub fn from_xml(doc: &XmlDocument) -> Result<WorkOrder, XmlError> {
    let report = validate(doc, work_order_schema());
    if !report.is_valid() {
        return Err(XmlError::SchemaViolation(report.violations));
    }
    let root = &report.document.root;
    let child = |name: &str| root.first_child(name).ok_or_else(|| semantic(format!("missing <{name}>")));

    let p = child("product")?;
    let date = attr(p, "acquisition-date")?;
    let spec = ProductSpec {
        satellite: attr(p, "satellite")?.to_string(),
        sensor: attr(p, "sensor")?.to_string(),
        product_type: enumerated(p, "product-type")?,
        correction_level: enumerated(p, "correction-level")?,
        media: enumerated(p, "media")?,
        path: num(p, "path")?,
        row: num(p, "row")?,
        acquisition_date: NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|_| semantic(format!("bad acquisition date {date:?}")))?,
    };
    if spec.satellite.is_empty() || spec.sensor.is_empty() {
        return Err(semantic("satellite and sensor must be non-empty"));
    }

    let routing = child("routing")?;
    let mut steps = Vec::new();
    for s in routing.children_named("step") {
        steps.push(RoutingStep {
            index: num(s, "index")?,
            center: enumerated(s, "center")?,
            status: enumerated(s, "status")?,
            entered_at: opt_time(s, "entered")?,
            exited_at: opt_time(s, "exited")?,
        });
    }
    let plan = RoutingPlan { steps, current_index: num(routing, "current")? };

    let mut parameters = IndexMap::new();
    for param in child("parameters")?.children_named("param") {
        let key = attr(param, "key")?;
        if parameters.insert(key.to_string(), attr(param, "value")?.to_string()).is_some() {
            return Err(semantic(format!("parameter {key:?} appears twice")));
        }
    }

    let mut history = Vec::new();
    for e in child("history")?.children_named("event") {
        history.push(event_from_node(e)?);
    }

    let status: OrderStatus = enumerated(root, "status")?;
    let wo = WorkOrder {
        id: WorkOrderId(attr(root, "id")?.to_string()),
        spec,
        plan,
        parameters,
        history,
        status,
        created_at: Timestamp(num(root, "created")?),
    };
    check_semantics(&wo)?;
    Ok(wo)
}

fn check_semantics(wo: &WorkOrder) -> Result<(), XmlError> {
    let id = wo.id.as_str();
    let well_formed_id = id.len() > 3 && id.starts_with("WO-") && id[3..].bytes().all(|b| b.is_ascii_digit());
    if !well_formed_id {
        return Err(semantic(format!("bad work-order id {id:?}")));
    }
    wo.plan
        .check_layout(wo.status == OrderStatus::Completed)
        .map_err(semantic)?;
    let centers = wo.plan.centers();
    let unique: std::collections::BTreeSet<_> = centers.iter().collect();
    if unique.len() != centers.len() {
        return Err(semantic("a center appears twice in the routing"));
    }
    if wo.history.is_empty() {
        return Err(semantic("history is empty"));
    }
    for (i, e) in wo.history.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return Err(semantic(format!("history seq {} at position {}", e.seq, i + 1)));
        }
    }
    if wo.history[0].at != wo.created_at {
        return Err(semantic("CREATED event does not match the created timestamp"));
    }
    Ok(())
}
