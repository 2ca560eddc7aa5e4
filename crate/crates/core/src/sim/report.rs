use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::bus::BrokerMetrics;
use crate::time::Timestamp;
use crate::warehouse::tsv::Table;
use crate::warehouse::{TatBy, TatRow, Warehouse};
use crate::workorder::{OrderStatus, WorkCenterId, WorkOrder};
use crate::xml::{apply_template, XmlDocument, XmlNode};

use super::SimConfig;

/// Human-readable summary, rendered from the report's XML form.
pub const SUMMARY_TEMPLATE: &str = "\
Simulation report (seed {/sim-report@seed})
{/sim-report@days} day(s) at {/sim-report@rate} orders per day, simulated time {/sim-report@start} to {/sim-report@end}

Orders: {/sim-report@created} created, {/sim-report@completed} completed, {/sim-report@cancelled} cancelled, {/sim-report@open} open
QC rework cycles: {/sim-report@rework}
Messages: {/sim-report@published} published, {/sim-report@acked} acknowledged

Work centers (mean seconds per visit):
{for /sim-report/center}  {center@name}: {center@processed} jobs, {center@visits} visits, mean {center@mean}
{end}
End-to-end turnaround by product type (mean seconds):
{for /sim-report/product}  {product@type}: {product@orders} orders, mean {product@mean}
{end}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CenterStats {
    pub center: WorkCenterId,
    pub processed: u64,
    pub handled: u64,
    pub assigned_messages: u64,
    pub completed_messages: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueueSample {
    pub at: Timestamp,
    pub center: WorkCenterId,
    pub waiting: usize,
    pub in_service: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub seed: u64,
    pub days: u32,
    pub order_rate: u32,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub created: usize,
    pub completed: usize,
    pub cancelled: usize,
    pub open: usize,
    pub rework_cycles: usize,
    /// Named event counters of the run.
    pub counters: BTreeMap<String, usize>,
    pub centers: Vec<CenterStats>,
    pub center_tat: Vec<TatRow>,
    pub product_tat: Vec<TatRow>,
    pub queue_trace: Vec<QueueSample>,
    pub messages: BTreeMap<String, u64>,
    pub broker: BrokerMetrics,
}

impl SimReport {
    #[allow(clippy::too_many_arguments)]
    pub(super) fn build<const N: usize>(
        cfg: &SimConfig,
        started_at: Timestamp,
        finished_at: Timestamp,
        orders: &[WorkOrder],
        centers: Vec<CenterStats>,
        queue_trace: Vec<QueueSample>,
        messages: BTreeMap<String, u64>,
        broker: BrokerMetrics,
        counters: [(&str, usize); N],
    ) -> SimReport {
        let count = |s: OrderStatus| orders.iter().filter(|o| o.status == s).count();
        let mut wh = Warehouse::new();
        for wo in orders.iter().filter(|o| o.status == OrderStatus::Completed) {
            wh.load_order(wo).expect("completed orders load");
        }
        SimReport {
            seed: cfg.seed,
            days: cfg.duration_days,
            order_rate: cfg.order_rate,
            started_at,
            finished_at,
            created: orders.len(),
            completed: count(OrderStatus::Completed),
            cancelled: count(OrderStatus::Cancelled),
            open: count(OrderStatus::Open),
            rework_cycles: orders.iter().map(WorkOrder::rework_cycles).sum(),
            counters: counters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            centers,
            center_tat: wh.report_tat(TatBy::Center),
            product_tat: wh.report_tat(TatBy::ProductType),
            queue_trace,
            messages,
            broker,
        }
    }

    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut summary = Table::new(&["metric", "value"]);
        let mut put = |k: &str, v: String| summary.rows.push(vec![k.to_string(), v]);
        put("seed", self.seed.to_string());
        put("days", self.days.to_string());
        put("order_rate", self.order_rate.to_string());
        put("started_at", self.started_at.to_string());
        put("finished_at", self.finished_at.to_string());
        put("created", self.created.to_string());
        put("completed", self.completed.to_string());
        put("cancelled", self.cancelled.to_string());
        put("open", self.open.to_string());
        put("rework_cycles", self.rework_cycles.to_string());
        for (k, v) in &self.counters {
            put(k, v.to_string());
        }
        put("messages_published", self.broker.published.to_string());
        put("messages_delivered", self.broker.delivered.to_string());
        put("messages_acked", self.broker.acked.to_string());
        put("messages_requeued", self.broker.requeued.to_string());

        let mut centers = Table::new(&[
            "center",
            "processed",
            "handled",
            "assigned_messages",
            "completed_messages",
            "visits",
            "tat_total",
            "tat_mean",
        ]);
        for c in &self.centers {
            let tat = self.center_tat.iter().find(|r| r.key == c.center.as_str());
            centers.rows.push(vec![
                c.center.to_string(),
                c.processed.to_string(),
                c.handled.to_string(),
                c.assigned_messages.to_string(),
                c.completed_messages.to_string(),
                tat.map(|t| t.samples).unwrap_or(0).to_string(),
                tat.map(|t| t.total_seconds).unwrap_or(0).to_string(),
                tat.map(|t| t.mean().to_string()).unwrap_or_default(),
            ]);
        }

        let mut products = Table::new(&["product_type", "orders", "tat_total", "tat_mean"]);
        for r in &self.product_tat {
            products.rows.push(vec![r.key.clone(), r.samples.to_string(), r.total_seconds.to_string(), r.mean().to_string()]);
        }

        let mut trace = Table::new(&["at", "center", "waiting", "in_service"]);
        for s in &self.queue_trace {
            trace.rows.push(vec![s.at.to_string(), s.center.to_string(), s.waiting.to_string(), s.in_service.to_string()]);
        }

        let mut messages = Table::new(&["topic", "count"]);
        for (t, n) in &self.messages {
            messages.rows.push(vec![t.clone(), n.to_string()]);
        }

        vec![("summary", summary), ("centers", centers), ("product_tat", products), ("queue_trace", trace), ("messages", messages)]
    }

    pub fn to_xml(&self) -> XmlDocument {
        let mut root = XmlNode::new("sim-report")
            .attr("seed", self.seed.to_string())
            .attr("days", self.days.to_string())
            .attr("rate", self.order_rate.to_string())
            .attr("start", self.started_at.to_string())
            .attr("end", self.finished_at.to_string())
            .attr("created", self.created.to_string())
            .attr("completed", self.completed.to_string())
            .attr("cancelled", self.cancelled.to_string())
            .attr("open", self.open.to_string())
            .attr("rework", self.rework_cycles.to_string())
            .attr("published", self.broker.published.to_string())
            .attr("acked", self.broker.acked.to_string());
        for c in &self.centers {
            let tat = self.center_tat.iter().find(|r| r.key == c.center.as_str());
            root = root.child(
                XmlNode::new("center")
                    .attr("name", c.center.as_str())
                    .attr("processed", c.processed.to_string())
                    .attr("visits", tat.map(|t| t.samples).unwrap_or(0).to_string())
                    .attr("mean", tat.map(|t| t.mean().to_string()).unwrap_or_else(|| "-".into())),
            );
        }
        for r in &self.product_tat {
            root = root.child(
                XmlNode::new("product")
                    .attr("type", &r.key)
                    .attr("orders", r.samples.to_string())
                    .attr("mean", r.mean().to_string()),
            );
        }
        XmlDocument::new(root)
    }

    pub fn summary(&self) -> String {
        apply_template(&self.to_xml(), SUMMARY_TEMPLATE).expect("summary template is valid")
    }

    /// Every table followed by the summary, as one text. Two runs produced
    /// the same report exactly when these texts are equal.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, t) in self.tables() {
            out.push_str(&format!("# {name}\n"));
            out.push_str(&t.render());
        }
        out.push_str("# summary.txt\n");
        out.push_str(&self.summary());
        out
    }

    /// Writes `<table>.tsv` files and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, t) in self.tables() {
            t.write(&dir.join(format!("{name}.tsv")))?;
        }
        fs::write(dir.join("summary.txt"), self.summary())
    }
}
