//! Append-only operational store for work orders.
//!
//! On disk a store is a directory holding `journal.log`, one canonical XML
//! `<log-record>` per line, and at most one `snapshot-<lsn>.xml` with every
//! order that was closed when the snapshot was taken. A log record carries
//! either a full `<work-order>` (the order as first stored) or a single
//! `<event>` extending that order's history.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use parking_lot::RwLock;
use thiserror::Error;

use crate::time::Timestamp;
use crate::workorder::{replay, TransitionEvent, WorkCenterId, WorkOrder, WorkOrderError, WorkOrderId};
use crate::xml::{self, event_from_node, event_node, from_xml, to_xml, XmlDocument, XmlError, XmlNode};

pub const JOURNAL_FILE: &str = "journal.log";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("work order {0} not found")]
    NotFound(WorkOrderId),
    #[error("work order {0} already stored")]
    DuplicateOrder(WorkOrderId),
    #[error("sequence conflict on {order}: expected seq {expected}, got {got}")]
    SequenceConflict { order: WorkOrderId, expected: u64, got: u64 },
    #[error("rejected event: {0}")]
    InvalidEvent(#[from] WorkOrderError),
    #[error("stored order does not match its own history")]
    InconsistentOrder,
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

impl From<XmlError> for StoreError {
    fn from(e: XmlError) -> Self {
        StoreError::Corrupt(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOptions {
    /// fsync the journal after every append.
    pub sync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { sync: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogEntry {
    Snapshot(WorkOrder),
    Event(TransitionEvent),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub lsn: u64,
    pub order: WorkOrderId,
    pub recorded_at: Timestamp,
    pub entry: LogEntry,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        let child = match &self.entry {
            LogEntry::Snapshot(wo) => to_xml(wo).root,
            LogEntry::Event(e) => event_node(e),
        };
        let node = XmlNode::new("log-record")
            .attr("lsn", self.lsn.to_string())
            .attr("order", self.order.as_str())
            .attr("at", self.recorded_at.to_string())
            .child(child);
        xml::serialize(&XmlDocument::new(node)).expect("records hold serializable text")
    }

    pub fn from_line(line: &str) -> Result<LogRecord, StoreError> {
        let doc = xml::parse(line)?;
        let root = &doc.root;
        let bad = |m: &str| StoreError::Corrupt(format!("log record: {m}"));
        if root.name != "log-record" || root.children.len() != 1 {
            return Err(bad("expected <log-record> with one child"));
        }
        let lsn = root.get_attr("lsn").and_then(|v| v.parse().ok()).ok_or_else(|| bad("lsn"))?;
        let at = root.get_attr("at").and_then(|v| v.parse().ok()).ok_or_else(|| bad("at"))?;
        let order = WorkOrderId::from(root.get_attr("order").ok_or_else(|| bad("order"))?);
        let child = &root.children[0];
        let entry = match child.name.as_str() {
            "work-order" => LogEntry::Snapshot(from_xml(&XmlDocument::new(child.clone()))?),
            "event" => LogEntry::Event(event_from_node(child)?),
            other => return Err(bad(&format!("unexpected <{other}>"))),
        };
        Ok(LogRecord { lsn, order, recorded_at: Timestamp(at), entry })
    }
}

#[derive(Debug, Clone)]
struct Entry {
    order: WorkOrder,
    /// Present in the snapshot file rather than the journal.
    snapshotted: bool,
}

struct Files {
    dir: PathBuf,
    journal: File,
    sync: bool,
}

struct Inner {
    next_lsn: u64,
    orders: BTreeMap<WorkOrderId, Entry>,
    files: Option<Files>,
}

/// Thread-safe store; appends are serialized and totally ordered by lsn.
pub struct OperationalStore {
    inner: RwLock<Inner>,
}

/// Result of opening a store directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Recovery {
    pub records: usize,
    pub truncated_bytes: u64,
}

fn snapshot_files(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(lsn) = name.strip_prefix("snapshot-").and_then(|r| r.strip_suffix(".xml")) {
            if let Ok(lsn) = lsn.parse() {
                out.push((lsn, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn write_atomically(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl OperationalStore {
    pub fn in_memory() -> OperationalStore {
        OperationalStore { inner: RwLock::new(Inner { next_lsn: 1, orders: BTreeMap::new(), files: None }) }
    }

    /// Opens or creates the store in `dir`, discarding any incomplete tail of
    /// the journal.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<(OperationalStore, Recovery), StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut orders = BTreeMap::new();
        let mut next_lsn = 1;

        if let Some((lsn, path)) = snapshot_files(&dir)?.pop() {
            let doc = xml::parse(&fs::read_to_string(&path)?)?;
            for node in &doc.root.children {
                let wo = from_xml(&XmlDocument::new(node.clone()))?;
                orders.insert(wo.id.clone(), Entry { order: wo, snapshotted: true });
            }
            next_lsn = lsn + 1;
        }

        let path = dir.join(JOURNAL_FILE);
        let mut journal = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut text = Vec::new();
        journal.read_to_end(&mut text)?;
        let mut valid = 0usize;
        let mut records = 0;
        let mut pos = 0usize;
        while let Some(nl) = text[pos..].iter().position(|&b| b == b'\n') {
            let Ok(line) = std::str::from_utf8(&text[pos..pos + nl]) else { break };
            let Ok(rec) = LogRecord::from_line(line) else { break };
            let order = rec.order.clone();
            // Records of orders already in the snapshot are leftovers of an
            // interrupted compaction.
            if !orders.get(&order).is_some_and(|e: &Entry| e.snapshotted) {
                Inner::apply(&mut orders, &rec)?;
            }
            next_lsn = next_lsn.max(rec.lsn + 1);
            records += 1;
            pos += nl + 1;
            valid = pos;
        }
        let truncated = (text.len() - valid) as u64;
        if truncated > 0 {
            journal.set_len(valid as u64)?;
            journal.sync_all()?;
        }
        let inner = Inner { next_lsn, orders, files: Some(Files { dir, journal, sync: options.sync }) };
        Ok((OperationalStore { inner: RwLock::new(inner) }, Recovery { records, truncated_bytes: truncated }))
    }

    /// Stores a new order in full. Its history must replay to itself.
    pub fn insert(&self, wo: &WorkOrder, clock: Timestamp) -> Result<u64, StoreError> {
        if replay(&wo.id, &wo.spec, &wo.history).as_ref() != Ok(wo) {
            return Err(StoreError::InconsistentOrder);
        }
        let mut inner = self.inner.write();
        if inner.orders.contains_key(&wo.id) {
            return Err(StoreError::DuplicateOrder(wo.id.clone()));
        }
        let rec = LogRecord { lsn: inner.next_lsn, order: wo.id.clone(), recorded_at: clock, entry: LogEntry::Snapshot(wo.clone()) };
        inner.write_record(&rec)?;
        inner.orders.insert(wo.id.clone(), Entry { order: wo.clone(), snapshotted: false });
        Ok(rec.lsn)
    }

    /// Appends one event. `event.seq` must be exactly one past the stored
    /// history, and the extended history must replay.
    pub fn append(&self, id: &WorkOrderId, event: TransitionEvent) -> Result<u64, StoreError> {
        let mut inner = self.inner.write();
        let entry = inner.orders.get(id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
        let expected = entry.order.last_seq() + 1;
        if event.seq != expected {
            return Err(StoreError::SequenceConflict { order: id.clone(), expected, got: event.seq });
        }
        let mut history = entry.order.history.clone();
        history.push(event.clone());
        let next = replay(id, &entry.order.spec, &history)?;
        let rec = LogRecord { lsn: inner.next_lsn, order: id.clone(), recorded_at: event.at, entry: LogEntry::Event(event) };
        inner.write_record(&rec)?;
        inner.orders.get_mut(id).expect("checked above").order = next;
        Ok(rec.lsn)
    }

    /// Inserts `wo` or appends whatever events it has beyond the stored
    /// copy. Returns the lsns written.
    pub fn save(&self, wo: &WorkOrder, clock: Timestamp) -> Result<Vec<u64>, StoreError> {
        let stored = match self.load(&wo.id) {
            Ok(stored) => stored,
            Err(StoreError::NotFound(_)) => {
                let first = WorkOrder { history: wo.history[..1].to_vec(), ..wo.clone() };
                let first = replay(&wo.id, &wo.spec, &first.history)?;
                let mut lsns = vec![self.insert(&first, clock)?];
                for e in &wo.history[1..] {
                    lsns.push(self.append(&wo.id, e.clone())?);
                }
                return Ok(lsns);
            }
            Err(e) => return Err(e),
        };
        let have = stored.history.len();
        if wo.history.len() < have || wo.history[..have] != stored.history[..] {
            return Err(StoreError::SequenceConflict {
                order: wo.id.clone(),
                expected: stored.last_seq() + 1,
                got: wo.history.get(have).map(|e| e.seq).unwrap_or(wo.last_seq()),
            });
        }
        wo.history[have..].iter().map(|e| self.append(&wo.id, e.clone())).collect()
    }

    pub fn load(&self, id: &WorkOrderId) -> Result<WorkOrder, StoreError> {
        self.inner.read().orders.get(id).map(|e| e.order.clone()).ok_or_else(|| StoreError::NotFound(id.clone()))
    }

    pub fn contains(&self, id: &WorkOrderId) -> bool {
        self.inner.read().orders.contains_key(id)
    }

    /// OPEN orders, optionally only those whose current step is at `center`.
    pub fn list_open(&self, center: Option<WorkCenterId>) -> Vec<WorkOrderId> {
        self.inner
            .read()
            .orders
            .values()
            .filter(|e| e.order.is_open() && center.is_none_or(|c| e.order.current_center() == Some(c)))
            .map(|e| e.order.id.clone())
            .collect()
    }

    /// COMPLETED orders whose completion falls on a day in `from..=to`.
    pub fn completed_between(&self, from: NaiveDate, to: NaiveDate) -> Vec<WorkOrderId> {
        let (lo, hi) = (Timestamp::start_of(from), Timestamp::end_of(to));
        self.inner
            .read()
            .orders
            .values()
            .filter(|e| e.order.completed_at().is_some_and(|t| lo <= t && t <= hi))
            .map(|e| e.order.id.clone())
            .collect()
    }

    pub fn last_update_at(&self, id: &WorkOrderId) -> Result<Timestamp, StoreError> {
        self.inner.read().orders.get(id).map(|e| e.order.last_update_at()).ok_or_else(|| StoreError::NotFound(id.clone()))
    }

    pub fn ids(&self) -> Vec<WorkOrderId> {
        self.inner.read().orders.keys().cloned().collect()
    }

    pub fn all_orders(&self) -> Vec<WorkOrder> {
        self.inner.read().orders.values().map(|e| e.order.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Next lsn to be assigned.
    pub fn next_lsn(&self) -> u64 {
        self.inner.read().next_lsn
    }

    /// Moves every closed order into a new snapshot file and drops their
    /// records from the journal. Returns the snapshot path (none for an
    /// in-memory store).
    pub fn compact(&self) -> Result<Option<PathBuf>, StoreError> {
        let mut inner = self.inner.write();
        let Inner { next_lsn, orders, files } = &mut *inner;
        let Some(files) = files.as_mut() else { return Ok(None) };
        let upto = *next_lsn - 1;

        let mut snapshot = XmlNode::new("snapshot").attr("lsn", upto.to_string());
        for e in orders.values().filter(|e| !e.order.is_open()) {
            snapshot.children.push(to_xml(&e.order).root);
        }
        let snap_path = files.dir.join(format!("snapshot-{upto}.xml"));
        write_atomically(&snap_path, xml::serialize(&XmlDocument::new(snapshot))?.as_bytes())?;

        let journal_path = files.dir.join(JOURNAL_FILE);
        let mut text = String::new();
        File::open(&journal_path)?.read_to_string(&mut text)?;
        let mut kept = String::new();
        for line in text.lines() {
            let rec = LogRecord::from_line(line)?;
            if orders.get(&rec.order).is_some_and(|e| e.order.is_open()) {
                kept.push_str(line);
                kept.push('\n');
            }
        }
        write_atomically(&journal_path, kept.as_bytes())?;
        files.journal = OpenOptions::new().append(true).open(&journal_path)?;

        for (lsn, path) in snapshot_files(&files.dir)? {
            if lsn != upto {
                fs::remove_file(path)?;
            }
        }
        for e in orders.values_mut() {
            e.snapshotted = !e.order.is_open();
        }
        Ok(Some(snap_path))
    }
}

impl Inner {
    fn write_record(&mut self, rec: &LogRecord) -> Result<(), StoreError> {
        if let Some(files) = self.files.as_mut() {
            let mut line = rec.to_line();
            line.push('\n');
            files.journal.write_all(line.as_bytes())?;
            if files.sync {
                files.journal.sync_data()?;
            }
        }
        self.next_lsn = rec.lsn + 1;
        Ok(())
    }

    fn apply(orders: &mut BTreeMap<WorkOrderId, Entry>, rec: &LogRecord) -> Result<(), StoreError> {
        match &rec.entry {
            LogEntry::Snapshot(wo) => {
                orders.insert(wo.id.clone(), Entry { order: wo.clone(), snapshotted: false });
            }
            LogEntry::Event(ev) => {
                let entry = orders
                    .get_mut(&rec.order)
                    .ok_or_else(|| StoreError::Corrupt(format!("event for unknown order {}", rec.order)))?;
                let mut history = entry.order.history.clone();
                history.push(ev.clone());
                entry.order = replay(&rec.order, &entry.order.spec, &history)?;
            }
        }
        Ok(())
    }
}
