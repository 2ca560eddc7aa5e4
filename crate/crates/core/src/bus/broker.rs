use std::collections::{HashSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bytes::Bytes;
use indexmap::IndexMap;
use parking_lot::Mutex;

use crate::time::Timestamp;

use super::journal::{Journal, JournalRecord, RecordKind, SyncPolicy};
use super::{BusError, Message, Topic, TopicPattern};

/// Lease granted by `consume` when callers have no preference, in seconds.
pub const DEFAULT_LEASE: i64 = 30;

#[derive(Debug)]
struct Stored {
    seq: u64,
    id: Arc<str>,
    topic: Topic,
    payload: Bytes,
    published_at: Timestamp,
}

#[derive(Debug, Clone)]
struct Delivery {
    msg: Arc<Stored>,
    attempts: u32,
}

impl Delivery {
    fn message(&self) -> Message {
        Message {
            id: self.msg.id.clone(),
            topic: self.msg.topic.clone(),
            payload: self.msg.payload.clone(),
            published_at: self.msg.published_at,
            attempts: self.attempts,
        }
    }
}

#[derive(Debug, Clone)]
struct SubState {
    queue: VecDeque<Delivery>,
    inflight: IndexMap<Arc<str>, (Delivery, Timestamp)>,
    open: bool,
}

type SubKey = (String, TopicPattern);

/// Everything a broker knows, detached from its journal. Cloning is cheap
/// (payloads are shared), which lets tests fork a broker at any point.
#[derive(Debug, Clone)]
pub struct BrokerState {
    name: String,
    next_seq: u64,
    subs: IndexMap<SubKey, SubState>,
    known_ids: HashSet<Arc<str>>,
}

/// Client-side reference to a durable subscription.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubscriptionHandle {
    pub subscriber: String,
    pub pattern: TopicPattern,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriptionInfo {
    pub subscriber: String,
    pub pattern: String,
    pub queued: usize,
    pub inflight: usize,
    pub open: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BrokerMetrics {
    pub published: u64,
    pub delivered: u64,
    pub acked: u64,
    pub requeued: u64,
}

impl BrokerState {
    fn new(name: &str) -> BrokerState {
        BrokerState { name: name.to_string(), next_seq: 1, subs: IndexMap::new(), known_ids: HashSet::new() }
    }

    fn sub(&self, h: &SubscriptionHandle) -> Result<&SubState, BusError> {
        self.subs.get(&(h.subscriber.clone(), h.pattern.clone())).ok_or_else(|| BusError::UnknownSubscription {
            subscriber: h.subscriber.clone(),
            pattern: h.pattern.to_string(),
        })
    }

    fn sub_mut(&mut self, h: &SubscriptionHandle) -> Result<&mut SubState, BusError> {
        let key = (h.subscriber.clone(), h.pattern.clone());
        self.subs.get_mut(&key).ok_or_else(|| BusError::UnknownSubscription {
            subscriber: h.subscriber.clone(),
            pattern: h.pattern.to_string(),
        })
    }

    fn open_sub_mut(&mut self, h: &SubscriptionHandle) -> Result<&mut SubState, BusError> {
        let sub = self.sub_mut(h)?;
        if sub.open {
            Ok(sub)
        } else {
            Err(BusError::SubscriptionClosed)
        }
    }

    /// Applies a journaled mutation. Used identically for live operations
    /// and for recovery; in recovery nothing is in flight, so acks and
    /// requeues find their message in the queue instead.
    fn apply(&mut self, rec: &JournalRecord) {
        match rec.kind {
            RecordKind::Publish => {
                let topic = Topic::new(&rec.topic).expect("journaled topics are valid");
                let id: Arc<str> = rec.message_id.as_str().into();
                let msg = Arc::new(Stored {
                    seq: self.next_seq,
                    id: id.clone(),
                    topic,
                    payload: rec.payload.clone(),
                    published_at: rec.at,
                });
                self.next_seq += 1;
                self.known_ids.insert(id);
                for ((_, pattern), sub) in self.subs.iter_mut() {
                    if pattern.matches(&msg.topic) {
                        sub.queue.push_back(Delivery { msg: msg.clone(), attempts: 0 });
                    }
                }
            }
            RecordKind::Sequence => {
                self.next_seq = self.next_seq.max(rec.message_id.parse().unwrap_or(0));
            }
            RecordKind::Subscribe => {
                let pattern = TopicPattern::new(&rec.topic).expect("journaled patterns are valid");
                self.subs.entry((rec.subscriber.clone(), pattern)).or_insert_with(|| SubState {
                    queue: VecDeque::new(),
                    inflight: IndexMap::new(),
                    open: true,
                });
            }
            RecordKind::Unsubscribe => {
                let pattern = TopicPattern::new(&rec.topic).expect("journaled patterns are valid");
                self.subs.shift_remove(&(rec.subscriber.clone(), pattern));
            }
            RecordKind::Ack | RecordKind::Requeue => {
                let Ok(pattern) = TopicPattern::new(&rec.topic) else { return };
                let Some(sub) = self.subs.get_mut(&(rec.subscriber.clone(), pattern)) else { return };
                let id = rec.message_id.as_str();
                if let Some((mut d, _)) = sub.inflight.shift_remove(id) {
                    if rec.kind == RecordKind::Requeue {
                        d.attempts += 1;
                        sub.queue.push_front(d);
                    }
                } else if let Some(pos) = sub.queue.iter().position(|d| &*d.msg.id == id) {
                    if rec.kind == RecordKind::Requeue {
                        sub.queue[pos].attempts += 1;
                    } else {
                        sub.queue.remove(pos);
                    }
                }
            }
        }
    }

    fn expired(&self, now: Timestamp) -> Vec<(SubKey, Arc<str>)> {
        let mut out = Vec::new();
        for (key, sub) in &self.subs {
            let mut due: Vec<&Delivery> =
                sub.inflight.values().filter(|(_, deadline)| *deadline <= now).map(|(d, _)| d).collect();
            // Requeue pushes to the front, so go newest first to leave the
            // batch in publish order.
            due.sort_by_key(|d| std::cmp::Reverse(d.msg.seq));
            out.extend(due.into_iter().map(|d| (key.clone(), d.msg.id.clone())));
        }
        out
    }

    /// Records that rebuild this state from an empty journal.
    fn checkpoint(&self, at: Timestamp) -> Vec<JournalRecord> {
        let mut recs = Vec::new();
        for (subscriber, pattern) in self.subs.keys() {
            recs.push(record(RecordKind::Subscribe, at, "", pattern.as_str(), subscriber, Bytes::new()));
        }
        let mut live: Vec<&Arc<Stored>> = Vec::new();
        let mut seen = HashSet::new();
        for sub in self.subs.values() {
            for d in sub.queue.iter().chain(sub.inflight.values().map(|(d, _)| d)) {
                if seen.insert(d.msg.seq) {
                    live.push(&d.msg);
                }
            }
        }
        live.sort_by_key(|m| m.seq);
        for m in &live {
            recs.push(record(RecordKind::Publish, m.published_at, &m.id, m.topic.as_str(), "", m.payload.clone()));
        }
        // A compacted message reappears in every matching subscription, so
        // acks restore the ones that had already been consumed there.
        for ((subscriber, pattern), sub) in &self.subs {
            let held: HashSet<u64> =
                sub.queue.iter().chain(sub.inflight.values().map(|(d, _)| d)).map(|d| d.msg.seq).collect();
            for m in &live {
                if pattern.matches(&m.topic) && !held.contains(&m.seq) {
                    recs.push(record(RecordKind::Ack, at, &m.id, pattern.as_str(), subscriber, Bytes::new()));
                }
            }
            for d in sub.queue.iter().chain(sub.inflight.values().map(|(d, _)| d)) {
                for _ in 0..d.attempts {
                    recs.push(record(RecordKind::Requeue, at, &d.msg.id, pattern.as_str(), subscriber, Bytes::new()));
                }
            }
        }
        recs.push(record(RecordKind::Sequence, at, &self.next_seq.to_string(), "", "", Bytes::new()));
        recs
    }
}

fn record(kind: RecordKind, at: Timestamp, id: &str, topic: &str, subscriber: &str, payload: Bytes) -> JournalRecord {
    JournalRecord {
        kind,
        at,
        message_id: id.to_string(),
        topic: topic.to_string(),
        subscriber: subscriber.to_string(),
        payload,
    }
}

struct Inner {
    state: BrokerState,
    journal: Option<Journal>,
}

impl Inner {
    fn commit(&mut self, rec: JournalRecord) -> Result<(), BusError> {
        if let Some(j) = self.journal.as_mut() {
            j.append(&rec)?;
        }
        self.state.apply(&rec);
        Ok(())
    }
}

/// Thread-safe broker. Every operation takes one lock, so per-subscription
/// operations are linearizable.
pub struct Broker {
    inner: Mutex<Inner>,
    published: AtomicU64,
    delivered: AtomicU64,
    acked: AtomicU64,
    requeued: AtomicU64,
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broker").field("name", &self.name()).finish()
    }
}

impl Broker {
    /// A broker without persistence.
    pub fn new(name: &str) -> Broker {
        Broker::from_parts(BrokerState::new(name), None)
    }

    fn from_parts(state: BrokerState, journal: Option<Journal>) -> Broker {
        Broker {
            inner: Mutex::new(Inner { state, journal }),
            published: AtomicU64::new(0),
            delivered: AtomicU64::new(0),
            acked: AtomicU64::new(0),
            requeued: AtomicU64::new(0),
        }
    }

    /// Opens a journaled broker, replaying whatever the journal holds. The
    /// second value is the number of corrupt tail bytes discarded.
    pub fn open(name: &str, journal: impl AsRef<Path>, sync: SyncPolicy) -> Result<(Broker, u64), BusError> {
        let (journal, records, cut) = Journal::open(journal, sync)?;
        let mut state = BrokerState::new(name);
        for rec in &records {
            state.apply(rec);
        }
        Ok((Broker::from_parts(state, Some(journal)), cut))
    }

    /// An unjournaled copy of the current state.
    pub fn fork(&self) -> Broker {
        Broker::from_parts(self.inner.lock().state.clone(), None)
    }

    pub fn snapshot(&self) -> BrokerState {
        self.inner.lock().state.clone()
    }

    pub fn name(&self) -> String {
        self.inner.lock().state.name.clone()
    }

    pub fn publish(&self, topic: &str, payload: impl Into<Bytes>, clock: Timestamp) -> Result<Arc<str>, BusError> {
        let topic = Topic::new(topic)?;
        let mut inner = self.inner.lock();
        let id = format!("{}-{}", inner.state.name, inner.state.next_seq);
        inner.commit(record(RecordKind::Publish, clock, &id, topic.as_str(), "", payload.into()))?;
        self.published.fetch_add(1, Ordering::Relaxed);
        Ok(id.into())
    }

    /// Republishes a message from another broker under its original id.
    /// Returns `false` when that id is already known here.
    pub fn publish_forwarded(&self, msg: &Message) -> Result<bool, BusError> {
        let mut inner = self.inner.lock();
        if inner.state.known_ids.contains(&msg.id) {
            return Ok(false);
        }
        inner.commit(record(RecordKind::Publish, msg.published_at, &msg.id, msg.topic.as_str(), "", msg.payload.clone()))?;
        self.published.fetch_add(1, Ordering::Relaxed);
        Ok(true)
    }

    pub fn subscribe(&self, subscriber: &str, pattern: &str) -> Result<SubscriptionHandle, BusError> {
        let pattern = TopicPattern::new(pattern)?;
        let mut inner = self.inner.lock();
        if inner.state.subs.contains_key(&(subscriber.to_string(), pattern.clone())) {
            return Err(BusError::DuplicateSubscriber { subscriber: subscriber.to_string(), pattern: pattern.to_string() });
        }
        inner.commit(record(RecordKind::Subscribe, Timestamp(0), "", pattern.as_str(), subscriber, Bytes::new()))?;
        Ok(SubscriptionHandle { subscriber: subscriber.to_string(), pattern })
    }

    /// Reconnects to an existing durable subscription.
    pub fn attach(&self, subscriber: &str, pattern: &str) -> Result<SubscriptionHandle, BusError> {
        let h = SubscriptionHandle { subscriber: subscriber.to_string(), pattern: TopicPattern::new(pattern)? };
        self.inner.lock().state.sub_mut(&h)?.open = true;
        Ok(h)
    }

    /// Disconnects: the subscription keeps accumulating messages, but
    /// consume and ack fail until `attach`.
    pub fn close(&self, h: &SubscriptionHandle) -> Result<(), BusError> {
        self.inner.lock().state.sub_mut(h)?.open = false;
        Ok(())
    }

    pub fn unsubscribe(&self, h: &SubscriptionHandle) -> Result<(), BusError> {
        let mut inner = self.inner.lock();
        inner.state.sub(h)?;
        inner.commit(record(RecordKind::Unsubscribe, Timestamp(0), "", h.pattern.as_str(), &h.subscriber, Bytes::new()))
    }

    pub fn consume(&self, h: &SubscriptionHandle, clock: Timestamp, lease: i64) -> Result<Option<Message>, BusError> {
        let mut inner = self.inner.lock();
        let sub = inner.state.open_sub_mut(h)?;
        let Some(d) = sub.queue.pop_front() else { return Ok(None) };
        let msg = d.message();
        sub.inflight.insert(d.msg.id.clone(), (d, clock + lease));
        self.delivered.fetch_add(1, Ordering::Relaxed);
        Ok(Some(msg))
    }

    pub fn ack(&self, h: &SubscriptionHandle, id: &str) -> Result<(), BusError> {
        self.settle(h, id, RecordKind::Ack, Timestamp(0))?;
        self.acked.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Returns an in-flight message to the head of its queue immediately.
    pub fn nack(&self, h: &SubscriptionHandle, id: &str) -> Result<(), BusError> {
        self.settle(h, id, RecordKind::Requeue, Timestamp(0))?;
        self.requeued.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn settle(&self, h: &SubscriptionHandle, id: &str, kind: RecordKind, at: Timestamp) -> Result<(), BusError> {
        let mut inner = self.inner.lock();
        let sub = inner.state.open_sub_mut(h)?;
        if !sub.inflight.contains_key(id) {
            return Err(BusError::UnknownDelivery(id.to_string()));
        }
        inner.commit(record(kind, at, id, h.pattern.as_str(), &h.subscriber, Bytes::new()))
    }

    /// Requeues every in-flight message whose lease deadline is at or before
    /// `clock`, ahead of never-delivered messages and in publish order.
    pub fn sweep_redelivery(&self, clock: Timestamp) -> Result<usize, BusError> {
        let mut inner = self.inner.lock();
        let due = inner.state.expired(clock);
        for ((subscriber, pattern), id) in &due {
            inner.commit(record(RecordKind::Requeue, clock, id, pattern.as_str(), subscriber, Bytes::new()))?;
        }
        self.requeued.fetch_add(due.len() as u64, Ordering::Relaxed);
        Ok(due.len())
    }

    /// Rewrites the journal to hold only what is still undelivered or
    /// unacknowledged. Forwarding dedup ids of settled messages are dropped.
    pub fn compact(&self, clock: Timestamp) -> Result<(), BusError> {
        let mut inner = self.inner.lock();
        let recs = inner.state.checkpoint(clock);
        let Inner { state, journal } = &mut *inner;
        if let Some(j) = journal.as_mut() {
            j.rewrite(&recs)?;
        }
        let mut rebuilt = BrokerState::new(&state.name);
        for rec in &recs {
            rebuilt.apply(rec);
        }
        // Keep live leases and open flags.
        for (key, sub) in &state.subs {
            if let Some(new_sub) = rebuilt.subs.get_mut(key) {
                new_sub.open = sub.open;
                for (id, (_, deadline)) in &sub.inflight {
                    if let Some(pos) = new_sub.queue.iter().position(|d| d.msg.id == *id) {
                        let d = new_sub.queue.remove(pos).expect("position is valid");
                        new_sub.inflight.insert(id.clone(), (d, *deadline));
                    }
                }
            }
        }
        *state = rebuilt;
        Ok(())
    }

    pub fn subscriptions(&self) -> Vec<SubscriptionInfo> {
        self.inner
            .lock()
            .state
            .subs
            .iter()
            .map(|((subscriber, pattern), s)| SubscriptionInfo {
                subscriber: subscriber.clone(),
                pattern: pattern.to_string(),
                queued: s.queue.len(),
                inflight: s.inflight.len(),
                open: s.open,
            })
            .collect()
    }

    /// Messages waiting on (not in flight for) a subscription.
    pub fn queued(&self, h: &SubscriptionHandle) -> Result<Vec<Message>, BusError> {
        Ok(self.inner.lock().state.sub(h)?.queue.iter().map(Delivery::message).collect())
    }

    pub fn metrics(&self) -> BrokerMetrics {
        BrokerMetrics {
            published: self.published.load(Ordering::Relaxed),
            delivered: self.delivered.load(Ordering::Relaxed),
            acked: self.acked.load(Ordering::Relaxed),
            requeued: self.requeued.load(Ordering::Relaxed),
        }
    }
}

impl BrokerState {
    /// Total messages still owed to subscribers (queued plus in flight).
    pub fn outstanding(&self) -> usize {
        self.subs.values().map(|s| s.queue.len() + s.inflight.len()).sum()
    }
}
