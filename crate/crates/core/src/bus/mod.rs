//! In-process publish/subscribe broker with durable subscriptions,
//! lease-based at-least-once delivery, an append-only journal and a
//! cross-broker router.

mod broker;
mod dispatch;
mod journal;
mod router;
mod topic;

use std::sync::Arc;

use bytes::Bytes;
use thiserror::Error;

use crate::time::Timestamp;

pub use broker::{Broker, BrokerMetrics, BrokerState, SubscriptionHandle, SubscriptionInfo, DEFAULT_LEASE};
pub use dispatch::{Dispatcher, Sink, SinkReply};
pub use journal::{decode_all, Journal, JournalRecord, RecordKind, SyncPolicy};
pub use router::{route_pump, RemoteBroker, RemoteEndpoint, RouterTable};
pub use topic::{Topic, TopicPattern};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("invalid topic {0:?}")]
    InvalidTopic(String),
    #[error("invalid topic pattern {0:?}")]
    InvalidPattern(String),
    #[error("subscriber {subscriber:?} already registered for {pattern:?}")]
    DuplicateSubscriber { subscriber: String, pattern: String },
    #[error("no subscription {subscriber:?} on {pattern:?}")]
    UnknownSubscription { subscriber: String, pattern: String },
    #[error("subscription is closed")]
    SubscriptionClosed,
    #[error("message {0:?} is not in flight on this subscription")]
    UnknownDelivery(String),
    #[error("remote {0:?} is unavailable")]
    RemoteUnavailable(String),
    #[error("journal: {0}")]
    Journal(String),
}

/// A message as seen by a consumer. `attempts` counts redeliveries on the
/// subscription it was consumed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: Arc<str>,
    pub topic: Topic,
    pub payload: Bytes,
    pub published_at: Timestamp,
    pub attempts: u32,
}
