use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::time::Timestamp;

use super::{Broker, BusError, Message, SubscriptionHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkReply {
    Ack,
    Retry,
}

/// Consumer code reacting to messages.
pub trait Sink: Send {
    fn handle(&mut self, msg: &Message) -> SinkReply;
}

impl<F: FnMut(&Message) -> SinkReply + Send> Sink for F {
    fn handle(&mut self, msg: &Message) -> SinkReply {
        self(msg)
    }
}

/// Pulls from subscriptions and runs sinks. Publishing never reaches a
/// sink: handlers run only inside [`Dispatcher::pump`], and the invocation
/// counter lets callers check that.
pub struct Dispatcher {
    broker: Arc<Broker>,
    sinks: Vec<(SubscriptionHandle, Box<dyn Sink>)>,
    invocations: Arc<AtomicU64>,
}

impl Dispatcher {
    pub fn new(broker: Arc<Broker>) -> Dispatcher {
        Dispatcher { broker, sinks: Vec::new(), invocations: Arc::new(AtomicU64::new(0)) }
    }

    pub fn register(&mut self, subscription: SubscriptionHandle, sink: Box<dyn Sink>) {
        self.sinks.push((subscription, sink));
    }

    /// Shared counter of sink invocations.
    pub fn invocations(&self) -> Arc<AtomicU64> {
        self.invocations.clone()
    }

    /// Drains every registered subscription once. Messages a sink asks to
    /// retry go back to the head of their queue after the pass.
    pub fn pump(&mut self, clock: Timestamp, lease: i64) -> Result<usize, BusError> {
        let mut handled = 0;
        for (sub, sink) in &mut self.sinks {
            let mut retry = Vec::new();
            while let Some(msg) = self.broker.consume(sub, clock, lease)? {
                self.invocations.fetch_add(1, Ordering::SeqCst);
                match sink.handle(&msg) {
                    SinkReply::Ack => {
                        self.broker.ack(sub, &msg.id)?;
                        handled += 1;
                    }
                    SinkReply::Retry => retry.push(msg.id),
                }
            }
            for id in retry.iter().rev() {
                self.broker.nack(sub, id)?;
            }
        }
        Ok(handled)
    }
}
