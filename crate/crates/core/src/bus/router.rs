use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::time::Timestamp;

use super::{Broker, BusError, Message, SubscriptionHandle, TopicPattern, DEFAULT_LEASE};

/// Somewhere the router can forward to.
pub trait RemoteEndpoint {
    fn name(&self) -> &str;
    /// Delivers `msg`; `Ok(false)` means the remote already had it.
    fn deliver(&self, msg: &Message) -> Result<bool, BusError>;
}

/// A broker in another center, with a switch for link failures.
pub struct RemoteBroker {
    name: String,
    pub broker: Arc<Broker>,
    available: AtomicBool,
}

impl RemoteBroker {
    pub fn new(name: &str, broker: Arc<Broker>) -> RemoteBroker {
        RemoteBroker { name: name.to_string(), broker, available: AtomicBool::new(true) }
    }

    pub fn set_available(&self, up: bool) {
        self.available.store(up, Ordering::SeqCst);
    }
}

impl RemoteEndpoint for RemoteBroker {
    fn name(&self) -> &str {
        &self.name
    }

    fn deliver(&self, msg: &Message) -> Result<bool, BusError> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(BusError::RemoteUnavailable(self.name.clone()));
        }
        self.broker.publish_forwarded(msg)
    }
}

/// Routes from topic patterns to remote centers, plus the ids already sent
/// to each remote.
#[derive(Debug, Clone)]
pub struct RouterTable {
    pub routes: Vec<(TopicPattern, String)>,
    seen: HashSet<(Arc<str>, String)>,
    subscription: SubscriptionHandle,
}

impl RouterTable {
    /// Registers the router's own durable subscription on `source`.
    pub fn new(source: &Broker, router_id: &str, routes: &[(&str, &str)]) -> Result<RouterTable, BusError> {
        let routes = routes
            .iter()
            .map(|(p, remote)| Ok((TopicPattern::new(p)?, remote.to_string())))
            .collect::<Result<Vec<_>, BusError>>()?;
        let subscription = source.subscribe(router_id, "*")?;
        Ok(RouterTable { routes, seen: HashSet::new(), subscription })
    }

    pub fn was_forwarded(&self, id: &str, remote: &str) -> bool {
        self.seen.contains(&(Arc::from(id), remote.to_string()))
    }

    pub fn subscription(&self) -> &SubscriptionHandle {
        &self.subscription
    }
}

/// Forwards the router's backlog on `source` to the matching remotes and
/// returns how many (message, remote) deliveries happened. A message whose
/// delivery failed anywhere is put back at the head of the backlog; the
/// remotes that did receive it are remembered so a retry does not send it
/// twice.
pub fn route_pump(
    source: &Broker,
    router: &mut RouterTable,
    targets: &[&dyn RemoteEndpoint],
    clock: Timestamp,
) -> Result<usize, BusError> {
    let sub = router.subscription.clone();
    let mut forwarded = 0;
    let mut retained = Vec::new();
    let mut failure = None;
    while let Some(msg) = source.consume(&sub, clock, DEFAULT_LEASE)? {
        let mut ok = true;
        for (pattern, remote) in &router.routes {
            if !pattern.matches(&msg.topic) || router.seen.contains(&(msg.id.clone(), remote.clone())) {
                continue;
            }
            let result = match targets.iter().find(|t| t.name() == remote) {
                Some(t) => t.deliver(&msg),
                None => Err(BusError::RemoteUnavailable(remote.clone())),
            };
            match result {
                Ok(fresh) => {
                    router.seen.insert((msg.id.clone(), remote.clone()));
                    forwarded += fresh as usize;
                }
                Err(e) => {
                    ok = false;
                    failure.get_or_insert(e);
                }
            }
        }
        if ok {
            source.ack(&sub, &msg.id)?;
        } else {
            retained.push(msg.id);
        }
    }
    for id in retained.iter().rev() {
        source.nack(&sub, id)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(forwarded),
    }
}
