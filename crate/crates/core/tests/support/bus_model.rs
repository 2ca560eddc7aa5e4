//! Model checks for the broker: exhaustive small schedules and a threaded
//! stress run, both reconciled against what was published.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use rand::Rng;

use orbitflow_core::bus::{Broker, BusError, SubscriptionHandle};
use orbitflow_core::Timestamp;

const LEASE: i64 = 10;
const TOPICS: [&str; 2] = ["a.x", "b.y"];
const PATTERNS: [&str; 2] = ["a.*", "*"];

#[derive(Clone, Copy, Debug)]
enum Op {
    Publish(usize),
    Consume(usize),
    Ack(usize),
    Expire,
}

#[derive(Clone)]
struct Node {
    broker: Arc<Broker>,
    subs: Vec<SubscriptionHandle>,
    clock: Timestamp,
    /// (id, topic) in publish order.
    published: Vec<(String, usize)>,
    /// Ids each consumer holds unacked.
    held: Vec<Vec<String>>,
    acked: Vec<Vec<String>>,
    delivered: Vec<Vec<(String, u32)>>,
}

impl Node {
    fn root() -> Node {
        let broker = Broker::new("m");
        let subs = PATTERNS.iter().enumerate().map(|(i, p)| broker.subscribe(&format!("s{i}"), p).unwrap()).collect();
        Node {
            broker: Arc::new(broker),
            subs,
            clock: Timestamp(0),
            published: Vec::new(),
            held: vec![Vec::new(); 2],
            acked: vec![Vec::new(); 2],
            delivered: vec![Vec::new(); 2],
        }
    }

    fn fork(&self) -> Node {
        Node { broker: Arc::new(self.broker.fork()), ..self.clone() }
    }

    fn enabled(&self) -> Vec<Op> {
        let mut ops = vec![Op::Publish(0), Op::Publish(1)];
        for s in 0..2 {
            if !self.broker.queued(&self.subs[s]).unwrap().is_empty() {
                ops.push(Op::Consume(s));
            }
            if !self.held[s].is_empty() {
                ops.push(Op::Ack(s));
            }
        }
        if self.broker.subscriptions().iter().any(|i| i.inflight > 0) {
            ops.push(Op::Expire);
        }
        ops
    }

    fn apply(&mut self, op: Op) {
        match op {
            Op::Publish(t) => {
                let id = self.broker.publish(TOPICS[t], vec![t as u8], self.clock).unwrap();
                self.published.push((id.to_string(), t));
            }
            Op::Consume(s) => {
                let m = self.broker.consume(&self.subs[s], self.clock, LEASE).unwrap().expect("enabled");
                self.delivered[s].push((m.id.to_string(), m.attempts));
                self.held[s].push(m.id.to_string());
            }
            Op::Ack(s) => {
                let id = self.held[s].remove(0);
                self.broker.ack(&self.subs[s], &id).unwrap();
                self.acked[s].push(id);
            }
            Op::Expire => {
                // Consumers crash: their leases run out and nothing is acked.
                self.clock = self.clock + LEASE;
                let n = self.broker.sweep_redelivery(self.clock).unwrap();
                assert!(n > 0);
                for h in &mut self.held {
                    h.clear();
                }
            }
        }
        self.check_disjoint();
    }

    fn check_disjoint(&self) {
        for (s, info) in self.broker.subscriptions().iter().enumerate() {
            let queued: Vec<String> = self.broker.queued(&self.subs[s]).unwrap().iter().map(|m| m.id.to_string()).collect();
            assert!(queued.iter().all(|id| !self.held[s].contains(id)), "message both queued and in flight");
            assert_eq!(info.inflight, self.held[s].len());
        }
    }

    /// Runs well-behaved consumers to quiescence and reconciles.
    fn drain_and_check(mut self) {
        loop {
            let ops = self.enabled();
            if let Some(op) = ops.iter().find(|o| matches!(o, Op::Ack(_))) {
                self.apply(*op);
            } else if let Some(op) = ops.iter().find(|o| matches!(o, Op::Consume(_))) {
                self.apply(*op);
            } else if ops.iter().any(|o| matches!(o, Op::Expire)) {
                self.apply(Op::Expire);
            } else {
                break;
            }
        }
        assert_eq!(self.broker.snapshot().outstanding(), 0);
        for s in 0..2 {
            let pattern = orbitflow_core::bus::TopicPattern::new(PATTERNS[s]).unwrap();
            let mut want: Vec<String> = self
                .published
                .iter()
                .filter(|(_, t)| pattern.matches(&orbitflow_core::bus::Topic::new(TOPICS[*t]).unwrap()))
                .map(|(id, _)| id.clone())
                .collect();
            // FIFO among first deliveries.
            let firsts: Vec<&String> = self.delivered[s].iter().filter(|(_, a)| *a == 0).map(|(id, _)| id).collect();
            let order: Vec<&String> = want.iter().filter(|id| firsts.contains(id)).collect();
            assert_eq!(firsts, order, "first deliveries out of publish order");
            // At least once.
            for id in &want {
                assert!(self.delivered[s].iter().any(|(d, _)| d == id), "{id} never delivered");
            }
            let mut got = self.acked[s].clone();
            want.sort();
            got.sort();
            assert_eq!(got, want, "acked multiset differs from published on s{s}");
        }
    }
}

/// Explores every schedule of enabled operations up to `depth` and checks
/// each endpoint. Returns the number of schedules.
pub fn explore(depth: usize) -> u64 {
    fn go(node: Node, depth: usize, count: &mut u64) {
        let ops = node.enabled();
        if depth == 0 {
            *count += 1;
            node.drain_and_check();
            return;
        }
        for op in ops {
            let mut child = node.fork();
            child.apply(op);
            go(child, depth - 1, count);
        }
    }
    let mut count = 0;
    go(Node::root(), depth, &mut count);
    count
}

/// Multiset of ids per subscription.
pub type Ledger = BTreeMap<String, BTreeMap<String, u32>>;

/// `publishers` threads publish `per_publisher` messages each while two
/// consumers per subscription take messages and drop some without acking,
/// and a sweeper advances the clock. Returns (expected, acked).
pub fn stress(publishers: usize, per_publisher: usize, drop_p: f64) -> (Ledger, Ledger) {
    let broker = Arc::new(Broker::new("stress"));
    let patterns = ["t.even.*", "*"];
    let subs: Vec<SubscriptionHandle> =
        patterns.iter().enumerate().map(|(i, p)| broker.subscribe(&format!("c{i}"), p).unwrap()).collect();
    let clock = Arc::new(AtomicI64::new(0));
    let published_done = Arc::new(AtomicBool::new(false));
    let stop = Arc::new(AtomicBool::new(false));
    let published = Arc::new(Mutex::new(Vec::new()));

    let mut handles = Vec::new();
    for p in 0..publishers {
        let (broker, clock, published) = (broker.clone(), clock.clone(), published.clone());
        handles.push(thread::spawn(move || {
            let mut mine = Vec::with_capacity(per_publisher);
            for i in 0..per_publisher {
                let topic = if i % 2 == 0 { format!("t.even.p{p}") } else { format!("t.odd.p{p}") };
                let id = broker.publish(&topic, Vec::new(), Timestamp(clock.load(Ordering::SeqCst))).unwrap();
                mine.push((id.to_string(), topic));
            }
            published.lock().unwrap().extend(mine);
        }));
    }

    let mut consumers = Vec::new();
    for (s, sub) in subs.iter().enumerate() {
        for c in 0..2u64 {
            let (broker, clock, stop, sub) = (broker.clone(), clock.clone(), stop.clone(), sub.clone());
            consumers.push(thread::spawn(move || {
                let mut rng = crate::support::rng(1000 + s as u64 * 10 + c);
                let mut acked: BTreeMap<String, u32> = BTreeMap::new();
                while !stop.load(Ordering::SeqCst) {
                    let now = Timestamp(clock.load(Ordering::SeqCst));
                    match broker.consume(&sub, now, 3).unwrap() {
                        Some(m) if rng.gen_bool(drop_p) => drop(m),
                        Some(m) => match broker.ack(&sub, &m.id) {
                            Ok(()) => *acked.entry(m.id.to_string()).or_default() += 1,
                            Err(BusError::UnknownDelivery(_)) => {}
                            Err(e) => panic!("{e}"),
                        },
                        None => thread::yield_now(),
                    }
                }
                acked
            }));
        }
    }

    let sweeper = {
        let (broker, clock, stop, done) = (broker.clone(), clock.clone(), stop.clone(), published_done.clone());
        thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                let now = clock.fetch_add(1, Ordering::SeqCst) + 1;
                broker.sweep_redelivery(Timestamp(now)).unwrap();
                if done.load(Ordering::SeqCst) && broker.snapshot().outstanding() == 0 {
                    stop.store(true, Ordering::SeqCst);
                }
                thread::sleep(std::time::Duration::from_micros(200));
            }
        })
    };

    for h in handles {
        h.join().unwrap();
    }
    published_done.store(true, Ordering::SeqCst);
    sweeper.join().unwrap();

    let mut acked: Ledger = BTreeMap::new();
    for (i, c) in consumers.into_iter().enumerate() {
        let sub = format!("c{}", i / 2);
        let into = acked.entry(sub).or_default();
        for (id, n) in c.join().unwrap() {
            *into.entry(id).or_default() += n;
        }
    }
    let mut expected: Ledger = BTreeMap::new();
    for (id, topic) in published.lock().unwrap().iter() {
        for (i, p) in patterns.iter().enumerate() {
            let matches = match p.strip_suffix('*') {
                Some(prefix) => topic.starts_with(prefix),
                None => topic == p,
            };
            if matches {
                *expected.entry(format!("c{i}")).or_default().entry(id.clone()).or_default() += 1;
            }
        }
    }
    (expected, acked)
}
