use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bus::{Broker, Message, SubscriptionHandle};
use crate::plant::Plant;
use crate::time::{Timestamp, DAY, HOUR};
use crate::workorder::{Outcome, ProductSpec, StepStatus, WorkCenterId, WorkOrder, WorkOrderId};
use crate::xml;

use super::generate::{generate_orders, stream, OrderArrival, STREAM_ADIF, STREAM_QC, STREAM_SERVICE};
use super::report::{CenterStats, QueueSample, SimReport};
use super::{SimConfig, SimError};

/// Parameter set on orders whose assignment payload could not be ingested.
pub const INGEST_FLAG_KEY: &str = "ingest_status";
pub const INGEST_FLAG_VALUE: &str = "FAILED_INGEST";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttitudeQuality {
    Nominal,
    Degraded,
}

/// Ancillary data for one satellite pass. DP cannot start an order before
/// the record for its acquisition is available.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdifRecord {
    pub satellite: String,
    pub acquisition_date: NaiveDate,
    pub orbit: u32,
    pub attitude_quality: AttitudeQuality,
}

type AdifKey = (String, NaiveDate);

#[derive(Debug)]
enum Ev {
    Arrival(usize),
    Poll(WorkCenterId),
    Finish { center: WorkCenterId, order: WorkOrderId, msg: Arc<str> },
    AdifReady(AdifKey),
    Sample,
}

#[derive(Debug)]
struct Agent {
    sub: SubscriptionHandle,
    servers: u32,
    busy: u32,
    lease: i64,
    poll_pending: bool,
    /// Service jobs finished.
    processed: u64,
    /// Assignment messages acknowledged, whatever became of them.
    handled: u64,
}

/// One simulation run in progress.
pub struct Simulation {
    cfg: SimConfig,
    plant: Arc<Plant>,
    clock: super::Clock<Ev>,
    arrivals: Vec<OrderArrival>,
    arrivals_left: usize,
    agents: BTreeMap<WorkCenterId, Agent>,
    audit: SubscriptionHandle,
    topic_counts: BTreeMap<String, u64>,
    adif: BTreeMap<AdifKey, (AdifRecord, bool)>,
    adif_waits: BTreeSet<WorkOrderId>,
    service_rng: ChaCha8Rng,
    qc_rng: ChaCha8Rng,
    adif_rng: ChaCha8Rng,
    trace: Vec<QueueSample>,
    created: usize,
    closed: usize,
    dead: BTreeSet<WorkOrderId>,
    failed_ingest: usize,
    stale: usize,
    start: Timestamp,
    horizon: Timestamp,
}

const AUDIT_SUBSCRIBER: &str = "audit";

fn agent_name(c: WorkCenterId) -> String {
    format!("{}-agent", c.topic_segment())
}

impl Simulation {
    /// A run against a fresh in-memory plant.
    pub fn new(cfg: SimConfig) -> Result<Simulation, SimError> {
        cfg.validate()?;
        let plant = Plant::in_memory(cfg.rules.clone(), cfg.effective_manual_centers());
        Simulation::with_plant(cfg, Arc::new(plant))
    }

    /// A run against an existing plant, e.g. one shared with the HTTP
    /// service. Manual centers are taken from the plant.
    pub fn with_plant(cfg: SimConfig, plant: Arc<Plant>) -> Result<Simulation, SimError> {
        cfg.validate()?;
        let start = Timestamp::start_of(cfg.start_date);
        let horizon = start + (cfg.duration_days as i64 + cfg.drain_days as i64) * DAY;
        let broker = plant.broker().clone();
        let audit = broker.subscribe(AUDIT_SUBSCRIBER, "*").map_err(|e| SimError::Plant(e.into()))?;
        let centers: BTreeSet<WorkCenterId> =
            cfg.rules.rules.iter().flat_map(|r| r.centers.iter().copied()).collect();
        let mut agents = BTreeMap::new();
        for c in centers.into_iter().filter(|c| !plant.manual_centers().contains(c)) {
            let sub = broker
                .subscribe(&agent_name(c), &format!("workorder.assigned.{}", c.topic_segment()))
                .map_err(|e| SimError::Plant(e.into()))?;
            let lease = cfg.service_times[&c].1 + HOUR;
            agents.insert(
                c,
                Agent { sub, servers: cfg.servers_at(c), busy: 0, lease, poll_pending: false, processed: 0, handled: 0 },
            );
        }
        let arrivals = generate_orders(&cfg);
        let mut clock = super::Clock::new(start);
        for (i, a) in arrivals.iter().enumerate() {
            clock.schedule(a.at, Ev::Arrival(i));
        }
        clock.schedule(start + cfg.sample_interval, Ev::Sample);
        Ok(Simulation {
            arrivals_left: arrivals.len(),
            arrivals,
            agents,
            audit,
            topic_counts: BTreeMap::new(),
            adif: BTreeMap::new(),
            adif_waits: BTreeSet::new(),
            service_rng: stream(cfg.seed, STREAM_SERVICE),
            qc_rng: stream(cfg.seed, STREAM_QC),
            adif_rng: stream(cfg.seed, STREAM_ADIF),
            trace: Vec::new(),
            created: 0,
            closed: 0,
            dead: BTreeSet::new(),
            failed_ingest: 0,
            stale: 0,
            start,
            horizon,
            clock,
            plant,
            cfg,
        })
    }

    pub fn plant(&self) -> &Arc<Plant> {
        &self.plant
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn horizon(&self) -> Timestamp {
        self.horizon
    }

    /// Every arrival has happened and no order is left to work on.
    pub fn is_finished(&self) -> bool {
        self.arrivals_left == 0 && self.created == self.closed + self.dead.len()
    }

    /// Runs until [`Simulation::is_finished`] or the drain horizon.
    pub fn run(&mut self) -> Result<(), SimError> {
        while !self.is_finished() {
            match self.clock.peek_time() {
                Some(at) if at <= self.horizon => {
                    let (_, ev) = self.clock.pop().expect("peeked");
                    self.handle(ev)?;
                }
                _ => break,
            }
        }
        self.drain_audit()
    }

    /// Processes every event due by `t` and moves the clock there. Orders
    /// changed outside the simulation (by operators) are picked up.
    pub fn advance_until(&mut self, t: Timestamp) -> Result<(), SimError> {
        self.recount();
        let centers: Vec<WorkCenterId> = self.agents.keys().copied().collect();
        for c in centers {
            self.wake(c);
        }
        while self.clock.peek_time().is_some_and(|at| at <= t) {
            let (_, ev) = self.clock.pop().expect("peeked");
            self.handle(ev)?;
        }
        self.clock.advance_to(t);
        Ok(())
    }

    fn recount(&mut self) {
        let open: BTreeSet<WorkOrderId> = self.plant.store().list_open(None).into_iter().collect();
        self.created = self.plant.store().len();
        self.dead.retain(|id| open.contains(id));
        self.closed = self.created - open.len();
    }

    fn broker(&self) -> Arc<Broker> {
        self.plant.broker().clone()
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Arrival(i) => self.arrive(i),
            Ev::Poll(c) => self.poll(c),
            Ev::Finish { center, order, msg } => self.finish(center, &order, &msg),
            Ev::AdifReady(key) => {
                if let Some(entry) = self.adif.get_mut(&key) {
                    entry.1 = true;
                }
                self.wake(WorkCenterId::Dp);
                Ok(())
            }
            Ev::Sample => {
                self.sample()?;
                let next = self.clock.now() + self.cfg.sample_interval;
                if !self.is_finished() && next <= self.horizon {
                    self.clock.schedule(next, Ev::Sample);
                }
                Ok(())
            }
        }
    }

    fn wake(&mut self, c: WorkCenterId) {
        if let Some(a) = self.agents.get_mut(&c) {
            if !a.poll_pending {
                a.poll_pending = true;
                let now = self.clock.now();
                self.clock.schedule(now, Ev::Poll(c));
            }
        }
    }

    fn arrive(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.clock.now();
        let spec = self.arrivals[i].spec.clone();
        self.arrivals_left -= 1;
        self.register_adif(&spec);
        let wo = self.plant.create_order(spec, now)?;
        self.created += 1;
        if let Some(c) = wo.current_center() {
            self.wake(c);
        }
        Ok(())
    }

    /// Makes sure an ADIF record exists or is on its way for `spec`'s pass.
    fn register_adif(&mut self, spec: &ProductSpec) {
        let key = (spec.satellite.clone(), spec.acquisition_date);
        if self.adif.contains_key(&key) {
            return;
        }
        let rng = &mut self.adif_rng;
        let record = AdifRecord {
            satellite: spec.satellite.clone(),
            acquisition_date: spec.acquisition_date,
            orbit: rng.gen_range(1..=99_999),
            attitude_quality: if rng.gen_bool(0.05) { AttitudeQuality::Degraded } else { AttitudeQuality::Nominal },
        };
        let late = rng.gen_bool(self.cfg.adif_late_probability);
        let delay = rng.gen_range(self.cfg.adif_delay.0..=self.cfg.adif_delay.1);
        if late {
            let at = self.clock.now() + delay;
            self.clock.schedule(at, Ev::AdifReady(key.clone()));
        }
        self.adif.insert(key, (record, !late));
    }

    fn adif_ready(&mut self, spec: &ProductSpec) -> bool {
        self.register_adif(spec);
        self.adif[&(spec.satellite.clone(), spec.acquisition_date)].1
    }

    /// Parses and validates an assignment payload.
    fn ingest(msg: &Message) -> Result<WorkOrder, String> {
        let text = std::str::from_utf8(&msg.payload).map_err(|e| e.to_string())?;
        let doc = xml::parse(text).map_err(|e| e.to_string())?;
        xml::from_xml(&doc).map_err(|e| e.to_string())
    }

    /// Flags the order a bad payload names, if it can be identified.
    fn dead_letter(&mut self, msg: &Message) -> Result<(), SimError> {
        self.failed_ingest += 1;
        let text = String::from_utf8_lossy(&msg.payload);
        let id = text
            .split_once("id=\"")
            .and_then(|(_, rest)| rest.split_once('"'))
            .map(|(id, _)| WorkOrderId::from(id));
        if let Some(id) = id {
            if self.plant.store().load(&id).is_ok_and(|wo| wo.is_open()) {
                self.plant.set_parameter(&id, INGEST_FLAG_KEY, INGEST_FLAG_VALUE, self.clock.now())?;
                self.dead.insert(id);
            }
        }
        Ok(())
    }

    fn poll(&mut self, c: WorkCenterId) -> Result<(), SimError> {
        let now = self.clock.now();
        let broker = self.broker();
        let Some(agent) = self.agents.get_mut(&c) else { return Ok(()) };
        agent.poll_pending = false;
        let sub = agent.sub.clone();
        let lease = agent.lease;
        let bus = |e| SimError::Plant(crate::plant::PlantError::Bus(e));
        let mut deferred = Vec::new();
        while self.agents[&c].busy < self.agents[&c].servers {
            let Some(msg) = broker.consume(&sub, now, lease).map_err(bus)? else { break };
            let wo = match Self::ingest(&msg) {
                Ok(wo) => wo,
                Err(_) => {
                    broker.ack(&sub, &msg.id).map_err(bus)?;
                    self.agents.get_mut(&c).expect("agent").handled += 1;
                    self.dead_letter(&msg)?;
                    continue;
                }
            };
            let current = self.plant.store().load(&wo.id).ok();
            let ready = current.as_ref().is_some_and(|cur| {
                cur.is_open()
                    && cur.current_center() == Some(c)
                    && cur.plan.current().is_some_and(|s| s.status == StepStatus::Pending)
                    && !self.dead.contains(&cur.id)
            });
            if !ready {
                broker.ack(&sub, &msg.id).map_err(bus)?;
                self.agents.get_mut(&c).expect("agent").handled += 1;
                self.stale += 1;
                continue;
            }
            if c == WorkCenterId::Dp && !self.adif_ready(&wo.spec) {
                self.adif_waits.insert(wo.id.clone());
                deferred.push(msg.id);
                continue;
            }
            self.plant.apply(&wo.id, Outcome::Start, now)?;
            let (lo, hi) = self.cfg.service_times[&c];
            let service = self.service_rng.gen_range(lo..=hi);
            self.agents.get_mut(&c).expect("agent").busy += 1;
            self.clock.schedule(now + service, Ev::Finish { center: c, order: wo.id, msg: msg.id });
        }
        for id in deferred.iter().rev() {
            broker.nack(&sub, id).map_err(bus)?;
        }
        Ok(())
    }

    fn qc_outcome(&mut self, wo: &WorkOrder) -> Outcome {
        if !self.qc_rng.gen_bool(self.cfg.qc_reject_probability) {
            return Outcome::Complete;
        }
        if wo.rework_cycles() >= self.cfg.max_rework as usize {
            return Outcome::Cancel;
        }
        let here = wo.plan.current_index;
        let target = match wo.plan.position_of(self.cfg.reject_target) {
            Some(p) if p < here => self.cfg.reject_target,
            _ => wo.plan.steps[here.saturating_sub(1)].center,
        };
        Outcome::Reject { target }
    }

    fn finish(&mut self, c: WorkCenterId, order: &WorkOrderId, msg: &str) -> Result<(), SimError> {
        let now = self.clock.now();
        let wo = self.plant.store().load(order).map_err(|e| SimError::Plant(e.into()))?;
        let outcome = if c == WorkCenterId::Qc { self.qc_outcome(&wo) } else { Outcome::Complete };
        let wo = self.plant.apply(order, outcome, now)?;
        let agent = self.agents.get_mut(&c).expect("agent");
        self.plant.broker().ack(&agent.sub, msg).map_err(|e| SimError::Plant(e.into()))?;
        agent.busy -= 1;
        agent.processed += 1;
        agent.handled += 1;
        self.wake(c);
        if wo.is_open() {
            if let Some(next) = wo.current_center() {
                self.wake(next);
            }
        } else {
            self.closed += 1;
            self.dead.remove(order);
        }
        Ok(())
    }

    fn drain_audit(&mut self) -> Result<(), SimError> {
        let broker = self.broker();
        let now = self.clock.now();
        while let Some(m) = broker.consume(&self.audit, now, 0).map_err(|e| SimError::Plant(e.into()))? {
            broker.ack(&self.audit, &m.id).map_err(|e| SimError::Plant(e.into()))?;
            *self.topic_counts.entry(m.topic.as_str().to_string()).or_default() += 1;
        }
        Ok(())
    }

    fn sample(&mut self) -> Result<(), SimError> {
        self.drain_audit()?;
        let now = self.clock.now();
        let subs = self.plant.broker().subscriptions();
        for (c, agent) in &self.agents {
            let waiting = subs
                .iter()
                .find(|s| s.subscriber == agent.sub.subscriber)
                .map(|s| s.queued)
                .unwrap_or(0);
            self.trace.push(QueueSample { at: now, center: *c, waiting, in_service: agent.busy as usize });
        }
        Ok(())
    }

    /// Builds the report from the plant's final state.
    pub fn report(&self) -> SimReport {
        let orders = self.plant.store().all_orders();
        let centers = self
            .agents
            .iter()
            .map(|(c, a)| CenterStats {
                center: *c,
                processed: a.processed,
                handled: a.handled,
                assigned_messages: self.topic_counts.get(&format!("workorder.assigned.{}", c.topic_segment())).copied().unwrap_or(0),
                completed_messages: self.topic_counts.get(&format!("workorder.completed.{}", c.topic_segment())).copied().unwrap_or(0),
            })
            .collect();
        SimReport::build(
            &self.cfg,
            self.start,
            self.clock.now(),
            &orders,
            centers,
            self.trace.clone(),
            self.topic_counts.clone(),
            self.plant.broker().metrics(),
            [
                ("failed_ingest", self.failed_ingest),
                ("stale_messages", self.stale),
                ("adif_records", self.adif.len()),
                ("adif_waits", self.adif_waits.len()),
            ],
        )
    }

    pub fn adif_records(&self) -> Vec<AdifRecord> {
        self.adif.values().map(|(r, _)| r.clone()).collect()
    }
}
