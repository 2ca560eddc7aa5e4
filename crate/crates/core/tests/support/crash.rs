//! Tail-truncation sweeps for the two journals. Each run records the
//! expected state at every record boundary, then reopens copies of the
//! journal cut at many byte offsets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use orbitflow_core::bus::{Broker, SyncPolicy, Topic, TopicPattern};
use orbitflow_core::store::{OperationalStore, StoreOptions, JOURNAL_FILE};
use orbitflow_core::workorder::{advance, create_work_order, IdSequence, Outcome, RoutingRuleSet, StepStatus, WorkCenterId, WorkOrder};
use orbitflow_core::Timestamp;

/// Offsets to try: every `step` bytes plus both sides of each boundary.
fn cuts(len: usize, boundaries: &[usize], step: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=len).step_by(step.max(1)).collect();
    for &b in boundaries {
        out.extend([b.saturating_sub(1), b, (b + 1).min(len)]);
    }
    out.push(len);
    out.sort();
    out.dedup();
    out
}

fn floor(boundaries: &[usize], cut: usize) -> usize {
    boundaries.iter().rposition(|&b| b <= cut).expect("boundary 0 is present")
}

/// Returns the number of truncated journals checked.
pub fn store_sweep(seed: u64, orders: usize, step: usize) -> usize {
    let work = tempfile::tempdir().unwrap();
    let dir = work.path().join("orders");
    let (store, _) = OperationalStore::open(&dir, StoreOptions { sync: false }).unwrap();
    let journal = dir.join(JOURNAL_FILE);
    let rules = RoutingRuleSet::default_rules();
    let ids = IdSequence::default();
    let mut rng = crate::support::rng(seed);

    let mut boundaries = vec![0usize];
    let mut states: Vec<BTreeMap<String, WorkOrder>> = vec![BTreeMap::new()];
    let mut live: BTreeMap<String, WorkOrder> = BTreeMap::new();
    let mut t = Timestamp(1_200_000_000);
    let mut record = |live: &BTreeMap<String, WorkOrder>| {
        boundaries.push(fs::metadata(&journal).unwrap().len() as usize);
        states.push(live.clone());
    };
    for _ in 0..orders {
        let wo = create_work_order(crate::support::random_spec(&mut rng, &rules), &rules, t, &ids).unwrap();
        store.insert(&wo, t).unwrap();
        live.insert(wo.id.to_string(), wo);
        record(&live);
    }
    for _ in 0..orders * 6 {
        let open: Vec<String> = live.values().filter(|o| o.is_open()).map(|o| o.id.to_string()).collect();
        let Some(id) = open.get(rng.gen_range(0..open.len().max(1))) else { break };
        t = t + rng.gen_range(0..600);
        let wo = &live[id];
        let step = wo.plan.current().unwrap();
        let outcome = match step.status {
            StepStatus::Pending => Outcome::Start,
            _ if step.center == WorkCenterId::Qc && rng.gen_bool(0.3) => Outcome::Reject { target: WorkCenterId::Dp },
            _ => Outcome::Complete,
        };
        let next = advance(wo, outcome, t).unwrap().0;
        store.save(&next, t).unwrap();
        live.insert(id.clone(), next);
        record(&live);
    }
    drop(store);
    let bytes = fs::read(&journal).unwrap();
    assert_eq!(*boundaries.last().unwrap(), bytes.len());

    let mut checked = 0;
    for cut in cuts(bytes.len(), &boundaries, step) {
        let copy = work.path().join(format!("cut-{cut}"));
        fs::create_dir_all(&copy).unwrap();
        fs::write(copy.join(JOURNAL_FILE), &bytes[..cut]).unwrap();
        let (recovered, rec) = OperationalStore::open(&copy, StoreOptions { sync: false }).unwrap();
        let k = floor(&boundaries, cut);
        assert_eq!(rec.records, k, "cut {cut}");
        assert_eq!(rec.truncated_bytes as usize, cut - boundaries[k], "cut {cut}");
        let got: BTreeMap<String, WorkOrder> = recovered.all_orders().into_iter().map(|o| (o.id.to_string(), o)).collect();
        assert!(got == states[k], "cut {cut}: recovered state differs from record prefix {k}");
        // Recovery trimmed the tail, so appends continue cleanly.
        assert_eq!(fs::metadata(copy.join(JOURNAL_FILE)).unwrap().len() as usize, boundaries[k]);
        fs::remove_dir_all(&copy).unwrap();
        checked += 1;
    }
    checked
}

type Owed = BTreeMap<String, Vec<String>>;

fn owed_by_broker(b: &Broker) -> Owed {
    let mut out = Owed::new();
    for info in b.subscriptions() {
        let h = b.attach(&info.subscriber, &info.pattern).unwrap();
        let mut ids: Vec<String> = b.queued(&h).unwrap().iter().map(|m| m.id.to_string()).collect();
        ids.sort();
        out.insert(info.subscriber, ids);
    }
    out
}

pub fn bus_sweep(seed: u64, ops: usize, step: usize) -> usize {
    let work = tempfile::tempdir().unwrap();
    let journal = work.path().join("bus.journal");
    let (broker, _) = Broker::open("k", &journal, SyncPolicy::Never).unwrap();
    let mut rng = crate::support::rng(seed);
    let subs = [("all", "*"), ("qc", "wo.qc.*")];
    let topics = ["wo.qc.done", "wo.dp.done", "site.up"];

    let mut boundaries = vec![0usize];
    let mut states: Vec<Owed> = vec![Owed::new()];
    let mut owed: Owed = Owed::new();
    let len = |p: &Path| fs::metadata(p).unwrap().len() as usize;
    let mut handles = Vec::new();
    for (name, pattern) in subs {
        handles.push(broker.subscribe(name, pattern).unwrap());
        owed.insert(name.to_string(), Vec::new());
        boundaries.push(len(&journal));
        states.push(owed.clone());
    }
    let mut t = Timestamp(0);
    for _ in 0..ops {
        t = t + 1;
        if rng.gen_bool(0.5) {
            let topic = topics[rng.gen_range(0..topics.len())];
            let payload: Vec<u8> = (0..rng.gen_range(0..40)).map(|_| rng.gen()).collect();
            let id = broker.publish(topic, payload, t).unwrap().to_string();
            for (name, pattern) in subs {
                if TopicPattern::new(pattern).unwrap().matches(&Topic::new(topic).unwrap()) {
                    owed.get_mut(name).unwrap().push(id.clone());
                }
            }
        } else {
            let s = rng.gen_range(0..subs.len());
            let Some(m) = broker.consume(&handles[s], t, 1_000).unwrap() else { continue };
            if rng.gen_bool(0.2) {
                // Left in flight: still owed after a crash.
                continue;
            }
            broker.ack(&handles[s], &m.id).unwrap();
            owed.get_mut(subs[s].0).unwrap().retain(|id| **id != *m.id);
        }
        boundaries.push(len(&journal));
        let mut sorted = owed.clone();
        sorted.values_mut().for_each(|v| v.sort());
        states.push(sorted);
    }
    drop(broker);
    let bytes = fs::read(&journal).unwrap();

    let mut checked = 0;
    for cut in cuts(bytes.len(), &boundaries, step) {
        let copy = work.path().join(format!("cut-{cut}.journal"));
        fs::write(&copy, &bytes[..cut]).unwrap();
        let (recovered, dropped) = Broker::open("k", &copy, SyncPolicy::Never).unwrap();
        let k = floor(&boundaries, cut);
        assert_eq!(dropped as usize, cut - boundaries[k], "cut {cut}");
        assert_eq!(owed_by_broker(&recovered), states[k], "cut {cut}");
        drop(recovered);
        fs::remove_file(&copy).unwrap();
        checked += 1;
    }
    checked
}
