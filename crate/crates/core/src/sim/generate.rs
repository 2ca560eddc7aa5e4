use chrono::Days;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::time::{Timestamp, DAY};
use crate::workorder::ProductSpec;

use super::SimConfig;

pub(super) const STREAM_ORDERS: u64 = 0;
pub(super) const STREAM_SERVICE: u64 = 1;
pub(super) const STREAM_QC: u64 = 2;
pub(super) const STREAM_ADIF: u64 = 3;

/// Deterministic generator for one purpose within a run.
pub(super) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderArrival {
    pub at: Timestamp,
    pub spec: ProductSpec,
}

/// Oldest acquisition relative to the order date, in days.
const MAX_ACQUISITION_AGE: u64 = 30;

fn weighted<T: Copy>(rng: &mut ChaCha8Rng, mix: &[(T, u32)]) -> T {
    let dist = WeightedIndex::new(mix.iter().map(|m| m.1)).expect("mix validated");
    mix[dist.sample(rng)].0
}

/// The run's order stream: `order_rate` arrivals per day, uniform within
/// each day, with products drawn from the routing catalog and the
/// configured mix.
pub fn generate_orders(cfg: &SimConfig) -> Vec<OrderArrival> {
    let mut rng = stream(cfg.seed, STREAM_ORDERS);
    let catalog: Vec<(&String, Vec<&String>)> =
        cfg.rules.catalog.iter().map(|(sat, sensors)| (sat, sensors.iter().collect())).collect();
    let start = Timestamp::start_of(cfg.start_date);
    let mut out = Vec::with_capacity(cfg.order_rate as usize * cfg.duration_days as usize);
    for day in 0..cfg.duration_days as i64 {
        let mut offsets: Vec<i64> = (0..cfg.order_rate).map(|_| rng.gen_range(0..DAY)).collect();
        offsets.sort_unstable();
        let date = cfg.start_date + Days::new(day as u64);
        for off in offsets {
            let (sat, sensors) = &catalog[rng.gen_range(0..catalog.len())];
            let sensor = sensors[rng.gen_range(0..sensors.len())];
            let age = rng.gen_range(0..=MAX_ACQUISITION_AGE);
            let spec = ProductSpec {
                satellite: sat.to_string(),
                sensor: sensor.clone(),
                product_type: weighted(&mut rng, &cfg.product_mix),
                correction_level: weighted(&mut rng, &cfg.correction_mix),
                media: weighted(&mut rng, &cfg.media_mix),
                path: rng.gen_range(1..=130),
                row: rng.gen_range(1..=120),
                acquisition_date: date - Days::new(age),
            };
            out.push(OrderArrival { at: start + day * DAY + off, spec });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_and_days() {
        let cfg = SimConfig { order_rate: 100, duration_days: 2, ..SimConfig::default() };
        let orders = generate_orders(&cfg);
        assert_eq!(orders.len(), 200);
        let start = Timestamp::start_of(cfg.start_date);
        assert!(orders[..100].iter().all(|o| o.at >= start && o.at < start + DAY));
        assert!(orders[100..].iter().all(|o| o.at >= start + DAY && o.at < start + 2 * DAY));
        assert!(orders.windows(2).all(|w| w[0].at <= w[1].at));
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = SimConfig::default();
        assert_eq!(generate_orders(&cfg), generate_orders(&cfg));
        let other = SimConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_ne!(generate_orders(&cfg), generate_orders(&other));
    }
}
