//! Work-order orchestration for satellite data-product generation.
//!
//! The crate is organised around the production chain:
//!
//! * [`workorder`] defines products, work centers, routing rules and the
//!   work-order state machine.
//! * [`bus`] is the publish/subscribe kernel (durable queues, lease/ack
//!   delivery, journal, cross-site router).
//! * [`xml`] parses, validates, serializes and styles XML documents,
//!   including the canonical work-order format.
//! * [`store`] is the append-only operational journal of work-order events.
//! * [`warehouse`] holds the star/snowflake analytical model, ETL, aggregate
//!   cubes and management reports.
//! * [`sim`] is a deterministic discrete-event simulator of the whole chain.
//! * [`plant`] and [`tasks`] tie the pieces together for live operation.

pub mod bus;
pub mod conf;
pub mod par;
pub mod plant;
pub mod sim;
pub mod store;
pub mod tasks;
pub mod time;
pub mod warehouse;
pub mod workorder;
pub mod xml;

pub use time::Timestamp;
