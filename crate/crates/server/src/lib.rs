//! HTTP/JSON service layer over a running [`Plant`]: service registry,
//! work orders, manual tasks, reports and warehouse queries.

mod api;
pub mod config;
pub mod error;
pub mod idempotency;
pub mod registry;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::Request;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::Router;
use parking_lot::Mutex;
use tower_http::services::ServeDir;

use orbitflow_core::plant::Plant;
use orbitflow_core::warehouse::{Warehouse, WarehouseError};
use orbitflow_core::Timestamp;

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorBody};
pub use idempotency::IdempotencyCache;
pub use registry::{DuplicateRegistration, ServiceDescriptor, ServiceRegistry};

pub const PORT_ENV: &str = "ORBITFLOW_PORT";
pub const CONFIG_ENV: &str = "ORBITFLOW_CONFIG";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

/// Where request handlers read the current time.
#[derive(Debug, Clone)]
pub enum ClockSource {
    Wall,
    /// Seconds set by someone else, e.g. a running simulation.
    Shared(Arc<AtomicI64>),
}

impl ClockSource {
    pub fn shared(start: Timestamp) -> (ClockSource, Arc<AtomicI64>) {
        let cell = Arc::new(AtomicI64::new(start.secs()));
        (ClockSource::Shared(cell.clone()), cell)
    }

    pub fn now(&self) -> Timestamp {
        match self {
            ClockSource::Wall => Timestamp(chrono::Utc::now().timestamp()),
            ClockSource::Shared(t) => Timestamp(t.load(Ordering::SeqCst)),
        }
    }
}

#[derive(Debug)]
pub struct AppState {
    pub plant: Arc<Plant>,
    pub registry: ServiceRegistry,
    pub warehouse: Mutex<Warehouse>,
    /// Where the warehouse is saved after each load, if anywhere.
    pub warehouse_dir: Option<PathBuf>,
    pub clock: ClockSource,
    pub wrinkle: i64,
}

impl AppState {
    pub fn new(plant: Arc<Plant>, clock: ClockSource, wrinkle: i64) -> AppState {
        AppState {
            plant,
            registry: ServiceRegistry::builtin(),
            warehouse: Mutex::new(Warehouse::new()),
            warehouse_dir: None,
            clock,
            wrinkle,
        }
    }

    /// Persists the warehouse under `dir`, reloading what is already there.
    pub fn with_warehouse_dir(mut self, dir: &Path) -> Result<AppState, WarehouseError> {
        if dir.join("schema.tsv").exists() {
            self.warehouse = Mutex::new(Warehouse::load(dir)?);
        }
        self.warehouse_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }
}

/// The full application: API routes, idempotent POSTs, the request log and,
/// if given, the console bundle under `/console`.
pub fn app(state: Arc<AppState>, console_dir: Option<&Path>) -> Router {
    let mut router = api::routes(state)
        .layer(middleware::from_fn_with_state(Arc::new(IdempotencyCache::default()), idempotency::layer));
    if let Some(dir) = console_dir {
        router = router.nest_service("/console", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    router.layer(middleware::from_fn(log_request))
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let started = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        target: "orbitflow::request",
        method = %method,
        path = %path,
        status = resp.status().as_u16(),
        millis = started.elapsed().as_millis() as u64,
    );
    resp
}
