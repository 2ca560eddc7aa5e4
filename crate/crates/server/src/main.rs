use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use tokio::net::TcpListener;
use tracing_subscriber::EnvFilter;

use orbitflow_core::bus::{Broker, SyncPolicy};
use orbitflow_core::plant::{Plant, BUS_JOURNAL_FILE, ORDERS_DIR};
use orbitflow_core::sim::{run_simulation, SimConfig, SimReport, Simulation};
use orbitflow_core::store::{OperationalStore, StoreOptions};
use orbitflow_core::tasks::TaskQueue;
use orbitflow_core::Timestamp;
use orbitflow_server::{app, AppState, ClockSource, ServiceConfig, CONFIG_ENV, DEFAULT_PORT, PORT_ENV};

#[derive(Parser)]
#[command(name = "orbitflow", version, about = "Satellite data-product work-order orchestration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the production-chain simulator and write its report.
    Simulate {
        /// Simulator config; the shipped defaults apply without one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        report_out: PathBuf,
        /// Leave QC to operators via the HTTP task queue.
        #[arg(long)]
        manual_qc: bool,
        /// Simulated seconds per wall-clock second with --manual-qc.
        #[arg(long, default_value_t = 60.0)]
        speed: f64,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        console_dir: Option<PathBuf>,
    },
    /// Serve the HTTP API over a durable plant.
    Serve {
        #[arg(long, env = CONFIG_ENV)]
        config: Option<PathBuf>,
        /// Orders, bus journal and warehouse live here; in memory without it.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        console_dir: Option<PathBuf>,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
    },
}

type AnyError = Box<dyn std::error::Error + Send + Sync>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let result = match Cli::parse().command {
        Command::Simulate { config, seed, days, report_out, manual_qc, speed, port, console_dir } => {
            simulate(config.as_deref(), seed, days, &report_out, manual_qc.then_some((speed, port, console_dir)))
        }
        Command::Serve { config, data_dir, console_dir, port } => serve(config.as_deref(), data_dir, console_dir, port),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    days: Option<u32>,
    out: &Path,
    manual: Option<(f64, u16, Option<PathBuf>)>,
) -> Result<(), AnyError> {
    let mut cfg = match config {
        Some(p) => SimConfig::parse(&std::fs::read_to_string(p)?)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = days {
        cfg.duration_days = d;
    }
    let report = match manual {
        None => run_simulation(&cfg)?,
        Some((speed, port, console)) => {
            cfg.auto_qc = false;
            simulate_live(cfg, speed, port, console)?
        }
    };
    report.write(out)?;
    print!("{}", report.summary());
    Ok(())
}

/// Runs the simulation paced against the wall clock while the HTTP API
/// serves the same plant, so operators can work the manual tasks.
fn simulate_live(cfg: SimConfig, speed: f64, port: u16, console: Option<PathBuf>) -> Result<SimReport, AnyError> {
    if speed.is_nan() || speed <= 0.0 {
        return Err("speed must be positive".into());
    }
    let plant = Arc::new(Plant::in_memory(cfg.rules.clone(), cfg.effective_manual_centers()));
    let start = Timestamp::start_of(cfg.start_date);
    let (clock, cell) = ClockSource::shared(start);
    // Orders are final as soon as they complete; there is no late data here.
    let state = Arc::new(AppState::new(plant.clone(), clock, 0));
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(TcpListener::bind(("0.0.0.0", port)))?;
    tracing::info!("serving on {}", listener.local_addr()?);
    let router = app(state, console.as_deref());
    rt.spawn(async move { axum::serve(listener, router).await });

    let tick = Duration::from_millis(200);
    let step = ((speed * tick.as_secs_f64()).round() as i64).max(1);
    let mut sim = Simulation::with_plant(cfg, plant)?;
    let mut t = sim.now();
    while !sim.is_finished() && t < sim.horizon() {
        std::thread::sleep(tick);
        t = (t + step).min(sim.horizon());
        sim.advance_until(t)?;
        cell.store(sim.now().secs(), Ordering::SeqCst);
    }
    sim.run()?;
    rt.shutdown_timeout(Duration::from_secs(1));
    Ok(sim.report())
}

fn serve(config: Option<&Path>, data_dir: Option<PathBuf>, console: Option<PathBuf>, port: u16) -> Result<(), AnyError> {
    let cfg = match config {
        Some(p) => ServiceConfig::parse(&std::fs::read_to_string(p)?)?,
        None => ServiceConfig::default(),
    };
    let clock = ClockSource::Wall;
    let tasks = TaskQueue::new(cfg.task_lease);
    let plant = match &data_dir {
        None => Plant::new(
            OperationalStore::in_memory(),
            Arc::new(Broker::new("plant")),
            cfg.rules,
            cfg.manual_centers,
            tasks,
            clock.now(),
        ),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let (store, recovery) = OperationalStore::open(dir.join(ORDERS_DIR), StoreOptions::default())?;
            let (broker, cut) = Broker::open("plant", dir.join(BUS_JOURNAL_FILE), SyncPolicy::Always)?;
            tracing::info!(orders = store.len(), ?recovery, journal_bytes_cut = cut, "recovered plant");
            Plant::new(store, Arc::new(broker), cfg.rules, cfg.manual_centers, tasks, clock.now())
        }
    };
    let mut state = AppState::new(Arc::new(plant), clock, cfg.wrinkle);
    if let Some(dir) = &data_dir {
        state = state.with_warehouse_dir(&dir.join("warehouse"))?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = TcpListener::bind(("0.0.0.0", port)).await?;
        tracing::info!("serving on {}", listener.local_addr()?);
        axum::serve(listener, app(Arc::new(state), console.as_deref()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
