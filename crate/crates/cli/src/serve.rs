// SPDX-License-Identifier: Apache-2.0

//! `serve`: the building service over HTTP. A state directory left by
//! `demo-dataspace` is reopened as is; otherwise the demo runs first to fill
//! it. The orchestrator keeps ticking in the background until SIGINT or
//! SIGTERM, after which the store is flushed.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use edgespace_core::orchestrator::{default_descriptors, Registry, DEFAULT_HEARTBEAT_INTERVAL};
use edgespace_service::{router, AppState, BuildingService, ModelSet, ServiceConfig};

use crate::demo::{self, DemoOptions, MODELS_DIR, STORE_FILE};
use crate::{CliError, RunConfig};

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub port: Option<u16>,
    pub state_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

/// Binds before doing any work so a taken port fails fast.
pub fn bind(host: &str, port: u16) -> Result<TcpListener, CliError> {
    TcpListener::bind((host, port)).map_err(|e| CliError::Config(format!("cannot bind {host}:{port}: {e}")))
}

struct Bootstrapped {
    service: Arc<BuildingService>,
    provider: Option<Arc<edgespace_core::dataspace::ProviderConnector>>,
    registry: Registry,
}

fn bootstrap(cfg: &RunConfig, state_dir: PathBuf, out: &mut dyn Write) -> Result<Bootstrapped, CliError> {
    let store = state_dir.join(STORE_FILE);
    let models_dir = state_dir.join(MODELS_DIR);
    if store.exists() && models_dir.is_dir() {
        let building = cfg.building.to_building()?;
        let models = ModelSet::load_dir(&models_dir).map_err(|e| CliError::Config(e.to_string()))?;
        let service = BuildingService::new(
            building.clone(),
            &cfg.dataspace.consumer_id,
            ServiceConfig {
                cadence_secs: cfg.service_cadence(),
                retention_secs: cfg.service.retention_secs,
                store_path: Some(store.clone()),
                plausibility: cfg.simulation.profile.plausibility.clone(),
            },
        )
        .map_err(|e| CliError::Config(format!("{}: {e}", store.display())))?;
        service.swap_models(models);
        let mut registry = Registry::new(cfg.topology.nodes.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        let sources: Vec<String> = building.devices().map(|d| d.device_id.clone()).collect();
        let descriptors = default_descriptors(&sources);
        let plan = registry.plan(&descriptors);
        registry.deploy(&descriptors, &plan, 0).map_err(|e| CliError::Domain(e.to_string()))?;
        writeln!(out, "reopened {} ({} readings)", state_dir.display(), service.store().len())?;
        return Ok(Bootstrapped { service: Arc::new(service), provider: None, registry });
    }
    writeln!(out, "no state in {}; running the demo bootstrap", state_dir.display())?;
    let o = demo::run(cfg, &DemoOptions { state_dir: Some(state_dir), ..DemoOptions::default() }, out)?;
    Ok(Bootstrapped { service: o.service, provider: Some(o.provider), registry: o.registry })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

pub fn serve(cfg: &RunConfig, opts: &ServeOptions, out: &mut dyn Write) -> Result<(), CliError> {
    let port = opts.port.unwrap_or(cfg.service.port);
    let listener = bind(&cfg.service.host, port)?;
    listener.set_nonblocking(true)?;
    let state_dir = opts.state_dir.clone().unwrap_or_else(|| cfg.paths.state_dir.clone());
    let boot = bootstrap(cfg, state_dir, out)?;
    let static_dir = opts.static_dir.clone().or_else(|| cfg.service.static_dir.clone());
    let app = router(AppState { service: boot.service.clone(), provider: boot.provider.clone() }, static_dir);
    let addr = listener.local_addr()?;
    writeln!(out, "listening on http://{addr}")?;
    out.flush()?;

    let registry = Arc::new(Mutex::new(boot.registry));
    let timeout = cfg.topology.heartbeat_timeout;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        let reg = registry.clone();
        let ticker = tokio::spawn(async move {
            let mut every = tokio::time::interval(Duration::from_secs(DEFAULT_HEARTBEAT_INTERVAL));
            let mut t = 0u64;
            loop {
                every.tick().await;
                t += DEFAULT_HEARTBEAT_INTERVAL;
                let mut r = reg.lock().expect("registry lock poisoned");
                r.tick(t);
                match r.heartbeat_sweep(t, timeout) {
                    Ok(rep) if !rep.is_empty() => log::info!("sweep at t={t}: {rep:?}"),
                    Ok(_) => {}
                    Err(e) => log::error!("sweep: {e}"),
                }
            }
        });
        let served = axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await;
        ticker.abort();
        served
    })?;
    boot.service.flush().map_err(|e| CliError::Domain(e.to_string()))?;
    writeln!(out, "shut down cleanly")?;
    Ok(())
}
