//! Job-based reconstruction over HTTP.
//!
//! Jobs live in one directory each under the data dir; a worker pool drains
//! a FIFO queue and the state manifest is rewritten atomically on every
//! transition, so a restart can rebuild the queue from disk.

mod api;
mod store;
mod worker;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use api::{router, SimRequest, SimResponse, SECRET_HEADER};
pub use store::{JobRecord, JobState, Store, StoreError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub max_upload_bytes: usize,
    pub workers: usize,
    /// Directory of deployed weights, `<id>.json` each.
    pub weights_dir: Option<PathBuf>,
    /// Required value of the shared-secret header, when set.
    pub secret: Option<String>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            max_upload_bytes: 64 << 20,
            workers: 1,
            weights_dir: None,
            secret: None,
        }
    }
}

/// A running service: job store plus its worker pool.
pub struct Service {
    pub config: Arc<ServiceConfig>,
    pub store: Arc<Store>,
    workers: Vec<JoinHandle<()>>,
}

impl Service {
    /// Opens (or creates) the data dir, requeues interrupted jobs and starts
    /// the workers. Must be called inside a tokio runtime.
    pub fn open(config: ServiceConfig) -> Result<Self, StoreError> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let config = Arc::new(config);
        let workers = (0..config.workers.max(1))
            .map(|_| tokio::spawn(worker::run(store.clone(), config.clone())))
            .collect();
        Ok(Service { config, store, workers })
    }

    pub fn router(&self) -> axum::Router {
        router(self.store.clone(), self.config.clone())
    }

    /// Stops the workers; a job they were running stays `running` on disk
    /// and is requeued by the next [`Service::open`].
    pub fn shutdown(self) {
        for w in self.workers {
            w.abort();
        }
    }
}

/// Serves until the process ends.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let service = Service::open(config).map_err(std::io::Error::other)?;
    let listener = TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, service.router()).await
}
