//! Task service: serves task specs, ingests client-timed event logs,
//! persists sessions durably and exports analysis-ready datasets.

pub mod api;
pub mod error;
pub mod export;
pub mod store;
pub mod tracker;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use error::{Result, ServiceError};
pub use store::SessionStore;
use tokio::net::TcpListener;

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "PERCEPTKIT_DATA_DIR";
pub const DEFAULT_PORT: u16 = 8640;

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve_with_shutdown(
    listener: TcpListener,
    store: Arc<SessionStore>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr = listener.local_addr()?;
    tracing::info!(%addr, data_dir = %store.root().display(), "task service listening");
    axum::serve(listener, api::router(store))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Opens the store at `data_dir`, binds `addr` and serves until ctrl-c.
pub async fn run(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let store = tokio::task::spawn_blocking(move || SessionStore::open(data_dir))
        .await?
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = TcpListener::bind(addr).await?;
    serve_with_shutdown(listener, Arc::new(store), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
