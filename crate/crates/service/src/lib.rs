//! HTTP API over a built NDVI store.

pub mod api;
pub mod config;

pub use api::router;
pub use config::{AppState, ServiceConfig, SetupError};

/// Serves `router` on `listener` until `shutdown` resolves.
pub async fn serve(listener: tokio::net::TcpListener, state: std::sync::Arc<AppState>, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
