//! Live human-in-the-loop sessions over HTTP.
//!
//! Each session is a small state machine around an [`hetpbo_core::engine::Engine`]
//! persisted as an append-only event log. Requests on different sessions run
//! concurrently; requests on one session are serialized by its mutex, and
//! engine work runs on the blocking pool.

pub mod http;
pub mod session;
pub mod store;

pub use http::{router, AppState};
pub use session::{Session, COLD_START_DUELS};
pub use store::EventStore;

/// Serves until ctrl-c.
pub async fn serve(addr: std::net::SocketAddr, store: EventStore) -> anyhow::Result<()> {
    let state = AppState::open(store)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
