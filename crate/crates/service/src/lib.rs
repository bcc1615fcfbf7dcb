//! Issue service: scheduled issue generation, sticky condition assignment,
//! issue payloads and the interaction event log.

pub mod config;
pub mod error;
pub mod geo;
pub mod issues;
pub mod routes;
pub mod scheduler;
pub mod sessions;
pub mod source;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use routes::router;
pub use state::AppState;

/// Binds, starts the scheduler and serves until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let scheduler = scheduler::spawn_scheduler(state.clone());
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| ServiceError::Config(format!("bind {}: {e}", cfg.bind)))?;
    tracing::info!(addr = %cfg.bind, "listening");
    let app = router(state).into_make_service_with_connect_info::<SocketAddr>();
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()));
    scheduler.abort();
    result
}
