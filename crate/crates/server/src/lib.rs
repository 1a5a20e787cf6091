//! HTTP service and command-line front end for the wayfare engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod reports;

use std::sync::Arc;

use tokio::net::TcpListener;
use wayfare_core::clock::SystemClock;

pub use api::{router, AppState};
pub use config::{EngineArgs, ServeArgs};
pub use error::{ApiError, ErrorBody};

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    args: &ServeArgs,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let config = args.engine.engine_config()?;
    let store = cli::open_store(&args.engine.data_dir)?;
    let engine = config.build_engine(store, Arc::new(SystemClock::new()))?;
    let app = router(AppState::new(Arc::new(engine)), &args.cors_origins);
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}
