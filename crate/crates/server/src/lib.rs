//! HTTP/JSON service over the wayfind core: ranging, quantization,
//! fine-tuning math, description, speech formatting, and pipeline runs.

mod error;
mod routes;
mod runs;
pub mod stubs;

use std::future::Future;
use std::net::SocketAddr;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::ApiError;
pub use runs::Runs;

pub fn router(runs: Runs) -> Router {
    Router::new()
        .route("/health", get(routes::health))
        .route("/v1/distance/estimate", post(routes::estimate))
        .route("/v1/distance/calibrate", post(routes::calibrate))
        .route("/v1/distance/headings", post(routes::headings))
        .route("/v1/quant/quantize", post(routes::quantize))
        .route("/v1/quant/size-report", post(routes::size))
        .route("/v1/finetune/grad-check", post(routes::gradient_check))
        .route("/v1/finetune/train", post(routes::train_model))
        .route("/v1/finetune/early-stop", post(routes::early_stop))
        .route("/v1/describe", post(routes::describe_scene))
        .route("/v1/tts/normalize", post(routes::normalize))
        .route("/v1/tts/request", post(routes::speech_request))
        .route("/v1/runs", post(runs::start))
        .route("/v1/runs/{id}", get(runs::status).delete(runs::stop))
        .with_state(runs)
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// A server running on a background task.
pub struct Spawned {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Spawned {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Binds `addr` (port 0 picks a free one) and serves `app` in the background.
pub async fn spawn(addr: &str, app: Router) -> std::io::Result<Spawned> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(serve(listener, app, async {
        let _ = rx.await;
    }));
    Ok(Spawned {
        addr,
        stop: Some(tx),
        task,
    })
}
