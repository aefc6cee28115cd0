//! HTTP API over a trained model and a response bank: reply suggestion,
//! exemplar editing, bank statistics and merge sessions.
//!
//! Bank mutations go through one serialized writer and are published as a
//! new immutable snapshot, so a request sees either the old or the new bank.

pub mod api;
mod error;
mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Instant;

use axum::extract::Request;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post, put};
use axum::Router;
use replybank_core::classifier::Checkpoint;
use replybank_core::corpus::{load_corpus, read_responses_tsv, ContextConfig};
use replybank_core::responsebank::ResponseBank;
use replybank_core::simcluster::read_clusters_json;

pub use error::{ApiError, ApiResult};
pub use state::{AppState, LoadedModel, ServiceData, ServiceOptions, SinkFactory};

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let started = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = resp.status().as_u16(),
        latency_ms = started.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    resp
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(api::health))
        .route("/v1/suggest", post(api::suggest))
        .route("/v1/bank", get(api::get_bank))
        .route("/v1/bank/stats", get(api::get_stats))
        .route("/v1/bank/classes/{id}/exemplar", put(api::put_exemplar))
        .route("/v1/sessions", post(api::create_session))
        .route("/v1/sessions/{id}/next", get(api::get_next))
        .route("/v1/sessions/{id}/decisions", post(api::post_decision).get(api::get_session_decisions))
        .route("/v1/sessions/{id}/summary", get(api::get_summary))
        .route("/v1/sessions/{id}/bank", get(api::get_session_bank))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

/// Files the service is started from.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub bank: PathBuf,
    pub model: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    /// Corpus used only to count doctor turns for coverage figures.
    pub corpus: Option<PathBuf>,
    pub decision_log_dir: Option<PathBuf>,
    pub threshold_override: Option<f64>,
    pub max_tokens: usize,
}

pub fn load_state(cfg: &ServiceConfig) -> replybank_core::Result<AppState> {
    let bank = ResponseBank::load(&cfg.bank)?;
    let model = cfg.model.as_deref().map(Checkpoint::load).transpose()?;
    let records = match &cfg.responses {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| replybank_core::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            read_responses_tsv(std::io::BufReader::new(f), &p.display().to_string())?
        }
        None => Vec::new(),
    };
    let clusters = match &cfg.clusters {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| replybank_core::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            read_clusters_json(std::io::BufReader::new(f))?
        }
        None => Vec::new(),
    };
    let doctor_turns = cfg
        .corpus
        .as_deref()
        .map(load_corpus)
        .transpose()?
        .map(|convs| convs.iter().map(|c| c.doctor_turns().count() as u64).sum());
    if let Some(dir) = &cfg.decision_log_dir {
        std::fs::create_dir_all(dir).map_err(|e| replybank_core::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    AppState::new(
        ServiceData {
            bank,
            model,
            records,
            clusters,
            doctor_turns,
        },
        ServiceOptions {
            bank_path: Some(cfg.bank.clone()),
            decision_log_dir: cfg.decision_log_dir.clone(),
            threshold_override: cfg.threshold_override,
            context: ContextConfig {
                max_tokens: cfg.max_tokens,
                ..ContextConfig::default()
            },
        },
    )
}

/// Serve until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = load_state(&cfg)?;
    let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
