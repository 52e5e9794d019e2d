//! Read/query HTTP service. Handlers run the blocking pipeline on the
//! blocking pool; the corpus and index are shared immutably.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use devinv_core::{render_report, ReportFormat, RetrievalQuery};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::app::{AskRequest, ExtractRequest};
use crate::render::{self, Format};
use crate::{App, AppError};

#[derive(Debug, Default, Deserialize)]
struct FormatParam {
    #[serde(default)]
    format: Option<Format>,
    #[serde(default)]
    provider: Option<String>,
}

impl FormatParam {
    fn or_json(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = render::json(&serde_json::json!({ "error": self.to_string(), "status": status.as_u16() }));
        (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn payload(format: Format, body: String) -> Response {
    let ctype = match format {
        Format::Csv => "text/csv; charset=utf-8",
        Format::Json => "application/json",
        Format::Text => "text/plain; charset=utf-8",
    };
    ([(header::CONTENT_TYPE, ctype)], body).into_response()
}

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, AppError> {
    serde_json::from_slice(bytes).map_err(|e| AppError::BadRequest(format!("request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, AppError> + Send + 'static) -> Result<T, AppError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::Internal(format!("worker failed: {e}")))?
}

async fn get_record(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Response, AppError> {
    let record = app.record(&id)?;
    Ok(payload(Format::Json, render::json(record)))
}

async fn post_search(
    State(app): State<Arc<App>>,
    Query(q): Query<FormatParam>,
    body: Bytes,
) -> Result<Response, AppError> {
    let query: RetrievalQuery = parse_body(&body)?;
    let format = q.or_json();
    let out = blocking(move || {
        let hits = app.search(&query, q.provider.as_deref())?;
        Ok(render::hits(&hits, &app.corpus, format))
    })
    .await?;
    Ok(payload(format, out))
}

async fn post_extract(
    State(app): State<Arc<App>>,
    Query(q): Query<FormatParam>,
    body: Bytes,
) -> Result<Response, AppError> {
    let req: ExtractRequest = parse_body(&body)?;
    let format = q.or_json();
    let out = blocking(move || {
        let result = app.extract_one(&req)?;
        Ok(match format {
            Format::Json => render::json(&result),
            f => render::extractions(std::slice::from_ref(&result), f),
        })
    })
    .await?;
    Ok(payload(format, out))
}

async fn post_ask(State(app): State<Arc<App>>, body: Bytes) -> Result<Response, AppError> {
    let req: AskRequest = parse_body(&body)?;
    let out = blocking(move || Ok(render::json(&app.ask(&req)?))).await?;
    Ok(payload(Format::Json, out))
}

async fn get_report(State(app): State<Arc<App>>, Query(q): Query<FormatParam>) -> Result<Response, AppError> {
    let format = q.or_json();
    let out = blocking(move || {
        let report = app.report(q.provider.as_deref())?;
        Ok(match format {
            Format::Json => render::json(&*report),
            Format::Csv => render_report(&report, ReportFormat::Csv),
            Format::Text => render_report(&report, ReportFormat::Text),
        })
    })
    .await?;
    Ok(payload(format, out))
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/records/{id}", get(get_record))
        .route("/search", post(post_search))
        .route("/extract", post(post_extract))
        .route("/ask", post(post_ask))
        .route("/report", get(get_report))
        .with_state(app)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    app: Arc<App>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}
