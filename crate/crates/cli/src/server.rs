//! HTTP API over a [`Store`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use plaquekit::pipeline::{CorrectionAction, PipelineConfig, ProbSource, Store, WellSource};
use plaquekit::titration::SchemeSpec;
use plaquekit::welldetect::Layout;
use plaquekit::Error;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

/// Carries the plate's record version on every plate-scoped response.
pub const VERSION_HEADER: HeaderName = HeaderName::from_static("x-plate-version");

const MAX_UPLOAD: usize = 256 * 1024 * 1024;

/// Library error rendered as a JSON body with a matching status code.
#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl ApiError {
    fn unprocessable(msg: impl Into<String>) -> Self {
        Self(Error::Input(msg.into()))
    }

    pub fn status(&self) -> StatusCode {
        match &self.0 {
            Error::PlateNotFound(_) => StatusCode::NOT_FOUND,
            Error::StaleVersion { .. } | Error::State(_) => StatusCode::CONFLICT,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.0.to_string() });
        match &self.0 {
            Error::StaleVersion { expected, actual } => {
                body["expected_version"] = json!(expected);
                body["current_version"] = json!(actual);
            }
            Error::Correction { seq, reason } => {
                body["seq"] = json!(seq);
                body["reason"] = json!(reason);
            }
            Error::NoWellsDetected { candidates } => body["candidates"] = json!(candidates),
            _ => {}
        }
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn versioned(version: u64, body: impl IntoResponse) -> Response {
    let mut resp = body.into_response();
    resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(version));
    resp
}

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> plaquekit::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Io(std::io::Error::other(e))))?
        .map_err(ApiError)
}

/// Routes under `/api`; when `ui_dir` is given its files are served for every other path.
pub fn router(store: Arc<Store>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/plates", post(create_plate).get(list_plates))
        .route("/api/plates/{id}", get(get_plate))
        .route("/api/plates/{id}/analyze", post(analyze_plate))
        .route("/api/plates/{id}/wells/{r}/{c}", get(get_well))
        .route("/api/plates/{id}/wells/{r}/{c}/crop.png", get(get_well_crop))
        .route("/api/plates/{id}/corrections", post(post_correction))
        .route("/api/plates/{id}/titer", get(get_titer))
        .route("/api/plates/{id}/export.csv", get(get_csv))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn list_plates(State(store): State<Arc<Store>>) -> ApiResult<Response> {
    let ids = blocking(move || store.list()).await?;
    Ok(Json(json!({ "plates": ids })).into_response())
}

/// Multipart fields: `image` (file), `layout` (`RxC`), `scheme` (JSON) and optional `config` (JSON).
async fn create_plate(State(store): State<Arc<Store>>, mut form: Multipart) -> ApiResult<Response> {
    let (mut image, mut layout, mut scheme, mut config) = (None, None, None, None);
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::unprocessable(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::unprocessable(format!("multipart field {name}: {e}")))?;
        let text = || String::from_utf8_lossy(&bytes).into_owned();
        match name.as_str() {
            "image" => image = Some(bytes.to_vec()),
            "layout" => layout = Some(text().trim().parse::<Layout>()?),
            "scheme" => scheme = Some(SchemeSpec::from_json(&text())?),
            "config" => config = Some(PipelineConfig::from_json(&text())?),
            other => return Err(ApiError::unprocessable(format!("unexpected field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::unprocessable("missing field image"))?;
    let layout = layout.ok_or_else(|| ApiError::unprocessable("missing field layout"))?;
    let scheme = scheme.ok_or_else(|| ApiError::unprocessable("missing field scheme"))?;
    let rec = blocking(move || store.create(&image, layout, scheme, config.unwrap_or_default())).await?;
    Ok(versioned(rec.version, (StatusCode::CREATED, Json(rec))))
}

async fn get_plate(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let view = blocking(move || store.view(&id)).await?;
    Ok(versioned(view.record.version, Json(view)))
}

#[derive(Debug, Default, Deserialize)]
struct AnalyzeQuery {
    #[serde(default)]
    wait: bool,
}

/// Synchronous with `?wait=true`; otherwise answers 202 and analyses in the background.
async fn analyze_plate(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<AnalyzeQuery>,
) -> ApiResult<Response> {
    let rec = {
        let (store, id) = (store.clone(), id.clone());
        blocking(move || store.begin_analysis(&id)).await?
    };
    let run = move || store.run_analysis(&id, &WellSource::Classical, &ProbSource::Classical);
    if q.wait {
        let rec = blocking(run).await?;
        return Ok(versioned(rec.version, Json(rec)));
    }
    tokio::task::spawn_blocking(run);
    Ok(versioned(rec.version, (StatusCode::ACCEPTED, Json(rec))))
}

async fn get_well(
    State(store): State<Arc<Store>>,
    Path((id, r, c)): Path<(String, usize, usize)>,
) -> ApiResult<Response> {
    let view = blocking(move || store.well(&id, r, c)).await?;
    Ok(versioned(view.version, Json(view)))
}

async fn get_well_crop(
    State(store): State<Arc<Store>>,
    Path((id, r, c)): Path<(String, usize, usize)>,
) -> ApiResult<Response> {
    let png = blocking(move || store.well_crop_png(&id, r, c)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Body of `POST /corrections`: the event plus the version it was made against.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionRequest {
    pub version: u64,
    pub row: usize,
    pub col: usize,
    pub action: CorrectionAction,
    #[serde(default)]
    pub author: String,
}

async fn post_correction(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let req: CorrectionRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("correction body: {e}")))?;
    let (rec, view) =
        blocking(move || store.correct(&id, req.version, req.row, req.col, req.action, &req.author)).await?;
    Ok(versioned(
        rec.version,
        Json(json!({ "version": rec.version, "wells": view.wells, "titer": view.titer })),
    ))
}

async fn get_titer(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let (version, view) = blocking(move || Ok((store.record(&id)?.version, store.effective(&id)?))).await?;
    Ok(versioned(version, Json(view.titer)))
}

async fn get_csv(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let csv = blocking(move || store.export_csv(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

/// Binds `listen` and serves until the process is stopped.
pub async fn serve(store: Arc<Store>, listen: &str, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir)).await
}
