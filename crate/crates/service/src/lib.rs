//! `POST /segment` and `GET /health` over a single read-only model.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use epseg::checkpoint::{load_checkpoint, Checkpoint};
use epseg::data::{CropBox, RgbImage};
use epseg::inference::{segment, SegmentOptions};
use epseg::polygon::Polygon;
use epseg::unet::{Network, UNetConfig};
use epseg::Error;

pub const DEFAULT_PORT: u16 = 8601;

/// Server flags, shared with the `epseg serve` subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct ServeArgs {
    /// Checkpoint to load at startup.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Probability threshold for the object mask.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Polygon simplification tolerance in crop pixels.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Fraction of the point box added on every side before cropping.
    #[arg(long, default_value_t = 0.08)]
    pub margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SegmentRequest {
    /// Base64 PNG of the full frame.
    pub image: String,
    /// Four `[x, y]` points in image pixels, any order.
    pub extreme_points: Vec<[f64; 2]>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub polygon: Polygon,
    pub confidence: f64,
    pub inference_ms: f64,
    /// Crop window `[x0, y0, x1, y1]` in image pixel edges.
    pub bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ServiceState {
    model: Option<Arc<Network<f32>>>,
    options: SegmentOptions,
}

impl ServiceState {
    pub fn new(model: Option<Network<f32>>, options: SegmentOptions) -> Self {
        ServiceState {
            model: model.map(Arc::new),
            options,
        }
    }

    /// Uses the crop geometry stored in the checkpoint unless overridden.
    pub fn from_checkpoint(ckpt: Checkpoint, threshold: f64, epsilon: f64, margin: f64) -> Self {
        let options = SegmentOptions {
            threshold,
            epsilon,
            margin,
            ep_radius: ckpt.meta.crop.ep_radius,
        };
        ServiceState::new(Some(ckpt.network), options)
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

/// HTTP status for a pipeline error.
pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::InvalidRequest(_) | Error::Decode(_) => StatusCode::BAD_REQUEST,
        Error::DegenerateBox { .. } => StatusCode::CONFLICT,
        Error::NoObject => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(status_for(&e), e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/segment", post(segment_handler))
        .route("/health", get(health_handler))
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub loaded: bool,
    pub config: Option<UNetConfig>,
    pub param_count: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: ModelInfo,
}

async fn health_handler(State(state): State<Arc<ServiceState>>) -> Json<Health> {
    let model = match &state.model {
        Some(net) => ModelInfo {
            loaded: true,
            config: Some(net.config().clone()),
            param_count: Some(net.param_count()),
        },
        None => ModelInfo {
            loaded: false,
            config: None,
            param_count: None,
        },
    };
    Json(Health {
        status: "ok".into(),
        model,
    })
}

async fn segment_handler(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> Result<Json<SegmentResponse>, ApiError> {
    // Parsed by hand so every malformed body maps to 400.
    let req: SegmentRequest =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed request: {e}")))?;
    if req.extreme_points.len() != 4 {
        return Err(bad_request(format!("expected 4 extreme points, got {}", req.extreme_points.len())));
    }
    let model = state
        .model
        .clone()
        .ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "model not loaded".into()))?;
    let png = base64::engine::general_purpose::STANDARD
        .decode(req.image.trim())
        .map_err(|e| bad_request(format!("image is not valid base64: {e}")))?;
    let mut options = state.options;
    if let Some(t) = req.threshold {
        options.threshold = t;
    }
    if let Some(e) = req.epsilon {
        options.epsilon = e;
    }
    let result = tokio::task::spawn_blocking(move || {
        let image = RgbImage::decode_png(&png)?;
        segment(&model, &image, &req.extreme_points, &options)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))??;
    let CropBox { x0, y0, x1, y1 } = result.bbox;
    Ok(Json(SegmentResponse {
        polygon: result.polygon,
        confidence: result.confidence,
        inference_ms: result.inference_ms,
        bbox: [x0, y0, x1, y1],
    }))
}

/// Loads the checkpoint and serves until interrupted.
pub async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    log::info!(
        "loaded {} ({} parameters)",
        args.checkpoint.display(),
        ckpt.network.param_count()
    );
    let state = Arc::new(ServiceState::from_checkpoint(ckpt, args.threshold, args.epsilon, args.margin));
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
