//! The real-time recommendation endpoint: one model and index loaded at
//! startup, then pure concurrent request handling.
//!
//! Routes: `POST /v1/recommendations` and `GET /v1/health`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use trivec_core::recommend::{BasketContext, RecommendConfig};
use trivec_core::{
    CatalogIndex, FrequencyTable, PostProcessConfig, Recommender, TripleModel, Vocabulary,
};

/// How the anchor-sampling seed is chosen per request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorSeedMode {
    /// One service-wide seed: identical requests get identical responses.
    Fixed(u64),
    /// Fresh entropy per request (opt-in).
    PerRequest,
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub model_path: PathBuf,
    pub index_path: PathBuf,
    pub postprocess_path: Option<PathBuf>,
    /// Popularity sidecar for the ItemPop fallback; defaults to the model
    /// path with a `t2vp` extension and degrades to id order when absent.
    pub popularity_path: Option<PathBuf>,
    pub addr: SocketAddr,
    pub default_k: usize,
    pub anchor_threshold: usize,
    pub anchor_seed: AnchorSeedMode,
    pub request_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            model_path: PathBuf::from("model.t2vm"),
            index_path: PathBuf::from("catalog.t2vi"),
            postprocess_path: None,
            popularity_path: None,
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            default_k: 10,
            anchor_threshold: 6,
            anchor_seed: AnchorSeedMode::Fixed(42),
            request_timeout: Duration::from_secs(2),
        }
    }
}

/// Everything the handlers need, immutable after load.
pub struct ServiceState {
    pub model: TripleModel<f32>,
    pub vocab: Vocabulary,
    pub index: CatalogIndex,
    pub popularity: FrequencyTable,
    pub post: PostProcessConfig,
    pub default_k: usize,
    pub anchor_threshold: usize,
    pub anchor_seed: AnchorSeedMode,
}

impl ServiceState {
    /// Load all artifacts, failing fast with the offending path in the
    /// message. Cross-checks that the index matches the model.
    pub fn load(config: &ServiceConfig) -> anyhow::Result<Self> {
        let (model, vocab) = trivec_core::load_model(&config.model_path)
            .map_err(|e| anyhow::anyhow!("loading model {}: {e}", config.model_path.display()))?;
        let index = CatalogIndex::load(&config.index_path)
            .map_err(|e| anyhow::anyhow!("loading index {}: {e}", config.index_path.display()))?;
        if index.len() != model.item_count() || index.dim() != index.layout().width(model.dim()) {
            anyhow::bail!(
                "index {} does not match model {} (items {} vs {}, width {})",
                config.index_path.display(),
                config.model_path.display(),
                index.len(),
                model.item_count(),
                index.dim()
            );
        }
        let post = match &config.postprocess_path {
            Some(path) => PostProcessConfig::load(path, &vocab)
                .map_err(|e| anyhow::anyhow!("loading post-process config {}: {e}", path.display()))?,
            None => PostProcessConfig::default(),
        };
        let popularity_path = config
            .popularity_path
            .clone()
            .unwrap_or_else(|| config.model_path.with_extension("t2vp"));
        let popularity = if popularity_path.exists() {
            FrequencyTable::load(&popularity_path).map_err(|e| {
                anyhow::anyhow!("loading popularity {}: {e}", popularity_path.display())
            })?
        } else {
            log::warn!(
                "popularity sidecar {} not found; fallback degrades to id order",
                popularity_path.display()
            );
            FrequencyTable::uniform(model.item_count())
        };
        if popularity.len() != model.item_count() {
            anyhow::bail!(
                "popularity table has {} items, model has {}",
                popularity.len(),
                model.item_count()
            );
        }
        Ok(ServiceState {
            model,
            vocab,
            index,
            popularity,
            post,
            default_k: config.default_k,
            anchor_threshold: config.anchor_threshold,
            anchor_seed: config.anchor_seed,
        })
    }

    fn recommender(&self) -> trivec_core::Result<Recommender<'_>> {
        let config = RecommendConfig {
            anchor_threshold: self.anchor_threshold,
            post: self.post.clone(),
            ..RecommendConfig::default()
        };
        Recommender::new(&self.model, &self.index, &self.popularity, config)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    #[serde(default)]
    pub user_id: Option<String>,
    pub basket: Vec<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResponseItem {
    pub item_id: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResponseFlags {
    pub fallback: bool,
    pub unknown_items: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub items: Vec<ResponseItem>,
    pub flags: ResponseFlags,
    pub latency_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub users: usize,
    pub items: usize,
    pub dim: usize,
    pub backend: String,
}

const MAX_K: usize = 500;

enum ApiError {
    Validation(String),
    Internal,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::Validation(msg) => (
                StatusCode::BAD_REQUEST,
                Json(serde_json::json!({ "error": msg })),
            )
                .into_response(),
            ApiError::Internal => (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(serde_json::json!({ "error": "internal error" })),
            )
                .into_response(),
        }
    }
}

async fn handle_recommend(
    State(state): State<Arc<ServiceState>>,
    Json(request): Json<RecommendRequest>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let started = Instant::now();
    let k = request.k.unwrap_or(state.default_k);
    if !(1..=MAX_K).contains(&k) {
        return Err(ApiError::Validation(format!(
            "k must be in [1, {MAX_K}], got {k}"
        )));
    }

    let mut items = Vec::with_capacity(request.basket.len());
    let mut unknown_items = Vec::new();
    for name in &request.basket {
        match state.vocab.item_index(name) {
            Some(id) => items.push(id),
            None => unknown_items.push(name.clone()),
        }
    }
    let user = request.user_id.as_deref().and_then(|u| state.vocab.user_index(u));

    let anchor_seed = match state.anchor_seed {
        AnchorSeedMode::Fixed(seed) => seed,
        AnchorSeedMode::PerRequest => rand::random(),
    };

    let ctx = BasketContext { user, items, k };
    let recommender = state.recommender().map_err(|e| {
        log::error!("recommender construction failed: {e}");
        ApiError::Internal
    })?;
    let set = recommender.recommend(&ctx, anchor_seed).map_err(|e| {
        log::error!("recommend failed: {e}");
        ApiError::Internal
    })?;

    let items = set
        .entries
        .iter()
        .map(|e| ResponseItem {
            item_id: state
                .vocab
                .item_name(e.item)
                .unwrap_or("<unknown>")
                .to_string(),
            score: e.score,
        })
        .collect();
    Ok(Json(RecommendResponse {
        items,
        flags: ResponseFlags {
            fallback: set.flags.fallback,
            unknown_items,
        },
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    }))
}

async fn handle_health(State(state): State<Arc<ServiceState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ready".to_string(),
        users: state.model.user_count(),
        items: state.model.item_count(),
        dim: state.model.dim(),
        backend: state.index.backend().label().to_string(),
    })
}

/// Assemble the router over loaded state.
pub fn router(state: Arc<ServiceState>, request_timeout: Duration) -> Router {
    Router::new()
        .route("/v1/recommendations", post(handle_recommend))
        .route("/v1/health", get(handle_health))
        .layer(tower_http::timeout::TimeoutLayer::with_status_code(
            StatusCode::REQUEST_TIMEOUT,
            request_timeout,
        ))
        .with_state(state)
}

/// Load artifacts and serve until ctrl-c. Readiness is implicit: the
/// listener is bound only after every artifact loaded successfully.
pub async fn start(config: ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(ServiceState::load(&config)?);
    log::info!(
        "loaded {} items, {} users, dim {}, backend {}",
        state.model.item_count(),
        state.model.user_count(),
        state.model.dim(),
        state.index.backend().label()
    );
    let app = router(state, config.request_timeout);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
