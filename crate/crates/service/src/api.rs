//! HTTP routes. Store operations block on fsync and compute endpoints are
//! CPU-bound, so both run on the blocking pool.

use std::collections::HashSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use perceptkit_core::cascade::{dollars, naive_cost, perfect_item_views, plan_order};
use perceptkit_core::corpus::{build_stream, plan_redundancy, RedundancyPlan, Stream};
use perceptkit_core::decoder::{classify, decode, evaluate, fit_delay_model, speedup, tune_threshold, DelayModel};
use perceptkit_core::metrics::{
    anova_f, bootstrap_ci, hype_inf_score, pairwise_t_tests, pearson, qualify, random_pass_probability, spearman,
    t_test, BootstrapCi, HypeScore,
};
use perceptkit_core::staircase::{blocks_from_records, hype_time_score, HypeTimeScore};
use perceptkit_protocol::*;
use serde::de::DeserializeOwned;

use crate::error::ServiceError;
use crate::store::SessionStore;

const BODY_LIMIT: usize = 512 * 1024 * 1024;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<perceptkit_core::Error> for ApiError {
    fn from(e: perceptkit_core::Error) -> Self {
        ApiError(e.into())
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::Finalized(_) | ServiceError::SeqGap { .. } | ServiceError::SeqConflict(_) => StatusCode::CONFLICT,
        ServiceError::TimeRegression { .. } | ServiceError::InvalidEvent(_) | ServiceError::Core(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self.0, ServiceError::Io(_)) {
            tracing::error!(error = %self.0, "request failed");
        }
        (status_of(&self.0), Json(self.0.body())).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Io(format!("worker task failed: {e}"))))?
}

fn parse<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError(perceptkit_core::Error::Malformed(e.to_string()).into()))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_task_spec))
        .route("/v1/sessions/{id}/events", post(append_events).get(get_events))
        .route("/v1/sessions/{id}/finalize", post(finalize))
        .route("/v1/sessions/{id}/export", get(export))
        .route("/v1/sessions/{id}/live", get(live))
        .route("/v1/streams", post(make_stream))
        .route("/v1/plans", post(make_plan))
        .route("/v1/calibrate", post(calibrate))
        .route("/v1/decode", post(decode_plan))
        .route("/v1/speedup", post(speedup_of))
        .route("/v1/hype/score", post(hype_score))
        .route("/v1/hype/time-score", post(time_score))
        .route("/v1/qualify", post(qualify_sets))
        .route("/v1/bootstrap", post(bootstrap))
        .route("/v1/stats", post(stats))
        .route("/v1/cascade/plan", post(cascade_plan))
        .route("/v1/cascade/naive-cost", post(cascade_naive_cost))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(store)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn create_session(State(store): State<Arc<SessionStore>>, body: Bytes) -> Result<(StatusCode, Json<Session>), ApiError> {
    let req: CreateSession = parse(&body)?;
    let s = blocking(move || Ok(store.create(req)?)).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn list_sessions(State(store): State<Arc<SessionStore>>) -> ApiResult<Vec<Session>> {
    Ok(Json(blocking(move || Ok(store.list())).await?))
}

async fn get_task_spec(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<TaskView> {
    Ok(Json(blocking(move || Ok(store.view(&id)?)).await?))
}

/// Accepts a JSON array of events, or NDJSON when the content type says so.
async fn append_events(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Ack> {
    let ndjson = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/x-ndjson"));
    let events: Vec<EventRecord> = if ndjson {
        let text = std::str::from_utf8(&body).map_err(|e| ApiError(perceptkit_core::Error::Malformed(e.to_string()).into()))?;
        events_from_ndjson(text)?
    } else {
        parse(&body)?
    };
    Ok(Json(blocking(move || Ok(store.append(&id, &events)?)).await?))
}

async fn get_events(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = blocking(move || Ok(store.events_ndjson(&id)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn finalize(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<ExportBundle> {
    Ok(Json(blocking(move || Ok(store.finalize(&id)?.bundle.clone())).await?))
}

async fn export(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<ExportBundle> {
    Ok(Json(blocking(move || Ok(store.export(&id)?)).await?))
}

async fn live(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let check = store.clone();
    let probe = id.clone();
    blocking(move || Ok(check.session(&probe)?)).await?;
    Ok(ws.on_upgrade(move |socket| live_session(socket, store, id)))
}

async fn live_session(mut socket: WebSocket, store: Arc<SessionStore>, id: String) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<LiveRequest>(&text) {
            Err(e) => LiveResponse::Error {
                error: ServiceError::Core(perceptkit_core::Error::Malformed(e.to_string())).body(),
            },
            Ok(req) => {
                let store = store.clone();
                let id = id.clone();
                let handled = tokio::task::spawn_blocking(move || live_reply(&store, &id, req)).await;
                handled.unwrap_or_else(|e| LiveResponse::Error {
                    error: ServiceError::Io(e.to_string()).body(),
                })
            }
        };
        let out = serde_json::to_string(&reply).expect("reply serializes");
        if socket.send(Message::Text(out.into())).await.is_err() {
            break;
        }
    }
}

fn live_reply(store: &SessionStore, id: &str, req: LiveRequest) -> LiveResponse {
    let result = match req {
        LiveRequest::GetSpec => store.view(id).map(|v| LiveResponse::Spec { view: Box::new(v) }),
        LiveRequest::Append { events } => store
            .append(id, &events)
            .and_then(|ack| Ok(LiveResponse::Ack { ack, progress: store.view(id)?.progress })),
        LiveRequest::Finalize => store.finalize(id).map(|f| LiveResponse::Finalized {
            bundle: Box::new(f.bundle.clone()),
        }),
    };
    result.unwrap_or_else(|e| LiveResponse::Error { error: e.body() })
}

async fn make_stream(body: Bytes) -> ApiResult<Stream> {
    let req: StreamRequest = parse(&body)?;
    Ok(Json(blocking(move || Ok(build_stream(&req.items, &req.config, req.seed)?)).await?))
}

async fn make_plan(body: Bytes) -> ApiResult<RedundancyPlan> {
    let req: PlanRequest = parse(&body)?;
    Ok(Json(
        blocking(move || Ok(plan_redundancy(&req.items, req.redundancy, &req.config, req.seed)?)).await?,
    ))
}

async fn calibrate(body: Bytes) -> ApiResult<DelayModel> {
    let req: CalibrateRequest = parse(&body)?;
    Ok(Json(
        blocking(move || {
            let pairs: Vec<_> = req.calibration.into_iter().map(|p| (p.stream, p.response)).collect();
            Ok(fit_delay_model(&pairs, req.match_window_ms.unwrap_or(perceptkit_core::decoder::DecoderConfig::default().match_window_ms))?)
        })
        .await?,
    ))
}

pub fn run_decode(req: &DecodeRequest) -> Result<DecodeResponse, perceptkit_core::Error> {
    req.config.validate()?;
    let scores = decode(&req.plan, &req.responses, &req.delay_model, &req.config)?;
    let truth: Option<HashSet<String>> = req.truth.as_ref().map(|t| t.iter().cloned().collect());
    let threshold = match (&truth, req.target_precision) {
        (Some(t), Some(p)) => tune_threshold(&scores, t, p).threshold,
        _ => req.config.threshold,
    };
    let predicted = classify(&scores, threshold);
    let evaluation = truth.map(|t| {
        let universe: HashSet<String> = scores.iter().map(|s| s.item_id.clone()).collect();
        let p: HashSet<String> = predicted.iter().cloned().collect();
        evaluate(&p, &t, &universe)
    });
    Ok(DecodeResponse {
        scores,
        threshold,
        predicted,
        evaluation,
    })
}

async fn decode_plan(body: Bytes) -> ApiResult<DecodeResponse> {
    let req: DecodeRequest = parse(&body)?;
    Ok(Json(blocking(move || Ok(run_decode(&req)?)).await?))
}

async fn speedup_of(Json(req): Json<SpeedupRequest>) -> ApiResult<SpeedupResponse> {
    Ok(Json(SpeedupResponse {
        speedup: speedup(req.conv_time_s, req.conv_redundancy, req.exposure_s, req.redundancy)?,
    }))
}

async fn hype_score(body: Bytes) -> ApiResult<HypeScore> {
    let req: HypeScoreRequest = parse(&body)?;
    Ok(Json(blocking(move || Ok(hype_inf_score(&req.sets, &req.config)?)).await?))
}

async fn time_score(body: Bytes) -> ApiResult<HypeTimeScore> {
    let req: TimeScoreRequest = parse(&body)?;
    Ok(Json(
        blocking(move || Ok(hype_time_score(&blocks_from_records(&req.trials), &req.config)?)).await?,
    ))
}

pub fn run_qualify(req: &QualifyRequest) -> Result<QualifyResponse, perceptkit_core::Error> {
    let threshold = req
        .threshold
        .unwrap_or(perceptkit_core::metrics::HypeTaskConfig::default().qual_threshold);
    let results = req
        .sets
        .iter()
        .map(|s| {
            let tally = s.tally();
            Ok(QualifyResult {
                evaluator_id: s.evaluator_id.clone(),
                pass: qualify(s, threshold)?,
                chance_pass: random_pass_probability(tally.n_real, tally.n_fake, threshold),
                tally,
            })
        })
        .collect::<Result<_, perceptkit_core::Error>>()?;
    Ok(QualifyResponse { threshold, results })
}

async fn qualify_sets(body: Bytes) -> ApiResult<QualifyResponse> {
    let req: QualifyRequest = parse(&body)?;
    Ok(Json(run_qualify(&req)?))
}

async fn bootstrap(body: Bytes) -> ApiResult<BootstrapCi> {
    let req: BootstrapRequest = parse(&body)?;
    let d = perceptkit_core::metrics::HypeTaskConfig::default();
    Ok(Json(
        blocking(move || {
            Ok(bootstrap_ci(
                &req.scores,
                req.iters.unwrap_or(d.bootstrap_iters),
                req.level.unwrap_or(d.ci_level),
                req.seed,
            )?)
        })
        .await?,
    ))
}

pub fn run_stats(req: &StatsRequest) -> Result<StatsResponse, perceptkit_core::Error> {
    Ok(match req {
        StatsRequest::Anova { groups } => StatsResponse::Anova(anova_f(groups)?),
        StatsRequest::TTest { a, b } => StatsResponse::TTest(t_test(a, b)?),
        StatsRequest::Pairwise { groups } => StatsResponse::Pairwise {
            comparisons: pairwise_t_tests(groups)?,
        },
        StatsRequest::Spearman { x, y } => StatsResponse::Spearman { rho: spearman(x, y)? },
        StatsRequest::Pearson { x, y } => StatsResponse::Pearson { r: pearson(x, y)? },
    })
}

async fn stats(body: Bytes) -> ApiResult<StatsResponse> {
    let req: StatsRequest = parse(&body)?;
    Ok(Json(run_stats(&req)?))
}

pub fn run_cascade_plan(req: &CascadePlanRequest) -> Result<CascadePlanResponse, perceptkit_core::Error> {
    let plan = plan_order(&req.counts, req.strategy, req.redundancy, req.exposure_ms)?;
    let item_views = perfect_item_views(&plan.class_order, &req.counts);
    let worker_seconds = item_views as f64 * req.exposure_ms / 1000.0 * req.redundancy as f64;
    Ok(CascadePlanResponse {
        plan,
        item_views,
        worker_seconds,
        dollars: dollars(worker_seconds),
    })
}

async fn cascade_plan(body: Bytes) -> ApiResult<CascadePlanResponse> {
    let req: CascadePlanRequest = parse(&body)?;
    Ok(Json(run_cascade_plan(&req)?))
}

async fn cascade_naive_cost(Json(req): Json<NaiveCostRequest>) -> ApiResult<CostResponse> {
    let worker_seconds = naive_cost(req.n_items, req.n_classes, req.per_label_s, req.redundancy);
    Ok(Json(CostResponse {
        worker_seconds,
        dollars: dollars(worker_seconds),
    }))
}
