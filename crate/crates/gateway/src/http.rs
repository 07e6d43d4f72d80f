//! JSON-over-HTTP front end with one server-sent event stream per session.
//!
//! Requests authenticate with `Authorization: Bearer <token>`. The event
//! stream also accepts `?token=` because browsers cannot set headers on an
//! `EventSource`.

use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use hailchain_core::chaincode::{CoriderKind, OpenRequest, RideId};
use hailchain_core::identity::UserId;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::{Gateway, GatewayError, View};

pub type Shared = Arc<Mutex<Gateway>>;

pub fn router(gateway: Gateway) -> Router {
    shared_router(Arc::new(Mutex::new(gateway)))
}

pub fn shared_router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/places", get(places))
        .route("/register", post(register))
        .route("/login", post(login))
        .route("/logout", post(logout))
        .route("/driver/upgrade", post(upgrade))
        .route("/driver/start", post(start_driving))
        .route("/driver/stop", post(stop_driving))
        .route("/driver/offers", get(offers))
        .route("/driver/respond", post(respond))
        .route("/driver/pickup", post(pickup))
        .route("/driver/dropoff", post(dropoff))
        .route("/driver/corider", post(corider))
        .route("/rider/request", post(request_ride))
        .route("/rider/advance", post(advance))
        .route("/rides", get(rides))
        .route("/events", get(events))
        .with_state(state)
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            GatewayError::DuplicateLocalId(_) => (StatusCode::CONFLICT, "DuplicateLocalId"),
            GatewayError::AuthFailed => (StatusCode::UNAUTHORIZED, "AuthFailed"),
            GatewayError::UnknownSession => (StatusCode::UNAUTHORIZED, "UnknownSession"),
            GatewayError::NotADriver => (StatusCode::FORBIDDEN, "NotADriver"),
            GatewayError::WrongView(_) => (StatusCode::FORBIDDEN, "WrongView"),
            GatewayError::GeocodeMiss(_) => (StatusCode::UNPROCESSABLE_ENTITY, "GeocodeMiss"),
            GatewayError::RideTaken => (StatusCode::CONFLICT, "RideTaken"),
            GatewayError::TxRejected { code, .. } => (StatusCode::UNPROCESSABLE_ENTITY, code.as_str()),
            GatewayError::BadRequest(_) => (StatusCode::BAD_REQUEST, "BadRequest"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        let body = json!({ "error": code, "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, GatewayError>;

fn with<T>(state: &Shared, f: impl FnOnce(&mut Gateway) -> Result<T, GatewayError>) -> Result<T, GatewayError> {
    let mut g = state.lock().unwrap_or_else(|p| p.into_inner());
    f(&mut g)
}

fn bearer(headers: &HeaderMap) -> Result<String, GatewayError> {
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_owned())
        .ok_or(GatewayError::UnknownSession)
}

fn to_value<T: serde::Serialize>(v: T) -> ApiResult {
    Ok(Json(serde_json::to_value(v).map_err(|e| GatewayError::BadRequest(e.to_string()))?))
}

async fn health(State(s): State<Shared>) -> ApiResult {
    let h = with(&s, |g| Ok(g.health()))?;
    to_value(h)
}

async fn places(State(s): State<Shared>) -> ApiResult {
    let list: Vec<Value> = with(&s, |g| {
        Ok(g.places().iter().map(|(n, p)| json!({ "name": n, "location": p })).collect())
    })?;
    Ok(Json(json!({ "places": list })))
}

#[derive(Deserialize)]
struct RegisterBody {
    org: String,
    user: String,
    password: String,
    name: Option<String>,
}

async fn register(State(s): State<Shared>, Json(b): Json<RegisterBody>) -> ApiResult {
    let info = with(&s, |g| g.register(&b.org, &b.user, &b.password, b.name.as_deref()))?;
    to_value(info)
}

#[derive(Deserialize)]
struct LoginBody {
    org: String,
    user: String,
    password: String,
    #[serde(rename = "as", default = "rider")]
    view: View,
}

fn rider() -> View {
    View::Rider
}

async fn login(State(s): State<Shared>, Json(b): Json<LoginBody>) -> ApiResult {
    let info = with(&s, |g| g.login(&b.org, &b.user, &b.password, b.view))?;
    to_value(info)
}

async fn logout(State(s): State<Shared>, h: HeaderMap) -> ApiResult {
    let t = bearer(&h)?;
    with(&s, |g| {
        g.logout(&t);
        Ok(())
    })?;
    Ok(Json(json!({})))
}

#[derive(Deserialize)]
struct UpgradeBody {
    make: String,
    model: String,
    year: u32,
}

async fn upgrade(State(s): State<Shared>, h: HeaderMap, Json(b): Json<UpgradeBody>) -> ApiResult {
    let t = bearer(&h)?;
    with(&s, |g| g.upgrade(&t, &b.make, &b.model, b.year))?;
    Ok(Json(json!({})))
}

#[derive(Deserialize)]
struct StartBody {
    location: String,
    #[serde(default)]
    rescan: bool,
}

async fn start_driving(State(s): State<Shared>, h: HeaderMap, Json(b): Json<StartBody>) -> ApiResult {
    let t = bearer(&h)?;
    let open: Vec<OpenRequest> = with(&s, |g| g.start_driving(&t, &b.location, b.rescan))?;
    Ok(Json(json!({ "open_requests": open })))
}

async fn stop_driving(State(s): State<Shared>, h: HeaderMap) -> ApiResult {
    let t = bearer(&h)?;
    with(&s, |g| g.stop_driving(&t))?;
    Ok(Json(json!({})))
}

async fn offers(State(s): State<Shared>, h: HeaderMap) -> ApiResult {
    let t = bearer(&h)?;
    let o = with(&s, |g| g.offers(&t))?;
    Ok(Json(json!({ "offers": o })))
}

#[derive(Deserialize)]
struct RespondBody {
    key: String,
    accept: bool,
}

async fn respond(State(s): State<Shared>, h: HeaderMap, Json(b): Json<RespondBody>) -> ApiResult {
    let t = bearer(&h)?;
    let id: Option<RideId> = with(&s, |g| g.respond(&t, &b.key, b.accept))?;
    Ok(Json(json!({ "ride_id": id })))
}

#[derive(Deserialize)]
struct StopBody {
    key: String,
    location: String,
}

async fn pickup(State(s): State<Shared>, h: HeaderMap, Json(b): Json<StopBody>) -> ApiResult {
    let t = bearer(&h)?;
    let n = with(&s, |g| g.pickup(&t, &b.key, &b.location))?;
    Ok(Json(json!({ "corider_updates": n })))
}

async fn dropoff(State(s): State<Shared>, h: HeaderMap, Json(b): Json<StopBody>) -> ApiResult {
    let t = bearer(&h)?;
    let (id, n) = with(&s, |g| g.dropoff(&t, &b.key, &b.location))?;
    Ok(Json(json!({ "ride_id": id, "corider_updates": n })))
}

#[derive(Deserialize)]
struct CoriderBody {
    key: String,
    corider: UserId,
    location: String,
    kind: CoriderKind,
}

async fn corider(State(s): State<Shared>, h: HeaderMap, Json(b): Json<CoriderBody>) -> ApiResult {
    let t = bearer(&h)?;
    with(&s, |g| g.record_corider(&t, &b.key, &b.corider, &b.location, b.kind))?;
    Ok(Json(json!({})))
}

#[derive(Deserialize)]
struct RequestBody {
    from: String,
    to: String,
}

async fn request_ride(State(s): State<Shared>, h: HeaderMap, Json(b): Json<RequestBody>) -> ApiResult {
    let t = bearer(&h)?;
    let ticket = with(&s, |g| g.request_ride(&t, &b.from, &b.to))?;
    to_value(ticket)
}

async fn advance(State(s): State<Shared>, h: HeaderMap) -> ApiResult {
    let t = bearer(&h)?;
    let req = with(&s, |g| g.advance(&t))?;
    Ok(Json(json!({ "request": req })))
}

async fn rides(State(s): State<Shared>, h: HeaderMap) -> ApiResult {
    let t = bearer(&h)?;
    let hist = with(&s, |g| g.history(&t))?;
    to_value(hist)
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

async fn events(
    State(s): State<Shared>,
    h: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, GatewayError> {
    let t = match q.token {
        Some(t) => t,
        None => bearer(&h)?,
    };
    let rx = with(&s, |g| g.live_events(&t))?;
    let stream = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let data = serde_json::to_string(&ev).expect("events serialize");
                    return Some((Ok(Event::default().event(ev.name()).data(data)), rx));
                }
                // A slow reader lost some events; it can resync from /rides.
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
