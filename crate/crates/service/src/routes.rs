use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sgalign_core::agent::{AgentTrace, TraceStatus};
use sgalign_core::eval::{session_metrics, Rating, SessionMetrics};
use sgalign_core::graph_text::{ingest, object_sentence, serialize};
use sgalign_core::tools::{descriptors, resolve_click, Click, Highlight, ToolError};
use sgalign_core::{NodeId, ObjectNode, SceneGraph, Vec3, ViewerPose};

use crate::{append_jsonl, ApiError, AppState, BusyGuard, Session};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes).post(create_scene))
        .route("/scenes/{id}/graph", get(scene_graph))
        .route("/scenes/{id}/sessions", post(create_session))
        .route("/sessions/{id}/viewer", post(set_viewer))
        .route("/sessions/{id}/mark", post(set_mark))
        .route("/sessions/{id}/message", post(message))
        .route("/sessions/{id}/rate", post(rate))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/graph", get(session_graph))
        .route("/sessions/{id}/promote", post(promote))
        .route("/tools", get(tools))
        .with_state(state)
}

/// JSON body whose deserialization errors carry the failing field path.
pub struct Body<T>(pub T);

impl<S, T> FromRequest<S> for Body<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::validation(".", e.body_text()))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de)
            .map(Body)
            .map_err(|e| ApiError::validation(e.path().to_string(), e.into_inner().to_string()))
    }
}

fn find_session(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    state
        .session(id)
        .ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
}

/// `{"graph": <canonical document>, "revision": n}`, byte-stable for an
/// unchanged graph.
fn graph_response(g: &SceneGraph) -> Response {
    let body = format!(
        "{{\"graph\":{},\"revision\":{}}}",
        serialize(g).trim_end(),
        g.revision()
    );
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn persist<T: Serialize + Send + 'static>(
    path: Option<std::path::PathBuf>,
    value: T,
) -> Result<(), ApiError> {
    let Some(path) = path else {
        return Ok(());
    };
    tokio::task::spawn_blocking(move || append_jsonl(&path, &value))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(format!("cannot write log: {e}")))
}

async fn list_scenes(State(state): State<AppState>) -> Json<Value> {
    Json(json!({"scenes": state.scene_ids()}))
}

async fn tools() -> Json<Value> {
    Json(json!({"tools": descriptors()}))
}

async fn create_scene(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let text =
        std::str::from_utf8(&body).map_err(|_| ApiError::validation(".", "body is not UTF-8"))?;
    let graph = ingest(text, &state.inner.config.relations)
        .map_err(|e| ApiError::validation(e.path().to_string(), e.to_string()))?;
    let scene_id = graph.scene_id().to_string();
    let counts = json!({"scene_id": scene_id, "objects": graph.len(), "edges": graph.edge_count()});
    if !state.insert_scene(graph) {
        return Err(ApiError::Conflict(format!(
            "scene '{scene_id}' already exists"
        )));
    }
    Ok((StatusCode::CREATED, Json(counts)))
}

async fn scene_graph(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let g = state
        .scene(&id)
        .ok_or_else(|| ApiError::NotFound(format!("no scene '{id}'")))?;
    Ok(graph_response(&g))
}

async fn create_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let session = state
        .open_session(&id)
        .ok_or_else(|| ApiError::NotFound(format!("no scene '{id}'")))?;
    let revision = session.snapshot().graph.revision();
    tracing::info!(session = %session.id, scene = %id, "session opened");
    Ok((
        StatusCode::CREATED,
        Json(json!({"session_id": session.id, "scene_id": id, "revision": revision})),
    ))
}

async fn session_graph(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = find_session(&state, &id)?;
    Ok(graph_response(&session.snapshot().graph))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewerBody {
    position: Vec3,
    yaw: f64,
}

#[derive(Debug, Serialize)]
struct ViewerReply {
    position: Vec3,
    yaw: f64,
}

async fn set_viewer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(body): Body<ViewerBody>,
) -> Result<Json<ViewerReply>, ApiError> {
    let session = find_session(&state, &id)?;
    if !body.position.is_finite() {
        return Err(ApiError::validation(
            "position",
            "coordinates must be finite",
        ));
    }
    if !body.yaw.is_finite() {
        return Err(ApiError::validation("yaw", "yaw must be finite"));
    }
    let pose = ViewerPose::new(body.position, body.yaw);
    session.state.lock().expect("session state lock").viewer = pose;
    let reply = ViewerReply {
        position: pose.position,
        yaw: pose.yaw(),
    };
    let path = state.session_dir(&session).map(|d| d.join("events.jsonl"));
    persist(
        path,
        json!({"event": "viewer", "position": reply.position, "yaw": reply.yaw}),
    )
    .await?;
    Ok(Json(reply))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkBody {
    #[serde(default)]
    object_id: Option<NodeId>,
    #[serde(default)]
    point: Option<Vec3>,
}

#[derive(Debug, Serialize)]
struct MarkReply {
    mark: Click,
    object: ObjectNode,
    sentence: String,
}

async fn set_mark(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(body): Body<MarkBody>,
) -> Result<Json<MarkReply>, ApiError> {
    let session = find_session(&state, &id)?;
    let click = match (body.object_id, body.point) {
        (Some(object_id), None) => Click::Node { object_id },
        (None, Some(point)) => Click::Point { point },
        _ => {
            return Err(ApiError::validation(
                "object_id",
                "give exactly one of object_id or point",
            ))
        }
    };
    let object = {
        let mut s = session.state.lock().expect("session state lock");
        let object = resolve_click(&click, &s.graph).map_err(|e| match e {
            ToolError::UnknownObject(n) => {
                ApiError::NotFound(format!("no object {n} in session '{id}'"))
            }
            other => ApiError::validation("point", other.to_string()),
        })?;
        s.mark = Some(click);
        object
    };
    let reply = MarkReply {
        mark: click,
        sentence: object_sentence(&object),
        object,
    };
    let path = state.session_dir(&session).map(|d| d.join("events.jsonl"));
    persist(
        path,
        json!({"event": "mark", "mark": click, "object_id": reply.object.id}),
    )
    .await?;
    Ok(Json(reply))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
    #[serde(default)]
    task_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct MessageReply {
    interaction_id: String,
    final_response: String,
    status: TraceStatus,
    steps: AgentTrace,
    highlights: Vec<Highlight>,
    graph_revision: u64,
}

async fn message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(body): Body<MessageBody>,
) -> Result<Json<MessageReply>, ApiError> {
    let session = find_session(&state, &id)?;
    if body.text.trim().is_empty() {
        return Err(ApiError::validation(
            "text",
            "message text must not be empty",
        ));
    }
    let guard = BusyGuard::acquire(&session).ok_or_else(|| {
        ApiError::Conflict(format!("session '{id}' is already handling a message"))
    })?;

    let interaction_id = session.next_interaction_id();
    let task_id = body.task_id.unwrap_or_else(|| session.id.clone());
    let mut working = session.snapshot();
    let agent = state.inner.agent.clone();
    let log = state.session_dir(&session).map(|d| d.join("trace.jsonl"));
    let run_id = interaction_id.clone();
    let (trace, working) = tokio::task::spawn_blocking(move || {
        let trace = agent.run(run_id, &body.text, None, Some(task_id), &mut working);
        if let Some(path) = &log {
            sgalign_core::agent::append_trace(path, &trace).map_err(|e| e.to_string())?;
        }
        Ok::<_, String>((trace, working))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(|e| ApiError::Internal(format!("cannot write trace: {e}")))?;

    let graph_revision = working.graph.revision();
    session.state.lock().expect("session state lock").graph = working.graph;
    session
        .history
        .lock()
        .expect("session history lock")
        .interactions
        .push(trace.clone());
    drop(guard);
    tracing::info!(session = %id, interaction = %interaction_id, status = ?trace.status, steps = trace.steps.len(), "interaction finished");

    Ok(Json(MessageReply {
        interaction_id,
        final_response: trace.final_response.clone(),
        status: trace.status,
        highlights: trace.highlights.clone(),
        steps: trace,
        graph_revision,
    }))
}

async fn rate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(rating): Body<Rating>,
) -> Result<Json<Value>, ApiError> {
    let session = find_session(&state, &id)?;
    {
        let history = session.history.lock().expect("session history lock");
        if !history
            .interactions
            .iter()
            .any(|t| t.interaction_id == rating.interaction_id)
        {
            return Err(ApiError::NotFound(format!(
                "no interaction '{}' in session '{id}'",
                rating.interaction_id
            )));
        }
    }
    let path = state.session_dir(&session).map(|d| d.join("ratings.jsonl"));
    persist(path, rating.clone()).await?;
    let mut history = session.history.lock().expect("session history lock");
    history
        .ratings
        .retain(|r| r.interaction_id != rating.interaction_id);
    history.ratings.push(rating.clone());
    Ok(Json(json!({"recorded": rating})))
}

async fn metrics(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionMetrics>, ApiError> {
    let session = find_session(&state, &id)?;
    let history = session.history.lock().expect("session history lock");
    Ok(Json(session_metrics(
        &history.interactions,
        &history.ratings,
        &[],
        &BTreeMap::new(),
    )))
}

async fn trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = find_session(&state, &id)?;
    let history = session.history.lock().expect("session history lock");
    Ok(Json(json!({
        "session_id": session.id,
        "scene_id": session.scene_id,
        "interactions": history.interactions,
        "ratings": history.ratings,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromoteBody {
    scene_id: String,
}

async fn promote(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(body): Body<PromoteBody>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let session = find_session(&state, &id)?;
    let scene_id = body.scene_id.trim();
    if scene_id.is_empty() {
        return Err(ApiError::validation(
            "scene_id",
            "scene id must not be empty",
        ));
    }
    let g = session.snapshot().graph;
    let promoted = SceneGraph::from_parts(
        scene_id,
        g.nodes().cloned().collect::<Vec<_>>(),
        g.edges().copied().collect::<Vec<_>>(),
    )
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    if !state.insert_scene(promoted) {
        return Err(ApiError::Conflict(format!(
            "scene '{scene_id}' already exists"
        )));
    }
    tracing::info!(session = %id, scene = %scene_id, "session graph promoted");
    Ok((StatusCode::CREATED, Json(json!({"scene_id": scene_id}))))
}
