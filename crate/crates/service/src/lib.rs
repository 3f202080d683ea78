//! HTTP front end for scene-graph alignment sessions.
//!
//! Scenes are loaded once and never mutated. Each session works on its own
//! copy of a scene graph; messages to one session are handled one at a time.

mod error;
mod routes;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use sgalign_core::agent::{Agent, AgentTrace, SessionState};
use sgalign_core::eval::Rating;
use sgalign_core::graph_text::{ingest, DocumentError};
use sgalign_core::spatial::RelationConfig;
use sgalign_core::SceneGraph;
use thiserror::Error;

pub use error::ApiError;
pub use routes::router;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Directory receiving `sessions/<id>/trace.jsonl` style logs; nothing
    /// is written when absent.
    pub sessions_dir: Option<PathBuf>,
    pub relations: RelationConfig,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Document {
        path: PathBuf,
        source: DocumentError,
    },
    #[error("{path}: scene id '{scene_id}' is already loaded")]
    Duplicate { path: PathBuf, scene_id: String },
}

#[derive(Default)]
struct History {
    interactions: Vec<AgentTrace>,
    ratings: Vec<Rating>,
}

pub struct Session {
    id: String,
    scene_id: String,
    state: Mutex<SessionState>,
    history: Mutex<History>,
    busy: AtomicBool,
    counter: AtomicU64,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    fn snapshot(&self) -> SessionState {
        self.state.lock().expect("session state lock").clone()
    }

    fn next_interaction_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        format!("{}-{n:04}", self.id)
    }
}

/// Clears the busy flag when an interaction ends, even on panic.
struct BusyGuard(Arc<Session>);

impl BusyGuard {
    fn acquire(session: &Arc<Session>) -> Option<Self> {
        session
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| BusyGuard(session.clone()))
    }
}

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

struct Inner {
    scenes: RwLock<BTreeMap<String, SceneGraph>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    agent: Arc<Agent>,
    config: ServiceConfig,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(agent: Agent, config: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                scenes: RwLock::new(BTreeMap::new()),
                sessions: RwLock::new(HashMap::new()),
                agent: Arc::new(agent),
                config,
            }),
        }
    }

    /// Loads every `*.json` scene document in `dir`, in file name order.
    pub fn load_scenes_dir(&self, dir: &Path) -> Result<Vec<String>, LoadError> {
        let io = |source| LoadError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut loaded = Vec::new();
        for path in files {
            let text = fs::read_to_string(&path).map_err(|source| LoadError::Io {
                path: path.clone(),
                source,
            })?;
            let graph = ingest(&text, &self.inner.config.relations).map_err(|source| {
                LoadError::Document {
                    path: path.clone(),
                    source,
                }
            })?;
            let scene_id = graph.scene_id().to_string();
            if !self.insert_scene(graph) {
                return Err(LoadError::Duplicate { path, scene_id });
            }
            tracing::info!(scene = %scene_id, "scene loaded");
            loaded.push(scene_id);
        }
        Ok(loaded)
    }

    /// Adds a scene unless its id is taken.
    pub fn insert_scene(&self, graph: SceneGraph) -> bool {
        let mut scenes = self.inner.scenes.write().expect("scenes lock");
        if scenes.contains_key(graph.scene_id()) {
            return false;
        }
        scenes.insert(graph.scene_id().to_string(), graph);
        true
    }

    pub fn scene(&self, id: &str) -> Option<SceneGraph> {
        self.inner
            .scenes
            .read()
            .expect("scenes lock")
            .get(id)
            .cloned()
    }

    pub fn scene_ids(&self) -> Vec<String> {
        self.inner
            .scenes
            .read()
            .expect("scenes lock")
            .keys()
            .cloned()
            .collect()
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.inner
            .sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
    }

    fn open_session(&self, scene_id: &str) -> Option<Arc<Session>> {
        let graph = self.scene(scene_id)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let state = SessionState {
            config: self.inner.config.relations,
            ..SessionState::new(graph)
        };
        let session = Arc::new(Session {
            id: id.clone(),
            scene_id: scene_id.to_string(),
            state: Mutex::new(state),
            history: Mutex::new(History::default()),
            busy: AtomicBool::new(false),
            counter: AtomicU64::new(0),
        });
        self.inner
            .sessions
            .write()
            .expect("sessions lock")
            .insert(id, session.clone());
        Some(session)
    }

    fn session_dir(&self, session: &Session) -> Option<PathBuf> {
        self.inner
            .config
            .sessions_dir
            .as_ref()
            .map(|d| d.join(&session.id))
    }
}

/// Appends one JSON line and syncs it to disk.
fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut line = serde_json::to_string(value).map_err(std::io::Error::other)?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    file.sync_all()
}

/// Serves the API on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
