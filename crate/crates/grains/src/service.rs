//! HTTP service over an in-memory scene store.
//!
//! Reads run concurrently. Each scene has its own lock, held for the whole
//! edit, and a revision number that every committed edit increments; an
//! edit naming another revision is rejected with 409. Edited trees are
//! validated before they replace the stored scene.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use grains_core::analysis::{cooccurrence_matrix, cooccurrence_similarity, DEFAULT_MIN_SUPPORT};
use grains_core::applications::{
    candidate_subtrees, delete_subtree, layout_to_scenes, move_subtree, replace_subtree, EditError, LayoutMode,
};
use grains_core::hierarchy::{realize_layout, LayoutOptions};
use grains_core::model::{DecodeLimits, ModelError};
use grains_core::synthesis::{attach_models, realize_placements, realize_placements_with, sample_scenes, ModelCatalog, PlacedScene};
use grains_core::{validate_tree, RelPos28, RoomType, SceneTree};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::formats::{self, Checkpoint, LayoutFile, TreeSet, MODEL_FORMAT, PLACED_FORMAT};
use crate::pipeline::{default_room, scenes_of};
use crate::render::render_topview;

/// Largest `count` or `n_samples` accepted in one request.
pub const MAX_BATCH: usize = 100;
/// Latents tried per requested scene before giving up.
pub const ATTEMPTS_PER_SCENE: usize = 8;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub address: String,
    pub model_path: PathBuf,
    pub catalog_path: Option<PathBuf>,
    pub store_dir: Option<PathBuf>,
    pub training_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stored {
    pub id: String,
    pub revision: u64,
    pub scene: PlacedScene,
}

#[derive(Default)]
struct Store {
    scenes: BTreeMap<String, Arc<Mutex<Stored>>>,
    next_id: u64,
}

pub struct AppState {
    checkpoint: Checkpoint,
    catalog: Option<ModelCatalog>,
    training: Option<TreeSet>,
    store_dir: Option<PathBuf>,
    store: RwLock<Store>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        let status = match &e {
            EditError::InvalidPath(_) => StatusCode::NOT_FOUND,
            EditError::EmptyLayout => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

type ApiResult<T> = Result<T, ApiError>;

impl AppState {
    pub fn new(
        checkpoint: Checkpoint,
        catalog: Option<ModelCatalog>,
        training: Option<TreeSet>,
        store_dir: Option<PathBuf>,
    ) -> anyhow::Result<Self> {
        if let Some(t) = &training {
            anyhow::ensure!(t.vocabulary == checkpoint.vocabulary, "training trees and checkpoint use different vocabularies");
        }
        let mut store = Store::default();
        if let Some(dir) = &store_dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for s in load_store(dir)? {
                let n = s.id.trim_start_matches('s').parse::<u64>().unwrap_or(0);
                store.next_id = store.next_id.max(n);
                store.scenes.insert(s.id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(Self {
            checkpoint,
            catalog,
            training,
            store_dir,
            store: RwLock::new(store),
        })
    }

    pub fn from_config(cfg: &ServeConfig) -> anyhow::Result<Self> {
        let checkpoint = formats::read_checkpoint(&cfg.model_path).context("loading the model checkpoint")?;
        let catalog = cfg.catalog_path.as_deref().map(formats::read_catalog).transpose()?;
        let training = cfg.training_path.as_deref().map(formats::read_trees).transpose()?;
        Self::new(checkpoint, catalog, training, cfg.store_dir.clone())
    }

    fn names(&self) -> &[String] {
        self.checkpoint.vocabulary.names()
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Mutex<Stored>>> {
        self.store
            .read()
            .map_err(internal)?
            .scenes
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no scene `{id}`")))
    }

    fn snapshot(&self, id: &str) -> ApiResult<Stored> {
        Ok(self.entry(id)?.lock().map_err(internal)?.clone())
    }

    /// Inserts new scenes under fresh ids, in order.
    fn insert(&self, scenes: Vec<PlacedScene>) -> ApiResult<Vec<Stored>> {
        let mut store = self.store.write().map_err(internal)?;
        let mut out = Vec::with_capacity(scenes.len());
        for scene in scenes {
            store.next_id += 1;
            let s = Stored {
                id: format!("s{:05}", store.next_id),
                revision: 0,
                scene,
            };
            self.persist(&s)?;
            store.scenes.insert(s.id.clone(), Arc::new(Mutex::new(s.clone())));
            out.push(s);
        }
        Ok(out)
    }

    fn persist(&self, s: &Stored) -> ApiResult<()> {
        let Some(dir) = &self.store_dir else { return Ok(()) };
        let body = json!({
            "format_version": PLACED_FORMAT,
            "room_type": self.checkpoint.room_type,
            "category_names": self.names(),
            "stored": s,
        });
        let path = dir.join(format!("{}.json", s.id));
        let tmp = dir.join(format!("{}.json.tmp", s.id));
        fs::write(&tmp, serde_json::to_vec_pretty(&body).map_err(internal)?).map_err(internal)?;
        fs::rename(&tmp, &path).map_err(internal)
    }

    fn view(&self, s: &Stored) -> Value {
        json!({
            "id": s.id,
            "revision": s.revision,
            "room_type": self.checkpoint.room_type,
            "category_names": self.names(),
            "scene": s.scene,
            "tree": s.scene.source_tree,
        })
    }

    /// Scene for a posed, validated tree, keeping the room of `previous`.
    fn placed(&self, tree: SceneTree, previous: &PlacedScene) -> ApiResult<PlacedScene> {
        let mut scene = realize_placements_with(&tree, &previous.room, &LayoutOptions::exact()).map_err(internal)?;
        scene.room = previous.room.clone();
        for p in &mut scene.placements {
            if let Some(old) = previous.placements.iter().find(|o| o.id == p.id) {
                p.model_ref = old.model_ref.clone();
            }
        }
        let mut tree = scene.source_tree.clone();
        with_poses(&mut tree)?;
        scene.source_tree = tree;
        if let Some(c) = &self.catalog {
            attach_models(&mut scene, c, self.checkpoint.vocabulary.names());
        }
        Ok(scene)
    }

    /// Applies `edit` to scene `id` at `revision`; nothing changes on error.
    fn mutate(
        &self,
        id: &str,
        revision: u64,
        edit: impl FnOnce(&SceneTree) -> Result<SceneTree, EditError>,
    ) -> ApiResult<Value> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().map_err(internal)?;
        if guard.revision != revision {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("scene `{id}` is at revision {}, not {revision}", guard.revision),
            ));
        }
        let tree = edit(&guard.scene.source_tree)?;
        let report = validate_tree(&tree);
        if let Some(v) = report.violations.iter().find(|v| v.is_structural()) {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{}: {}", v.code, v.message)));
        }
        let next = Stored {
            id: guard.id.clone(),
            revision: guard.revision + 1,
            scene: self.placed(tree, &guard.scene)?,
        };
        self.persist(&next)?;
        *guard = next;
        Ok(self.view(&guard))
    }
}

fn with_poses(tree: &mut SceneTree) -> ApiResult<()> {
    if !tree.is_posed() {
        *tree = realize_layout(tree, &LayoutOptions::default()).map_err(internal)?.apply(tree);
    }
    Ok(())
}

fn load_store(dir: &Path) -> anyhow::Result<Vec<Stored>> {
    #[derive(Deserialize)]
    struct File {
        format_version: String,
        stored: Stored,
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let f: File = serde_json::from_slice(&fs::read(&p)?).with_context(|| format!("reading {}", p.display()))?;
        anyhow::ensure!(f.format_version == PLACED_FORMAT, "{}: unexpected format `{}`", p.display(), f.format_version);
        out.push(f.stored);
    }
    Ok(out)
}

/// Dash-separated child indices, e.g. `1-0-2`.
pub fn parse_path(s: &str) -> ApiResult<Vec<usize>> {
    s.split('-')
        .map(|p| p.parse::<usize>().map_err(|_| ApiError::bad_request(format!("bad subtree path `{s}`"))))
        .collect()
}

pub fn format_path(p: &[usize]) -> String {
    p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/health", get(health))
        .route("/api/generate", post(generate))
        .route("/api/scenes", get(list_scenes))
        .route("/api/scenes/{id}", get(get_scene))
        .route("/api/scenes/{id}/render.svg", get(render_svg))
        .route("/api/scenes/{id}/subtree/{path}/candidates", get(candidates))
        .route("/api/scenes/{id}/subtree/{path}/replace", post(replace))
        .route("/api/scenes/{id}/subtree/{path}/delete", post(delete))
        .route("/api/scenes/{id}/subtree/{path}/move", post(move_node))
        .route("/api/layout2scene", post(layout2scene))
        .route("/api/metrics/cooccurrence", get(cooccurrence))
        .with_state(state)
}

/// Loads the model and serves until the process ends.
pub fn serve_blocking(cfg: ServeConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.address)
            .await
            .with_context(|| format!("binding {}", cfg.address))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

async fn index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "model": MODEL_FORMAT }))
}

#[derive(Debug, Deserialize)]
pub struct GenerateRequest {
    pub count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub room_type: Option<String>,
}

fn check_batch(n: usize, what: &str) -> ApiResult<()> {
    if n == 0 || n > MAX_BATCH {
        return Err(ApiError::bad_request(format!("{what} must be between 1 and {MAX_BATCH}")));
    }
    Ok(())
}

/// Decodes latents drawn in order from the seed and keeps the first
/// `count` scenes that decode within limits and validate.
fn sample_valid(state: &AppState, count: usize, seed: u64) -> ApiResult<Vec<PlacedScene>> {
    let ck = &state.checkpoint;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = default_room(ck.room_type);
    let mut out = Vec::with_capacity(count);
    let mut tried = 0;
    while out.len() < count && tried < count * ATTEMPTS_PER_SCENE {
        let batch = count - out.len();
        tried += batch;
        for r in sample_scenes(&ck.params, &mut rng, batch, DecodeLimits::default()) {
            let tree = match r {
                Ok(t) => t,
                Err(ModelError::Limit(_)) => continue,
                Err(e) => return Err(internal(e)),
            };
            if !validate_tree(&tree).structural_ok() {
                continue;
            }
            let Ok(mut scene) = realize_placements(&tree, &prior) else { continue };
            with_poses(&mut scene.source_tree)?;
            if let Some(c) = &state.catalog {
                attach_models(&mut scene, c, ck.vocabulary.names());
            }
            out.push(scene);
        }
    }
    if out.len() < count {
        return Err(internal(format!("only {} of {count} samples were valid", out.len())));
    }
    Ok(out)
}

async fn generate(State(st): State<Arc<AppState>>, Json(req): Json<GenerateRequest>) -> ApiResult<Json<Value>> {
    check_batch(req.count, "count")?;
    if let Some(rt) = &req.room_type {
        let parsed = RoomType::parse(rt).ok_or_else(|| ApiError::bad_request(format!("unknown room type `{rt}`")))?;
        if parsed != st.checkpoint.room_type {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("the model generates {} scenes", st.checkpoint.room_type.as_str()),
            ));
        }
    }
    let scenes = sample_valid(&st, req.count, req.seed.unwrap_or(0))?;
    let stored = st.insert(scenes)?;
    Ok(Json(json!({ "scenes": stored.iter().map(|s| st.view(s)).collect::<Vec<_>>() })))
}

async fn list_scenes(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let entries: Vec<Arc<Mutex<Stored>>> = st.store.read().map_err(internal)?.scenes.values().cloned().collect();
    let mut list = Vec::with_capacity(entries.len());
    for e in entries {
        let s = e.lock().map_err(internal)?;
        list.push(json!({ "id": s.id, "revision": s.revision, "objects": s.scene.placements.len() }));
    }
    Ok(Json(json!({ "scenes": list })))
}

async fn get_scene(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    Ok(Json(st.view(&st.snapshot(&id)?)))
}

async fn render_svg(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = st.snapshot(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], render_topview(&s.scene, st.names())).into_response())
}

#[derive(Debug, Deserialize)]
pub struct CandidateQuery {
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

/// Donor subtrees from the other stored scenes, best first.
async fn candidates(
    State(st): State<Arc<AppState>>,
    UrlPath((id, path)): UrlPath<(String, String)>,
    Query(q): Query<CandidateQuery>,
) -> ApiResult<Json<Value>> {
    let path = parse_path(&path)?;
    let target = st.snapshot(&id)?;
    let mut ids = Vec::new();
    let mut pool = Vec::new();
    let entries: Vec<Arc<Mutex<Stored>>> = st.store.read().map_err(internal)?.scenes.values().cloned().collect();
    for e in entries {
        let s = e.lock().map_err(internal)?;
        if s.id != id {
            ids.push(s.id.clone());
            pool.push(s.scene.source_tree.clone());
        }
    }
    let found = candidate_subtrees(&pool, &target.scene.source_tree, &path, q.k)?;
    let list: Vec<Value> = found
        .into_iter()
        .map(|c| json!({ "donor_scene_id": ids[c.scene], "donor_path": format_path(&c.path), "score": c.score }))
        .collect();
    Ok(Json(json!({ "scene_id": id, "revision": target.revision, "candidates": list })))
}

#[derive(Debug, Deserialize)]
pub struct ReplaceRequest {
    pub donor_scene_id: String,
    pub donor_path: String,
    pub revision: u64,
}

async fn replace(
    State(st): State<Arc<AppState>>,
    UrlPath((id, path)): UrlPath<(String, String)>,
    Json(req): Json<ReplaceRequest>,
) -> ApiResult<Json<Value>> {
    let path = parse_path(&path)?;
    let donor_path = parse_path(&req.donor_path)?;
    // the donor is read before the target is locked, so self-donation cannot deadlock
    let donor = st.snapshot(&req.donor_scene_id)?.scene.source_tree;
    let max_nodes = DecodeLimits::default().max_nodes;
    st.mutate(&id, req.revision, |t| replace_subtree(t, &path, &donor, &donor_path, max_nodes)).map(Json)
}

#[derive(Debug, Deserialize)]
pub struct DeleteRequest {
    pub revision: u64,
}

async fn delete(
    State(st): State<Arc<AppState>>,
    UrlPath((id, path)): UrlPath<(String, String)>,
    Json(req): Json<DeleteRequest>,
) -> ApiResult<Json<Value>> {
    let path = parse_path(&path)?;
    st.mutate(&id, req.revision, |t| delete_subtree(t, &path)).map(Json)
}

#[derive(Debug, Deserialize)]
pub struct MoveRequest {
    pub relpos: RelPos28,
    pub revision: u64,
}

async fn move_node(
    State(st): State<Arc<AppState>>,
    UrlPath((id, path)): UrlPath<(String, String)>,
    Json(req): Json<MoveRequest>,
) -> ApiResult<Json<Value>> {
    let path = parse_path(&path)?;
    st.mutate(&id, req.revision, |t| move_subtree(t, &path, req.relpos)).map(Json)
}

#[derive(Debug, Deserialize)]
pub struct LayoutRequest {
    pub layout: LayoutFile,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_mode")]
    pub mode: LayoutMode,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_samples() -> usize {
    1
}

fn default_mode() -> LayoutMode {
    LayoutMode::Mean
}

async fn layout2scene(State(st): State<Arc<AppState>>, Json(req): Json<LayoutRequest>) -> ApiResult<Json<Value>> {
    check_batch(req.n_samples, "n_samples")?;
    let layout = req.layout.into_layout().map_err(ApiError::bad_request)?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed.unwrap_or(0));
    let ck = &st.checkpoint;
    let mut scenes = layout_to_scenes(&ck.params, &ck.vocabulary, &layout, req.n_samples, req.mode, &mut rng)?;
    for s in &mut scenes {
        with_poses(&mut s.source_tree)?;
        if let Some(c) = &st.catalog {
            attach_models(s, c, ck.vocabulary.names());
        }
    }
    let stored = st.insert(scenes)?;
    Ok(Json(json!({ "scenes": stored.iter().map(|s| st.view(s)).collect::<Vec<_>>() })))
}

/// Co-occurrence similarity between the training scenes and the store.
async fn cooccurrence(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let training = st
        .training
        .as_ref()
        .ok_or_else(|| ApiError::not_found("the service was started without training trees"))?;
    let train_scenes = scenes_of(training).map_err(internal)?;
    let entries: Vec<Arc<Mutex<Stored>>> = st.store.read().map_err(internal)?.scenes.values().cloned().collect();
    let mut generated = Vec::with_capacity(entries.len());
    for e in entries {
        generated.push(e.lock().map_err(internal)?.scene.to_scene(st.checkpoint.room_type));
    }
    let n = st.checkpoint.vocabulary.len();
    let sim = cooccurrence_similarity(
        &cooccurrence_matrix(&train_scenes, n),
        &cooccurrence_matrix(&generated, n),
        DEFAULT_MIN_SUPPORT,
    );
    let names = st.names();
    let pairs: Vec<Value> = sim
        .entries
        .iter()
        .map(|e| {
            json!({
                "category": names[e.c1],
                "given": names[e.c2],
                "training": e.training,
                "generated": e.generated,
                "similarity": e.similarity,
            })
        })
        .collect();
    Ok(Json(json!({
        "training_scenes": train_scenes.len(),
        "generated_scenes": generated.len(),
        "min_support": DEFAULT_MIN_SUPPORT,
        "mean_similarity": sim.mean,
        "pairs": pairs,
    })))
}
