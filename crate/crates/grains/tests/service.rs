mod common;

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use grains::formats::{Checkpoint, TreeSet};
use grains::service::{router, AppState};
use grains_core::applications::Layout2D;
use grains_core::hierarchy::GroupKind;
use grains_core::synthesis::PlacedScene;
use grains_core::{validate_tree, RelPos28, SceneTree};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture() -> &'static (Checkpoint, TreeSet) {
    static F: OnceLock<(Checkpoint, TreeSet)> = OnceLock::new();
    F.get_or_init(|| (common::small_checkpoint(), common::trees(5, 30)))
}

fn state(store_dir: Option<std::path::PathBuf>) -> Arc<AppState> {
    let (ck, trees) = fixture().clone();
    Arc::new(AppState::new(ck, None, Some(trees), store_dir).unwrap())
}

async fn call(st: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = router(st.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(st: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(st, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn generate(st: &Arc<AppState>, count: usize, seed: u64) -> Vec<Value> {
    let (s, v) = call_json(st, "POST", "/api/generate", Some(json!({ "count": count, "seed": seed }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["scenes"].as_array().unwrap().clone()
}

fn tree_of(view: &Value) -> SceneTree {
    serde_json::from_value(view["tree"].clone()).unwrap()
}

fn path_str(p: &[usize]) -> String {
    p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

/// First object leaf below a wall group, with its path.
fn object_path(tree: &SceneTree) -> Option<Vec<usize>> {
    let mut found = None;
    tree.root.visit(&mut |path, node| {
        if found.is_none() && path.len() >= 2 && node.as_leaf().is_some_and(|l| l.role == grains_core::hierarchy::LeafRole::Object) {
            found = Some(path.to_vec());
        }
    });
    found
}

#[tokio::test]
async fn health_and_index() {
    let st = state(None);
    let (s, v) = call_json(&st, "GET", "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({ "status": "ok", "model": "grains-model/1" }));
    let (s, b) = call(&st, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(b).unwrap().contains("/api/generate"));
}

#[tokio::test]
async fn generation_is_seeded_and_stored() {
    let st = state(None);
    let a = generate(&st, 3, 7).await;
    let b = generate(&st, 3, 7).await;
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_ne!(x["id"], y["id"]);
        assert_eq!(x["scene"], y["scene"]);
        assert_eq!(x["revision"], 0);
        let tree = tree_of(x);
        assert!(validate_tree(&tree).structural_ok());
        let placed: PlacedScene = serde_json::from_value(x["scene"].clone()).unwrap();
        assert_eq!(placed.placements.len(), tree.object_leaves().len());
    }
    let (_, list) = call_json(&st, "GET", "/api/scenes", None).await;
    assert_eq!(list["scenes"].as_array().unwrap().len(), 6);
    let id = a[0]["id"].as_str().unwrap();
    let (s, one) = call_json(&st, "GET", &format!("/api/scenes/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(one, a[0]);
    let (s, svg) = call(&st, "GET", &format!("/api/scenes/{id}/render.svg"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(svg).unwrap().starts_with("<svg"));
}

#[tokio::test]
async fn bad_requests() {
    let st = state(None);
    assert_eq!(call(&st, "GET", "/api/scenes/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&st, "POST", "/api/generate", Some(json!({ "count": 0 }))).await.0, StatusCode::BAD_REQUEST);
    let (s, _) = call(&st, "POST", "/api/generate", Some(json!({ "count": 1, "room_type": "attic" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&st, "POST", "/api/generate", Some(json!({ "count": 1, "room_type": "kitchen" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let id = generate(&st, 1, 1).await[0]["id"].as_str().unwrap().to_string();
    let (s, _) = call(&st, "POST", &format!("/api/scenes/{id}/subtree/x-1/delete"), Some(json!({ "revision": 0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&st, "POST", &format!("/api/scenes/{id}/subtree/9-9-9/delete"), Some(json!({ "revision": 0 }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn delete_respects_revisions_and_validation() {
    let st = state(None);
    let view = generate(&st, 1, 3).await.remove(0);
    let id = view["id"].as_str().unwrap().to_string();
    let tree = tree_of(&view);
    let path = object_path(&tree).expect("an object");
    let uri = format!("/api/scenes/{id}/subtree/{}/delete", path_str(&path));

    // stale revision: conflict, nothing changes
    let (s, _) = call(&st, "POST", &uri, Some(json!({ "revision": 5 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    // the floor is mandatory
    let (s, _) = call(&st, "POST", &format!("/api/scenes/{id}/subtree/0/delete"), Some(json!({ "revision": 0 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call_json(&st, "GET", &format!("/api/scenes/{id}"), None).await.1, view);

    let (s, v) = call_json(&st, "POST", &uri, Some(json!({ "revision": 0 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["revision"], 1);
    let edited = tree_of(&v);
    assert_eq!(edited.object_leaves().len(), tree.object_leaves().len() - 1);
    assert!(validate_tree(&edited).structural_ok());
    // the same revision again is now stale
    assert_eq!(call(&st, "POST", &uri, Some(json!({ "revision": 0 }))).await.0, StatusCode::CONFLICT);
}

/// A second child of some group that is not a wall slot.
fn movable(tree: &SceneTree) -> Option<(Vec<usize>, RelPos28)> {
    let mut found = None;
    tree.root.visit(&mut |path, node| {
        if found.is_some() {
            return;
        }
        if let Some(g) = node.as_group() {
            if matches!(g.kind, GroupKind::CoOccur | GroupKind::Support) && path.len() >= 2 {
                let mut p = path.to_vec();
                p.push(1);
                found = Some((p, g.relpos[0]));
            }
        }
    });
    found
}

#[tokio::test]
async fn move_and_replace_commit_new_revisions() {
    let st = state(None);
    let views = generate(&st, 6, 11).await;
    let (view, (path, rp)) = views
        .iter()
        .find_map(|v| movable(&tree_of(v)).map(|m| (v.clone(), m)))
        .expect("a scene with a movable child");
    let id = view["id"].as_str().unwrap();
    let base = format!("/api/scenes/{id}/subtree/{}", path_str(&path));

    // re-setting the current position vector keeps the scene
    let (s, v) = call_json(&st, "POST", &format!("{base}/move"), Some(json!({ "relpos": rp, "revision": 0 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["revision"], 1);
    let before: PlacedScene = serde_json::from_value(view["scene"].clone()).unwrap();
    let after: PlacedScene = serde_json::from_value(v["scene"].clone()).unwrap();
    for p in &before.placements {
        let q = after.placements.iter().find(|q| q.id == p.id).unwrap();
        assert!((p.obb.center[0] - q.obb.center[0]).abs() < 1e-6 && (p.obb.center[1] - q.obb.center[1]).abs() < 1e-6);
    }
    // the reference child cannot move
    let mut first = path.clone();
    *first.last_mut().unwrap() = 0;
    let (s, _) = call(
        &st,
        "POST",
        &format!("/api/scenes/{id}/subtree/{}/move", path_str(&first)),
        Some(json!({ "relpos": rp, "revision": 1 })),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // replace the subtree with itself, donated by the stored scene
    let (s, v) = call_json(
        &st,
        "POST",
        &format!("{base}/replace"),
        Some(json!({ "donor_scene_id": id, "donor_path": path_str(&path), "revision": 1 })),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["revision"], 2);
    assert!(validate_tree(&tree_of(&v)).structural_ok());
}

#[tokio::test]
async fn candidates_come_from_other_scenes() {
    let st = state(None);
    let views = generate(&st, 4, 21).await;
    let id = views[0]["id"].as_str().unwrap();
    let path = object_path(&tree_of(&views[0])).unwrap();
    let (s, v) = call_json(&st, "GET", &format!("/api/scenes/{id}/subtree/{}/candidates?k=3", path_str(&path)), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let list = v["candidates"].as_array().unwrap();
    assert!(!list.is_empty() && list.len() <= 3);
    let scores: Vec<f64> = list.iter().map(|c| c["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for c in list {
        assert_ne!(c["donor_scene_id"], id);
        let donor = c["donor_scene_id"].as_str().unwrap();
        assert_eq!(call(&st, "GET", &format!("/api/scenes/{donor}"), None).await.0, StatusCode::OK);
    }
}

#[tokio::test]
async fn layout_to_scene_endpoint() {
    let st = state(None);
    let set = &fixture().1;
    let placed = grains_core::synthesis::realize_placements(&set.trees[0].without_poses(), &grains_core::Room::new(4.0, 4.0, 2.6).unwrap()).unwrap();
    let layout = grains::formats::LayoutFile::new(&Layout2D::from_scene(&placed));
    let body = json!({ "layout": layout, "n_samples": 2, "mode": "sample", "seed": 4 });
    let (s, a) = call_json(&st, "POST", "/api/layout2scene", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let (_, b) = call_json(&st, "POST", "/api/layout2scene", Some(body)).await;
    assert_eq!(a["scenes"].as_array().unwrap().len(), 2);
    assert_eq!(a["scenes"][0]["scene"], b["scenes"][0]["scene"]);
    let mut empty = serde_json::to_value(&layout).unwrap();
    empty["boxes"] = json!([]);
    let (s, _) = call(&st, "POST", "/api/layout2scene", Some(json!({ "layout": empty }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cooccurrence_metric() {
    let st = state(None);
    generate(&st, 5, 2).await;
    let (s, v) = call_json(&st, "GET", "/api/metrics/cooccurrence", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["training_scenes"], 30);
    assert_eq!(v["generated_scenes"], 5);
    let m = v["mean_similarity"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&m));
    let bare = Arc::new(AppState::new(fixture().0.clone(), None, None, None).unwrap());
    assert_eq!(call(&bare, "GET", "/api/metrics/cooccurrence", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn store_persists_across_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(Some(dir.path().to_path_buf()));
    let view = generate(&st, 1, 5).await.remove(0);
    let id = view["id"].as_str().unwrap().to_string();
    let path = object_path(&tree_of(&view)).unwrap();
    let uri = format!("/api/scenes/{id}/subtree/{}/delete", path_str(&path));
    let (_, edited) = call_json(&st, "POST", &uri, Some(json!({ "revision": 0 }))).await;
    drop(st);
    let again = state(Some(dir.path().to_path_buf()));
    let (s, v) = call_json(&again, "GET", &format!("/api/scenes/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, edited);
    // new ids continue after the restored ones
    let next = generate(&again, 1, 6).await;
    assert_ne!(next[0]["id"], json!(id));
}
