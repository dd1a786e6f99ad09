//! Drives the HTTP API in-process: upload, run, display, select, logs.
//! `dvats serve` exposes the same router on a socket.
//!
//! cargo run --release --example service_roundtrip

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request};
use axum::Router;
use dvats::cache::ReactiveCache;
use dvats::pipeline::Pipeline;
use dvats::series::DISPLAY_CAP;
use dvats::service::{router, AppState};
use dvats::store::ArtifactStore;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, req: Request<Body>) -> (u16, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status().as_u16();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ArtifactStore::open(dir.path()).unwrap());
    let app = router(AppState::new(Pipeline::new(store, Arc::new(ReactiveCache::default())), DISPLAY_CAP));

    let mut csv = String::from("time,power\n");
    for i in 0..20_000u64 {
        let v = ((i as f64) / 900.0 * std::f64::consts::TAU).sin().max(0.0) * 80.0;
        csv.push_str(&format!("{},{v:.3}\n", 1_564_617_600 + 4 * i));
    }
    let b = "BOUNDARY";
    let body = format!(
        "--{b}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"plant.csv\"\r\n\r\n{csv}\r\n--{b}--\r\n"
    );
    let upload = Request::post("/datasets")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={b}"))
        .body(Body::from(body))
        .unwrap();
    let (st, v) = call(&app, upload).await;
    println!("POST /datasets -> {st} {} rows", v[0]["metadata"]["rows"]);

    let req = json!({
        "dataset": { "name": "plant" },
        "resample_factor": 2,
        "window": 48,
        "stride": 1,
        "encoder": { "variant": { "kind": "meanpool", "pool": 4 } },
        "dr": { "algorithm": "umap", "n_neighbors": 15, "min_dist": 0.1, "random_state": 0 },
        "clustering": { "min_cluster_size": 25 }
    });
    let (st, v) = call(&app, post("/pipeline?wait=true", req.clone())).await;
    let id = v["id"].as_str().unwrap().to_string();
    println!("POST /pipeline -> {st} id={id} points={} clusters={} silhouette={}", v["points"], v["n_clusters"], v["silhouette"]);

    let (st, v) = call(&app, get(&format!("/pipeline/{id}/display"))).await;
    println!(
        "GET display -> {st} {} of {} points, {} series points",
        v["point_indices"].as_array().unwrap().len(),
        v["total_points"],
        v["series"]["channels"][0]["values"].as_array().unwrap().len()
    );
    let (st, v) = call(&app, get(&format!("/pipeline/{id}/display?cap=20000"))).await;
    println!("GET display cap=20000 -> {st} {}", v["error"]);

    let (_, v) = call(&app, post(&format!("/pipeline/{id}/selection"), json!({ "direction": "points_to_time", "indices": [3, 4] }))).await;
    println!("points {{3,4}} -> {}", v["ranges"]);
    let (_, v) = call(&app, post(&format!("/pipeline/{id}/selection"), json!({ "direction": "time_to_points", "start": 60, "end": 60 }))).await;
    println!("time 60 -> {} points", v["indices"].as_array().unwrap().len());

    let (st, _) = call(&app, post("/pipeline?wait=true", req)).await;
    let (_, logs) = call(&app, get("/logs")).await;
    println!("repeat POST /pipeline -> {st}; computes per stage:");
    for s in logs["stages"].as_array().unwrap() {
        println!("  {:<8} computes={} hits={}", s["stage"].as_str().unwrap(), s["compute_count"], s["hit_count"]);
    }

    let (st, v) = call(&app, get("/artifacts/dataset/plant/1/meta")).await;
    println!("GET meta -> {st} {}", v["metadata"]);
    let (st, _) = call(&app, get("/pipeline/unknown")).await;
    println!("GET /pipeline/unknown -> {st}");
}
