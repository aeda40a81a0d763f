mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::http::{Method, StatusCode};
use common::*;
use plaquekit::pipeline::Store;
use plaquekit::raster::io;
use serde_json::{json, Value};

async fn analysed_plate(app: &axum::Router) -> (String, u64) {
    let up = upload(app, &plate_png([31, 10, 15, 20, 25, 30], 2), "2x3", SCHEME).await;
    assert_eq!(up.status, StatusCode::CREATED, "{}", up.text());
    let id = up.json()["plate_id"].as_str().unwrap().to_string();
    let an = send(
        app,
        Method::POST,
        &format!("/api/plates/{id}/analyze?wait=true"),
        None,
        vec![],
    )
    .await;
    assert_eq!(an.status, StatusCode::OK, "{}", an.text());
    assert_eq!(an.json()["status"], "analyzed");
    (id, an.version().unwrap())
}

fn add_box(version: u64, row: usize, col: usize) -> Value {
    json!({
        "version": version,
        "row": row,
        "col": col,
        "action": {"type": "add_plaque", "bbox": [20, 20, 12, 12]},
        "author": "reviewer"
    })
}

#[tokio::test]
async fn upload_analyze_correct_titer() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(Store::open(dir.path()).unwrap()));
    let (id, v) = analysed_plate(&app).await;

    let plate = get(&app, &format!("/api/plates/{id}")).await;
    assert_eq!(plate.status, StatusCode::OK);
    let p = plate.json();
    assert_eq!(p["record"]["version"], v);
    let automated: Vec<u64> = p["analysis"]["wells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["count"].as_u64().unwrap())
        .collect();
    let effective: Vec<u64> = p["effective"]["wells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["count"].as_u64().unwrap())
        .collect();
    assert_eq!(automated, vec![31, 10, 15, 20, 25, 30]);
    assert_eq!(automated, effective);

    let well = get(&app, &format!("/api/plates/{id}/wells/0/0")).await.json();
    assert_eq!(well["well"]["count"], 31);
    let side = well["crop"]["side"].as_u64().unwrap();
    let crop = get(&app, &format!("/api/plates/{id}/wells/0/0/crop.png")).await;
    assert_eq!(crop.headers["content-type"], "image/png");
    assert_eq!(io::decode_image(&crop.body).unwrap().into_rgb().width() as u64, side);

    let c1 = post_json(&app, &format!("/api/plates/{id}/corrections"), &add_box(v, 0, 0)).await;
    assert_eq!(c1.status, StatusCode::OK, "{}", c1.text());
    let c2 = post_json(&app, &format!("/api/plates/{id}/corrections"), &add_box(v + 1, 0, 0)).await;
    let body = c2.json();
    assert_eq!(body["version"], v + 2);
    assert_eq!(c2.version(), Some(v + 2));
    assert_eq!(body["wells"][0]["count"], 33);
    assert_eq!(body["wells"][0]["automated_count"], 31);

    let titer = get(&app, &format!("/api/plates/{id}/titer")).await;
    assert_eq!(titer.json(), body["titer"]);
    assert_eq!(titer.json()["per_well"][0]["count"], 33);
    let csv = get(&app, &format!("/api/plates/{id}/export.csv")).await.text();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("plate_id,row,col,dilution,count,included,pfu_per_ml,log10_pfu_per_ml")
    );
    assert!(lines.next().unwrap().starts_with(&format!("{id},0,0,0.01,33,true,")));
}

#[tokio::test]
async fn contract_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(Store::open(dir.path()).unwrap()));
    assert_eq!(
        get(&app, "/api/plates/doesnotexist").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(get(&app, "/api/plates/../etc").await.status, StatusCode::NOT_FOUND);

    let png = plate_png([3, 4, 5, 6, 7, 8], 4);
    let bad = upload(
        &app,
        &png,
        "2x3",
        r#"{"volume_ml": -1, "start_exponent": 1, "fold": 10}"#,
    )
    .await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad = upload(
        &app,
        &png,
        "2x3",
        r#"{"volume_ml": 0.1, "start_exponent": 1, "fold": 10, "extra": 1}"#,
    )
    .await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        upload(&app, &png, "two by three", SCHEME).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        upload(&app, b"not a png", "2x3", SCHEME).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let up = upload(&app, &png, "2x3", SCHEME).await.json();
    let id = up["plate_id"].as_str().unwrap().to_string();
    let early = post_json(&app, &format!("/api/plates/{id}/corrections"), &add_box(1, 0, 0)).await;
    assert_eq!(early.status, StatusCode::CONFLICT);
    assert_eq!(
        get(&app, &format!("/api/plates/{id}/titer")).await.status,
        StatusCode::CONFLICT
    );

    let an = send(
        &app,
        Method::POST,
        &format!("/api/plates/{id}/analyze?wait=true"),
        None,
        vec![],
    )
    .await;
    let v = an.version().unwrap();
    let stale = post_json(&app, &format!("/api/plates/{id}/corrections"), &add_box(v - 1, 0, 0)).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.json()["current_version"], v);

    let dead = json!({"version": v, "row": 0, "col": 0, "action": {"type": "remove_plaque", "instance_id": 999}});
    let r = post_json(&app, &format!("/api/plates/{id}/corrections"), &dead).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["seq"], 1);
    let malformed = json!({"version": v, "row": 0, "col": 0, "action": {"type": "paint"}});
    let r = post_json(&app, &format!("/api/plates/{id}/corrections"), &malformed).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    // rejected events leave the version alone
    assert_eq!(get(&app, &format!("/api/plates/{id}")).await.version(), Some(v));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn background_analysis_is_polled() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Arc::new(Store::open(dir.path()).unwrap()));
    let up = upload(&app, &plate_png([3, 4, 5, 6, 7, 8], 6), "2x3", SCHEME)
        .await
        .json();
    let id = up["plate_id"].as_str().unwrap().to_string();
    let r = send(&app, Method::POST, &format!("/api/plates/{id}/analyze"), None, vec![]).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let mut status = String::new();
    for _ in 0..600 {
        status = get(&app, &format!("/api/plates/{id}")).await.json()["record"]["status"]
            .as_str()
            .unwrap()
            .to_string();
        if status != "analyzing" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(status, "analyzed");
}

#[tokio::test]
async fn records_survive_a_restart_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let app1 = app(Arc::new(Store::open(dir.path()).unwrap()));
    let (id, v) = analysed_plate(&app1).await;
    post_json(&app1, &format!("/api/plates/{id}/corrections"), &add_box(v, 1, 2)).await;
    let before = get(&app1, &format!("/api/plates/{id}")).await.body;
    let app2 = app(Arc::new(Store::open(dir.path()).unwrap()));
    assert_eq!(get(&app2, &format!("/api/plates/{id}")).await.body, before);
    let list = get(&app2, "/api/plates").await.json();
    assert_eq!(list["plates"], json!([id]));
}

#[tokio::test]
async fn serves_ui_bundle_when_given() {
    let data = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<!doctype html><title>review</title>").unwrap();
    let app = plaquekit_cli::server::router(Arc::new(Store::open(data.path()).unwrap()), Some(ui.path().into()));
    let page = get(&app, "/index.html").await;
    assert_eq!(page.status, StatusCode::OK);
    assert!(page.text().contains("review"));
    assert_eq!(get(&app, "/api/plates").await.status, StatusCode::OK);
}
