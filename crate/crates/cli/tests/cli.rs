use std::path::Path;
use std::process::{Command, Output};

use plaquekit::report::PlateAnalysis;
use serde_json::Value;

fn plaquekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plaquekit"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn render(dir: &Path, seed: &str) {
    let out = plaquekit(&[
        "render-synthetic",
        "--wells",
        "6",
        "--plaques-per-well",
        "5,10,15,20,25,30",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn render_is_seeded() {
    let t = tempfile::tempdir().unwrap();
    render(&t.path().join("a"), "7");
    render(&t.path().join("b"), "7");
    render(&t.path().join("c"), "8");
    let read = |d: &str, f: &str| std::fs::read(t.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "plate.png"), read("b", "plate.png"));
    assert_eq!(read("a", "truth.json"), read("b", "truth.json"));
    assert_ne!(read("a", "plate.png"), read("c", "plate.png"));
}

#[test]
fn analyze_titer_eval_round() {
    let t = tempfile::tempdir().unwrap();
    let fixture = t.path().join("fixture");
    render(&fixture, "3");
    let scheme = t.path().join("scheme.json");
    std::fs::write(&scheme, r#"{"volume_ml": 0.1, "start_exponent": 2, "fold": 10}"#).unwrap();
    let out = t.path().join("out");
    let plate = fixture.join("plate.png");
    let a = ok(&plaquekit(&[
        "analyze",
        plate.to_str().unwrap(),
        "--layout",
        "2x3",
        "--scheme",
        scheme.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--json",
    ]));
    for f in ["analysis.json", "titer.csv", "overlay.png"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let stored = PlateAnalysis::from_json(&std::fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&stored).unwrap(), a);
    let counts: Vec<usize> = stored.wells.iter().map(|w| w.count).collect();
    assert_eq!(counts, vec![5, 10, 15, 20, 25, 30]);

    let analysis = out.join("analysis.json");
    let titer = ok(&plaquekit(&[
        "titer",
        analysis.to_str().unwrap(),
        "--scheme",
        scheme.to_str().unwrap(),
        "--json",
    ]));
    assert_eq!(titer, serde_json::to_value(stored.titer.as_ref().unwrap()).unwrap());

    let truth = fixture.join("truth.json");
    let same = ok(&plaquekit(&[
        "eval",
        "--gt",
        truth.to_str().unwrap(),
        "--pred",
        truth.to_str().unwrap(),
        "--json",
    ]));
    let pr = same["plaque_pr"].as_array().unwrap();
    assert_eq!(pr.len(), 10);
    assert!(pr.iter().all(|p| p["precision"] == 1.0 && p["recall"] == 1.0));

    let scored = ok(&plaquekit(&[
        "eval",
        "--gt",
        truth.to_str().unwrap(),
        "--pred",
        analysis.to_str().unwrap(),
        "--iou-thresholds",
        "0.5",
        "--json",
    ]));
    assert_eq!(scored["wells_compared"], 6);
    assert!(scored["plaque_pr"][0]["recall"].as_f64().unwrap() > 0.95);
}

#[test]
fn blank_image_fails_with_diagnostic() {
    let t = tempfile::tempdir().unwrap();
    let img = image::RgbImage::from_pixel(400, 300, image::Rgb([235, 235, 235]));
    let path = t.path().join("blank.png");
    img.save(&path).unwrap();
    let scheme = t.path().join("scheme.json");
    std::fs::write(&scheme, r#"{"volume_ml": 0.1, "start_exponent": 1, "fold": 10}"#).unwrap();
    let out = t.path().join("out");
    let r = plaquekit(&[
        "analyze",
        path.to_str().unwrap(),
        "--layout",
        "2x3",
        "--scheme",
        scheme.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("no wells detected"));
    assert!(out.join("diagnostic.png").is_file());
}

#[test]
fn bad_arguments_exit_nonzero() {
    assert!(
        !plaquekit(&["analyze", "x.png", "--layout", "3by4", "--scheme", "s.json", "--out", "o"])
            .status
            .success()
    );
    assert!(!plaquekit(&["eval", "--gt", "missing.json", "--pred", "missing.json"])
        .status
        .success());
}
