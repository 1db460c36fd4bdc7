use std::path::Path;
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{header, Method, Request};
use http_body_util::BodyExt;
use tempfile::TempDir;
use tower::ServiceExt;

use knoblab::explain::CounterfactualReport;
use knoblab::persist::{encode_png, load_model, read_manifest, save_model};
use knoblab::regressor::RegressorModel;
use knoblab::{render_edit, AttributeVector};
use knoblab_cli::service::{router, AppState};

const SUBCOMMANDS: [&str; 8] = ["synth-data", "train", "predict", "render", "sweep", "counterfactual", "gradcheck", "serve"];
const ATTRS: &str = "0.4,0.3,0.6,0.5";

fn knoblab(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_knoblab"));
    cmd.args(args).env_remove("KNOBLAB_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    knoblab(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn assert_ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stdout: {}\nstderr: {}", stdout(o), stderr(o));
}

fn base() -> AttributeVector {
    AttributeVector::new(0.4, 0.3, 0.6, 0.5).unwrap()
}

/// Untrained 32x32 checkpoint; every model-backed command only needs some fixed weights.
fn model_file(dir: &TempDir) -> String {
    let path = dir.path().join("model.knob");
    save_model(&RegressorModel::init(32, 9).unwrap(), &path).unwrap();
    path.to_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero_everywhere() {
    assert_ok(&run(&["--help"]));
    assert_ok(&run(&["--version"]));
    for sub in SUBCOMMANDS {
        let o = run(&[sub, "--help"]);
        assert_ok(&o);
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["frobnicate"],
        vec!["render", "--seed", "1", "--attrs", ATTRS, "--out", "x.pgm", "--bogus"],
        vec!["render", "--seed", "1", "--attrs", "0.1,0.2,0.3", "--out", "x.pgm"],
        vec!["render", "--seed", "1", "--attrs", "0.1,0.2,0.3,1.4", "--out", "x.pgm"],
        vec!["sweep", "--model", "m", "--seed", "1", "--attrs", ATTRS, "--index", "0", "--grid", "0:1"],
        vec!["counterfactual", "--model", "m", "--seed", "1", "--attrs", ATTRS, "--target", "1", "--norm", "3"],
        vec!["predict", "--seed", "1"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn runtime_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.knob");
    let o = run(&["predict", "--model", path_str(&missing), "--seed", "1", "--attrs", ATTRS]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: loading model"), "{}", stderr(&o));

    let model = model_file(&dir);
    let o = run(&["sweep", "--model", &model, "--seed", "1", "--attrs", ATTRS, "--index", "7"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["render", "--seed", "1", "--attrs", ATTRS, "--out", path_str(&dir.path().join("x.bmp"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["train", "--data", path_str(dir.path()), "--out", path_str(&dir.path().join("m.knob"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_data_is_bit_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_ok(&run(&["synth-data", "--lots", "30", "--tiles", "200", "--seed", "7", "--out", path_str(out)]));
    }
    let bytes_a = std::fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(bytes_a, std::fs::read(b.join("manifest.json")).unwrap());
    let m = read_manifest(&a.join("manifest.json")).unwrap();
    assert_eq!((m.lots.len(), m.samples.len()), (30, 6000));
}

#[test]
fn env_seed_overrides_default_master_seed() {
    let dir = TempDir::new().unwrap();
    let out = |name: &str| dir.path().join(name);
    assert_ok(&run(&["synth-data", "--lots", "4", "--tiles", "3", "--out", path_str(&out("default"))]));
    assert_ok(&run(&["synth-data", "--lots", "4", "--tiles", "3", "--seed", "7", "--out", path_str(&out("seven"))]));
    let o = knoblab(&["synth-data", "--lots", "4", "--tiles", "3", "--out", path_str(&out("env"))])
        .env("KNOBLAB_SEED", "99")
        .output()
        .unwrap();
    assert_ok(&o);
    assert_ok(&run(&["synth-data", "--lots", "4", "--tiles", "3", "--seed", "99", "--out", path_str(&out("flag"))]));
    let read = |name: &str| std::fs::read(out(name).join("manifest.json")).unwrap();
    assert_eq!(read("default"), read("seven"));
    assert_eq!(read("env"), read("flag"));
    assert_ne!(read("env"), read("default"));
}

#[test]
fn render_writes_the_library_image() {
    let dir = TempDir::new().unwrap();
    let png = dir.path().join("tile.png");
    assert_ok(&run(&["render", "--seed", "5", "--attrs", ATTRS, "--out", path_str(&png)]));
    let expected = encode_png(&render_edit(5, &base(), 64).unwrap()).unwrap();
    assert_eq!(std::fs::read(&png).unwrap(), expected);

    let pgm = dir.path().join("tile.pgm");
    assert_ok(&run(&["render", "--seed", "5", "--attrs", ATTRS, "--resolution", "32", "--out", path_str(&pgm)]));
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5 32 32 255\n"));
    assert_eq!(bytes.len(), b"P5 32 32 255\n".len() + 32 * 32);
}

#[test]
fn predict_matches_library_to_the_bit() {
    let dir = TempDir::new().unwrap();
    let model = model_file(&dir);
    let o = run(&["predict", "--model", &model, "--seed", "5", "--attrs", ATTRS]);
    assert_ok(&o);
    let body: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let m = load_model(model.as_ref()).unwrap();
    let expected = m.predict(&render_edit(5, &base(), 32).unwrap()).unwrap();
    assert_eq!(body["stress"].as_f64().unwrap().to_bits(), expected.to_bits());
}

#[test]
fn sweep_writes_json_file() {
    let dir = TempDir::new().unwrap();
    let model = model_file(&dir);
    let json = dir.path().join("sweep.json");
    let o = run(&["sweep", "--model", &model, "--seed", "5", "--attrs", ATTRS, "--index", "3", "--json", path_str(&json)]);
    assert_ok(&o);
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(body["grid"].as_array().unwrap().len(), 9);
    assert_eq!(body["predictions"].as_array().unwrap().len(), 9);
    assert_eq!(body["attr_name"], "facetness");
}

fn current_prediction(model: &str, seed: u64) -> f64 {
    let m = load_model(model.as_ref()).unwrap();
    m.predict(&render_edit(seed, &base(), m.resolution()).unwrap()).unwrap()
}

#[test]
fn counterfactual_at_current_prediction_stays_put() {
    let dir = TempDir::new().unwrap();
    let model = model_file(&dir);
    let target = current_prediction(&model, 5).to_string();
    let json = dir.path().join("cf.json");
    let args = ["counterfactual", "--model", &model, "--seed", "5", "--attrs", ATTRS, "--target", &target];
    let o = run(&[&args[..], &["--json", path_str(&json)]].concat());
    assert_ok(&o);
    let report: CounterfactualReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let d = report.deltas;
    assert!([d.size, d.porosity, d.dispersity, d.facetness].iter().all(|v| v.abs() < 0.01), "{d:?}");
}

#[test]
fn counterfactual_json_equals_service_response() {
    let dir = TempDir::new().unwrap();
    let model = model_file(&dir);
    let o = run(&["counterfactual", "--model", &model, "--seed", "5", "--attrs", ATTRS, "--target", "-3.5", "--norm", "1"]);
    assert_ok(&o);

    let state = AppState { model: Some(load_model(model.as_ref()).unwrap()), manifest: None };
    let body = r#"{"seed":5,"attrs":{"size":0.4,"porosity":0.3,"dispersity":0.6,"facetness":0.5},"target_stress":-3.5,"norm_order":1}"#;
    let served = tokio::runtime::Runtime::new().unwrap().block_on(async {
        let req = Request::builder()
            .method(Method::POST)
            .uri("/counterfactual")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body))
            .unwrap();
        let resp = router(state).oneshot(req).await.unwrap();
        assert!(resp.status().is_success());
        resp.into_body().collect().await.unwrap().to_bytes()
    });
    // the CLI terminates stdout with a newline
    assert_eq!(stdout(&o).trim_end_matches('\n').as_bytes(), &served[..]);
}

#[test]
fn gradcheck_passes_and_reports_error() {
    let o = run(&["gradcheck", "--cases", "10"]);
    assert_ok(&o);
    let out = stdout(&o);
    let line = out.lines().last().unwrap();
    let err: f64 = line.strip_prefix("max relative error ").unwrap().parse().unwrap();
    assert!(err < 1e-3, "{line}");
}

#[test]
fn tiny_train_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    assert_ok(&run(&["synth-data", "--lots", "4", "--tiles", "10", "--out", path_str(&data)]));
    let model = dir.path().join("m.knob");
    let summary = dir.path().join("train.json");
    let o = run(&[
        "train",
        "--data",
        path_str(&data),
        "--epochs",
        "1",
        "--batch-size",
        "8",
        "--resolution",
        "32",
        "--out",
        path_str(&model),
        "--json",
        path_str(&summary),
    ]);
    assert_ok(&o);
    assert_eq!(load_model(&model).unwrap().resolution(), 32);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["history"].as_array().unwrap().len(), 2);
    assert!(s["val_rmse"].as_f64().unwrap().is_finite());
}
