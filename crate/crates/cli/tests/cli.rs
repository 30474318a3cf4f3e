use std::fs;
use std::path::Path;
use std::process::Command;

use oxydyn_cli::{emit_config, parse_config, Task};
use oxydyn_core::ModelParams;
use serde_json::Value;

fn oxydyn(config: &str, dir: &Path) -> (i32, std::path::PathBuf) {
    let cfg = dir.join("run.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_oxydyn"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    (status.code().unwrap(), out)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn empty_model_block_gives_defaults() {
    let cfg = parse_config(r#"{"model": {}, "task": {"kind": "equilibria"}}"#).unwrap();
    assert_eq!(cfg.model, ModelParams::default());
    assert_eq!(
        (cfg.model.mu1, cfg.model.mu2, cfg.model.eps, cfg.model.nu),
        (0.0, 0.0, 1.0, 0.01)
    );
}

#[test]
fn schema_errors_name_the_key() {
    let e = parse_config(r#"{"model": {"eps": 1.5}, "task": {"kind": "equilibria"}}"#).unwrap_err();
    assert_eq!(e.path, "model.eps");

    let e =
        parse_config(r#"{"model": {"gamma": 0.01}, "task": {"kind": "equilibria"}}"#).unwrap_err();
    assert_eq!(e.path, "model.gamma");

    let e = parse_config(r#"{"task": {"kind": "equilibria"}, "extra": 1}"#).unwrap_err();
    assert!(e.message.contains("extra"), "{e}");

    assert!(parse_config(r#"{"task": {"kind": "bogus"}}"#).is_err());
    assert!(parse_config(r#"{"task": {"kind": "turing", "diffusivity": -1}}"#).is_err());
    assert!(parse_config(
        r#"{"task": {"kind": "hopf", "parameter": "mu2", "bracket": [0.5, 0.4]}}"#
    )
    .is_err());
}

#[test]
fn round_trip_every_task() {
    let docs = [
        r#"{"task": {"kind": "equilibria", "search": {"grid": 10}}}"#,
        r#"{"model": {"mu1": 0.05}, "task": {"kind": "hopf", "parameter": "mu2", "bracket": [0.3, 0.5], "probe": {}}}"#,
        r#"{"task": {"kind": "saddle-node", "parameter": "mu2", "bracket": [0.0, 0.1]}}"#,
        r#"{"task": {"kind": "diagram", "parameter": "mu2", "range": [0.3, 0.6], "samples": 4}}"#,
        r#"{"task": {"kind": "manifold", "seed": {"c": 1, "u": 1, "v": 1}, "slow_flow": {"start_point": 3, "dtau": 0.01, "t_end": 5}}}"#,
        r#"{"task": {"kind": "ode", "ic": {"c": 1, "u": 1, "v": 1}, "t_end": 10, "scheme": "euler"}}"#,
        r#"{"task": {"kind": "pde", "diffusivity": 0.8, "ic": {"kind": "custom_bump", "amp_c": -0.5, "amp_u": -0.2, "half_width": 10}}, "thresholds": {"omz_fraction": 0.4}}"#,
        r#"{"task": {"kind": "turing", "diffusivity": 5, "k2_step": 0.01}, "output": "somewhere", "execution": "sequential"}"#,
        r#"{"task": {"kind": "classify", "ic": {"c": 1, "u": 1, "v": 1}}}"#,
    ];
    for doc in docs {
        let cfg = parse_config(doc).unwrap();
        let again = parse_config(&emit_config(&cfg)).unwrap();
        assert_eq!(cfg, again, "{doc}");
    }
    let cfg = parse_config(docs[6]).unwrap();
    assert!(matches!(cfg.task, Task::Pde { .. }));
    assert_eq!(cfg.thresholds.omz_fraction, 0.4);
}

#[test]
fn turing_task_writes_dispersion_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu2": 0.41}, "task": {"kind": "turing", "diffusivity": 5}}"#,
        dir.path(),
    );
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("dispersion.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "k2,p2,p1,p0,max_growth");
    assert_eq!(csv.lines().count(), 4002);
    let v = read_json(&out.join("verdict.json"));
    assert_eq!(v["verdict"], "Turing");
    assert!((v["k_t2"].as_f64().unwrap() - 0.1095).abs() < 1e-3);
    let meta = read_json(&out.join("metadata.json"));
    assert_eq!(meta["task"], "turing");
    assert_eq!(meta["exit_code"], 0);
    assert!(meta["version"].is_string() && meta["wall_time_s"].is_number());
    assert_eq!(meta["config"]["model"]["mu2"], 0.41);
}

#[test]
fn equilibria_task_lists_boundary_and_coexistence_states() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(r#"{"task": {"kind": "equilibria"}}"#, dir.path());
    assert_eq!(code, 0);
    let eqs = read_json(&out.join("equilibria.json"))["equilibria"]
        .as_array()
        .unwrap()
        .clone();
    let labels: Vec<&str> = eqs.iter().map(|e| e["label"].as_str().unwrap()).collect();
    assert_eq!(&labels[..3], ["E0", "E1", "E2"]);
    let e1 = &eqs[1]["location"];
    assert!((e1["c"].as_f64().unwrap() - 0.0258).abs() < 5e-3);
    let e2 = &eqs[2]["location"];
    assert!((e2["u"].as_f64().unwrap() - 2.029).abs() < 5e-3);

    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu2": 0.41}, "task": {"kind": "equilibria"}}"#,
        dir.path(),
    );
    assert_eq!(code, 0);
    let eqs = read_json(&out.join("equilibria.json"))["equilibria"]
        .as_array()
        .unwrap()
        .clone();
    assert!(eqs
        .iter()
        .any(|e| e["label"] == "C1" && e["kind"] == "Coexistence"));
}

#[test]
fn stability_guard_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu2": 0.41}, "task": {"kind": "pde", "diffusivity": 5, "dt": 0.05, "t_end": 10}}"#,
        dir.path(),
    );
    assert_eq!(code, 3);
    let e = read_json(&out.join("error.json"));
    assert_eq!(e["kind"], "stability_guard");
    assert!((e["details"]["bound"].as_f64().unwrap() - 0.024).abs() < 1e-12);
    assert!(e["message"].as_str().unwrap().contains("bound"));
}

#[test]
fn exit_codes_for_config_and_bracket_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"eps": 1.5}, "task": {"kind": "equilibria"}}"#,
        dir.path(),
    );
    assert_eq!(code, 2);
    assert_eq!(
        read_json(&out.join("error.json"))["details"]["path"],
        "model.eps"
    );

    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu1": 0.05}, "task": {"kind": "hopf", "parameter": "mu2", "bracket": [0.5, 0.6]}}"#,
        dir.path(),
    );
    assert_eq!(code, 4);
    assert_eq!(read_json(&out.join("error.json"))["kind"], "bracket");
}

#[test]
fn hopf_task_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu1": 0.05}, "task": {"kind": "hopf", "parameter": "mu2", "bracket": [0.3, 0.5]}}"#,
        dir.path(),
    );
    assert_eq!(code, 0);
    let h = read_json(&out.join("hopf.json"));
    assert!((h["point"]["value"].as_f64().unwrap() - 0.35405).abs() < 1e-4);
    assert!(h["criticality"].is_null());
}

/// Re-running from the echoed config reproduces every artifact byte for byte.
#[test]
fn metadata_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"{"model": {"mu2": 0.41}, "task": {"kind": "pde", "diffusivity": 5, "t_end": 20, "snapshot_interval": 10}}"#;
    let (code, out) = oxydyn(doc, dir.path());
    assert_eq!(code, 0);
    let meta = read_json(&out.join("metadata.json"));
    let echoed = serde_json::to_string(&meta["config"]).unwrap();

    let dir2 = tempfile::tempdir().unwrap();
    let (code, out2) = oxydyn(&echoed, dir2.path());
    assert_eq!(code, 0);
    let files: Vec<String> = meta["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_string())
        .collect();
    assert!(files.iter().any(|f| f == "snapshots/snap_t20.00.csv"));
    assert!(files.contains(&"regime.json".to_string()));
    for f in files {
        assert_eq!(
            fs::read(out.join(&f)).unwrap(),
            fs::read(out2.join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn ode_and_classify_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu2": 0.41}, "task": {"kind": "ode", "ic": {"c": 1, "u": 1, "v": 1}, "t_end": 5, "record_stride": 1000}}"#,
        dir.path(),
    );
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,c,u,v");
    assert_eq!(csv.lines().count(), 7);

    let dir = tempfile::tempdir().unwrap();
    let (code, out) = oxydyn(
        r#"{"model": {"mu1": 0.3, "mu2": 0.09917, "eps": 0.5}, "task": {"kind": "classify", "ic": {"c": 1.2, "u": 1.0, "v": 0.9}, "options": {"t_transient": 1000, "t_window": 500}}}"#,
        dir.path(),
    );
    assert_eq!(code, 0);
    assert!(read_json(&out.join("attractor.json"))["attractor"]["kind"].is_string());
}
