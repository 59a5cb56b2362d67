use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dsbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = dsbm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Run {
    dir: TempDir,
}

impl Run {
    /// Generates a small sequence into `gen/` with the given config body.
    fn new(config: &str) -> Self {
        let run = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(run.path("run.toml"), config).unwrap();
        ok(&[
            "generate",
            "--config",
            &run.arg("run.toml"),
            "--out",
            &run.arg("gen"),
        ]);
        run
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn arg(&self, rel: &str) -> String {
        self.path(rel).to_string_lossy().into_owned()
    }

    fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap()
    }

    fn json(&self, rel: &str) -> serde_json::Value {
        serde_json::from_str(&self.read(rel)).unwrap()
    }
}

const MINIMAL: &str = "node_count = 10\nk = 2\nseed = 1\n[generator]\nsteps = 5\n";

#[test]
fn generate_writes_edges_and_ground_truth() {
    let run = Run::new(MINIMAL);
    for name in [
        "edges.txt",
        "psi.csv",
        "theta.csv",
        "membership.csv",
        "classes.txt",
        "config.resolved.toml",
    ] {
        assert!(run.path("gen").join(name).is_file(), "missing {name}");
    }
    assert_eq!(run.read("gen/theta.csv").lines().count(), 6);
    assert_eq!(run.read("gen/membership.csv").lines().count(), 1 + 5 * 10);
    assert!(run
        .read("gen/config.resolved.toml")
        .contains("node_count = 10"));
}

#[test]
fn generate_is_byte_identical_on_rerun() {
    let run = Run::new(MINIMAL);
    ok(&[
        "generate",
        "--config",
        &run.arg("run.toml"),
        "--out",
        &run.arg("again"),
    ]);
    for name in ["edges.txt", "psi.csv", "theta.csv", "membership.csv"] {
        assert_eq!(
            run.read(&format!("gen/{name}")),
            run.read(&format!("again/{name}")),
            "{name}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let run = Run::new(MINIMAL);
    ok(&[
        "generate",
        "--config",
        &run.arg("run.toml"),
        "--seed",
        "2",
        "--out",
        &run.arg("other"),
    ]);
    assert_ne!(run.read("gen/edges.txt"), run.read("other/edges.txt"));
    assert!(run.read("other/config.resolved.toml").contains("seed = 2"));
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "node_count = 10\n[generator]\nstepz = 5\n").unwrap();
    let out = dsbm(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));
}

#[test]
fn track_writes_one_row_per_step_inside_unit_interval() {
    let run = Run::new(MINIMAL);
    ok(&[
        "track",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--classes",
        &run.arg("gen/classes.txt"),
        "--out",
        &run.arg("track"),
    ]);
    let text = run.read("track/track.csv");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 3 * 4 + 1);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert!(fields[1..13].iter().all(|&p| p > 0.0 && p < 1.0), "{row}");
    }
    let est = run.json("track/estimates.json");
    assert_eq!(est["steps"].as_array().unwrap().len(), 5);
}

#[test]
fn track_json_format() {
    let run = Run::new(MINIMAL);
    ok(&[
        "track",
        "--config",
        &run.arg("run.toml"),
        "--format",
        "json",
        "--edges",
        &run.arg("gen/edges.txt"),
        "--classes",
        &run.arg("gen/classes.txt"),
        "--out",
        &run.arg("track"),
    ]);
    let rows = run.json("track/track.json");
    assert_eq!(rows.as_array().unwrap().len(), 5);
    assert_eq!(rows[0]["time"], 1);
    assert_eq!(rows[0]["theta"].as_array().unwrap().len(), 2);
}

#[test]
fn track_without_classes_exits_2() {
    let run = Run::new(MINIMAL);
    let out = dsbm(&[
        "track",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--out",
        &run.arg("t"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = dsbm(&[
        "track",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--classes",
        &run.arg("missing.txt"),
        "--out",
        &run.arg("t"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_assignments_cover_every_node_each_step() {
    let run = Run::new("node_count = 24\nk = 2\nseed = 3\n[generator]\nsteps = 4\ntheta_in = 0.6\ntheta_out = 0.05\n");
    ok(&[
        "fit",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--out",
        &run.arg("fit"),
    ]);
    assert_eq!(run.read("fit/assignments.csv").lines().count(), 1 + 4 * 24);
    let fit = run.read("fit/fit.csv");
    let rows: Vec<Vec<&str>> = fit
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .all(|r| r[1].parse::<f64>().unwrap().is_finite()));
    // label agreement is reported from the second step on
    assert_eq!(rows[0][5], "");
    assert!(rows[1..].iter().all(|r| r[5].parse::<f64>().is_ok()));
}

#[test]
fn predict_endpoints_and_echoes() {
    let run =
        Run::new("node_count = 20\nk = 2\nseed = 4\n[generator]\nsteps = 6\npersistence = 0.6\n");
    ok(&[
        "track",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--classes",
        &run.arg("gen/classes.txt"),
        "--out",
        &run.arg("track"),
    ]);
    let predict = |out: &str, eta: Option<&str>| {
        let mut args = vec![
            "predict".to_string(),
            "--config".into(),
            run.arg("run.toml"),
            "--edges".into(),
            run.arg("gen/edges.txt"),
            "--estimates".into(),
            run.arg("track/estimates.json"),
            "--lambda".into(),
            "0.3".into(),
            "--out".into(),
            run.arg(out),
        ];
        if let Some(eta) = eta {
            args.extend(["--eta".to_string(), eta.to_string()]);
        }
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        run.json(&format!("{out}/summary.json"))
    };
    let tuned = predict("tuned", None);
    let ekf = predict("ekf", Some("1"));
    let ewma = predict("ewma", Some("0"));
    assert_eq!(tuned["lambda"], 0.3);
    assert_eq!(tuned["eta_selected"], true);
    assert_eq!(ekf["eta"], 1.0);
    assert_eq!(ekf["auc"], tuned["ekf_auc"]);
    assert_eq!(ewma["auc"], tuned["ewma_auc"]);
    for s in [&tuned, &ekf, &ewma] {
        let auc = s["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert_eq!(s["steps"].as_array().unwrap().len(), 5);
    }
    assert!(run.read("tuned/roc.csv").starts_with("threshold,fpr,tpr\n"));
}

#[test]
fn predict_needs_two_snapshots() {
    let run = Run::new(MINIMAL);
    ok(&[
        "track",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--classes",
        &run.arg("gen/classes.txt"),
        "--out",
        &run.arg("track"),
    ]);
    let first: String = run
        .read("gen/edges.txt")
        .lines()
        .filter(|l| l.starts_with("0 "))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(run.path("one.txt"), first).unwrap();
    let out = dsbm(&[
        "predict",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("one.txt"),
        "--estimates",
        &run.arg("track/estimates.json"),
        "--out",
        &run.arg("p"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_roc_scores_against_a_snapshot() {
    let run = Run::new(MINIMAL);
    // score every true edge of snapshot 1 above everything else
    let scores: String = run
        .read("gen/edges.txt")
        .lines()
        .filter(|l| l.starts_with("0 "))
        .map(|l| format!("{} 1.0\n", &l[2..]))
        .collect();
    std::fs::write(run.path("scores.txt"), scores).unwrap();
    ok(&[
        "eval-roc",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--scores",
        &run.arg("scores.txt"),
        "--time",
        "1",
        "--out",
        &run.arg("roc"),
    ]);
    assert_eq!(run.json("roc/auc.json")["auc"], 1.0);
    let out = dsbm(&[
        "eval-roc",
        "--config",
        &run.arg("run.toml"),
        "--edges",
        &run.arg("gen/edges.txt"),
        "--scores",
        &run.arg("scores.txt"),
        "--time",
        "9",
        "--out",
        &run.arg("roc"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resolved_config_reloads() {
    let run = Run::new(MINIMAL);
    let resolved: &Path = &run.path("gen/config.resolved.toml");
    ok(&[
        "generate",
        "--config",
        resolved.to_str().unwrap(),
        "--out",
        &run.arg("replay"),
    ]);
    assert_eq!(run.read("gen/edges.txt"), run.read("replay/edges.txt"));
}
