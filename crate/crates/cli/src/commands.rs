use std::fs;
use std::path::Path;

use dsbm::aposteriori::fit_sequence;
use dsbm::link_predict::{
    component_scores, evaluate_components, roc_curve, select_eta, PredictionScores, StepEstimate,
};
use dsbm::net_data::{load_classes, load_snapshots};
use dsbm::state_space::track_apriori;
use dsbm::synth::generate as synth_generate;
use dsbm::{ClassAssignment, EdgeProbabilityMatrix, SnapshotSequence};
use serde::Serialize;
use serde_json::json;

use crate::config::{OutputFormat, RunConfig};
use crate::output::{
    block_header, roc_csv, row_major, rows_of, Csv, EstimateRecord, EstimatesFile, OutDir,
};
use crate::CliError;

/// Validates the configuration and echoes it into the output directory.
fn start(cfg: &RunConfig, out: &Path) -> Result<OutDir, CliError> {
    cfg.validate()?;
    let dir = OutDir::create(out)?;
    dir.write("config.resolved.toml", cfg.to_toml())?;
    Ok(dir)
}

fn load_edges(cfg: &RunConfig, node_count: usize) -> Result<SnapshotSequence, CliError> {
    let path = cfg.require_path(&cfg.edges, "edges")?;
    load_snapshots(path, node_count).map_err(CliError::Input)
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let spec = cfg.generator_spec()?;
    let dir = start(cfg, out)?;
    let (seq, truth) = synth_generate(&spec).map_err(CliError::Numerical)?;
    let k = spec.k;

    let mut edges = Vec::new();
    seq.write_edge_list(&mut edges).expect("writing to memory");
    dir.write("edges.txt", edges)?;

    for (name, series) in [("psi", &truth.psi), ("theta", &truth.theta)] {
        let mut header = vec!["time".to_string()];
        header.extend(block_header(name, k));
        let mut csv = Csv::new(&header);
        for (t, v) in series.iter().enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(row_major(v.as_slice(), k).iter().map(f64::to_string));
            csv.row(row);
        }
        dir.write(&format!("{name}.csv"), csv.finish())?;
    }

    dir.write("membership.csv", assignments_csv(&truth.memberships))?;
    let mut classes = String::from("# i c_i\n");
    for (i, c) in truth.memberships[0].labels().iter().enumerate() {
        classes.push_str(&format!("{i} {c}\n"));
    }
    dir.write("classes.txt", classes)
}

fn assignments_csv(memberships: &[ClassAssignment]) -> String {
    let mut csv = Csv::new(&["time", "node", "class"]);
    for (t, m) in memberships.iter().enumerate() {
        for (i, c) in m.labels().iter().enumerate() {
            csv.row([t + 1, i, *c]);
        }
    }
    csv.finish()
}

#[derive(Serialize)]
struct TrackRow {
    time: usize,
    theta: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
    innovation_norm: f64,
}

pub fn track(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let n = cfg.require_node_count()?;
    let classes_path = cfg.require_path(&cfg.classes, "classes")?;
    let dir = start(cfg, out)?;
    let seq = load_edges(cfg, n)?;
    let classes = load_classes(classes_path, n, cfg.k).map_err(CliError::Input)?;
    let k = classes.k();
    let hp = cfg.hyperparameters(k)?;
    let steps = track_apriori(
        &seq,
        std::slice::from_ref(&classes),
        &hp,
        cfg.confidence_level,
    )
    .map_err(CliError::Numerical)?;

    match cfg.format {
        OutputFormat::Csv => {
            let mut header = vec!["time".to_string()];
            for prefix in ["theta", "lower", "upper"] {
                header.extend(block_header(prefix, k));
            }
            header.push("innovation_norm".into());
            let mut csv = Csv::new(&header);
            for s in &steps {
                let mut row = vec![s.time.to_string()];
                row.extend(s.theta.rows().concat().iter().map(f64::to_string));
                row.extend(s.lower.iter().chain(&s.upper).map(f64::to_string));
                row.push(s.innovation_norm.to_string());
                csv.row(row);
            }
            dir.write("track.csv", csv.finish())?;
        }
        OutputFormat::Json => {
            let rows: Vec<TrackRow> = steps
                .iter()
                .map(|s| TrackRow {
                    time: s.time,
                    theta: s.theta.rows(),
                    lower: rows_of(&s.lower, k),
                    upper: rows_of(&s.upper, k),
                    innovation_norm: s.innovation_norm,
                })
                .collect();
            dir.write_json("track.json", &rows)?;
        }
    }

    let estimates = EstimatesFile {
        node_count: n,
        k,
        source: "track".into(),
        steps: steps
            .iter()
            .map(|s| EstimateRecord {
                time: s.time,
                theta: s.theta.rows(),
                labels: classes.labels().to_vec(),
            })
            .collect(),
    };
    dir.write_json("estimates.json", &estimates)
}

#[derive(Serialize)]
struct FitRow {
    time: usize,
    objective: f64,
    iterations: usize,
    moves_accepted: usize,
    budget_limited: bool,
    label_agreement: Option<f64>,
    theta: Vec<Vec<f64>>,
}

pub fn fit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let n = cfg.require_node_count()?;
    let k = cfg.require_k()?;
    let hp = cfg.hyperparameters(k)?;
    let dir = start(cfg, out)?;
    let seq = load_edges(cfg, n)?;
    let fits = fit_sequence(&seq, k, &hp, &cfg.spectral_config(), &cfg.search_config())
        .map_err(CliError::Numerical)?;

    let rows: Vec<FitRow> = fits
        .iter()
        .enumerate()
        .map(|(t, f)| FitRow {
            time: t + 1,
            objective: f.objective,
            iterations: f.iterations,
            moves_accepted: f.moves_accepted,
            budget_limited: f.budget_limited,
            label_agreement: f.label_agreement,
            theta: f.state.theta().rows(),
        })
        .collect();
    match cfg.format {
        OutputFormat::Csv => {
            let mut header: Vec<String> = [
                "time",
                "objective",
                "iterations",
                "moves_accepted",
                "budget_limited",
                "label_agreement",
            ]
            .map(String::from)
            .to_vec();
            header.extend(block_header("theta", k));
            let mut csv = Csv::new(&header);
            for r in &rows {
                let mut row = vec![
                    r.time.to_string(),
                    r.objective.to_string(),
                    r.iterations.to_string(),
                    r.moves_accepted.to_string(),
                    r.budget_limited.to_string(),
                    r.label_agreement.map(|a| a.to_string()).unwrap_or_default(),
                ];
                row.extend(r.theta.concat().iter().map(f64::to_string));
                csv.row(row);
            }
            dir.write("fit.csv", csv.finish())?;
        }
        OutputFormat::Json => dir.write_json("fit.json", &rows)?,
    }

    let assignments: Vec<ClassAssignment> = fits.iter().map(|f| f.assignment.clone()).collect();
    dir.write("assignments.csv", assignments_csv(&assignments))?;
    let estimates = EstimatesFile {
        node_count: n,
        k,
        source: "fit".into(),
        steps: rows
            .iter()
            .zip(&fits)
            .map(|(r, f)| EstimateRecord {
                time: r.time,
                theta: r.theta.clone(),
                labels: f.assignment.labels().to_vec(),
            })
            .collect(),
    };
    dir.write_json("estimates.json", &estimates)
}

fn load_estimates(path: &Path) -> Result<EstimatesFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn step_estimates(file: &EstimatesFile) -> Result<Vec<StepEstimate>, CliError> {
    file.steps
        .iter()
        .enumerate()
        .map(|(t, rec)| {
            if rec.time != t + 1 {
                return Err(CliError::Config(format!(
                    "estimates step {t} has time {}, expected {}",
                    rec.time,
                    t + 1
                )));
            }
            if rec.labels.len() != file.node_count {
                return Err(CliError::Config(format!(
                    "estimates at time {} label {} nodes, expected {}",
                    rec.time,
                    rec.labels.len(),
                    file.node_count
                )));
            }
            Ok(StepEstimate {
                theta: EdgeProbabilityMatrix::from_rows(&rec.theta).map_err(CliError::Input)?,
                classes: ClassAssignment::new(rec.labels.clone(), file.k)
                    .map_err(CliError::Input)?,
            })
        })
        .collect()
}

pub fn predict(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let estimates = load_estimates(cfg.require_path(&cfg.estimates, "estimates")?)?;
    let n = cfg.node_count.unwrap_or(estimates.node_count);
    if n != estimates.node_count {
        return Err(CliError::Config(format!(
            "node_count = {n} but estimates cover {} nodes",
            estimates.node_count
        )));
    }
    let dir = start(cfg, out)?;
    let seq = load_edges(cfg, n)?;
    if seq.len() < 2 {
        return Err(CliError::Config(format!(
            "prediction needs at least 2 snapshots, found {}",
            seq.len()
        )));
    }
    let per_step = step_estimates(&estimates)?;
    let p = &cfg.predict;
    let comps = component_scores(&seq, &per_step, p.lambda).map_err(CliError::Input)?;

    let validation_steps = p
        .validation_steps
        .unwrap_or(comps.len() / 2)
        .clamp(1, comps.len());
    let (eta, selected) = match p.eta {
        Some(eta) => (eta, false),
        None => (
            select_eta(&seq, &comps, &p.eta_grid, validation_steps).map_err(CliError::Numerical)?,
            true,
        ),
    };
    let eval = |eta: f64| evaluate_components(&seq, &comps, eta).map_err(CliError::Numerical);
    let report = eval(eta)?;
    let ekf = eval(1.0)?;
    let ewma = eval(0.0)?;

    dir.write("roc.csv", roc_csv(&report.pooled))?;
    if p.write_scores {
        let mut csv = Csv::new(&["time", "i", "j", "score"]);
        for s in &report.scores {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    csv.row([
                        s.target_time.to_string(),
                        i.to_string(),
                        j.to_string(),
                        s.score(i, j).to_string(),
                    ]);
                }
            }
        }
        dir.write("scores.csv", csv.finish())?;
    }
    let summary = json!({
        "auc": report.pooled.auc,
        "lambda": p.lambda,
        "eta": eta,
        "eta_selected": selected,
        "validation_steps": if selected { Some(validation_steps) } else { None },
        "ekf_auc": ekf.pooled.auc,
        "ewma_auc": ewma.pooled.auc,
        "positives": report.pooled.positives,
        "negatives": report.pooled.negatives,
        "steps": report.steps,
    });
    dir.write_json("summary.json", &summary)
}

fn parse_scores(path: &Path, n: usize, target_time: usize) -> Result<PredictionScores, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut scores = vec![0.0; n * n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad =
            |msg: String| CliError::Config(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j, s] = fields[..] else {
            return Err(bad(format!(
                "expected `i j score`, found {} fields",
                fields.len()
            )));
        };
        let i: usize = i.parse().map_err(|e| bad(format!("bad node `{i}`: {e}")))?;
        let j: usize = j.parse().map_err(|e| bad(format!("bad node `{j}`: {e}")))?;
        let s: f64 = s
            .parse()
            .map_err(|e| bad(format!("bad score `{s}`: {e}")))?;
        if i >= n || j >= n || i == j {
            return Err(bad(format!(
                "pair ({i}, {j}) is not an off-diagonal pair of {n} nodes"
            )));
        }
        scores[i * n + j] = s;
    }
    PredictionScores::new(n, scores, target_time).map_err(CliError::Input)
}

pub fn eval_roc(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let n = cfg.require_node_count()?;
    let scores_path = cfg.require_path(&cfg.scores, "scores")?;
    let time = cfg
        .eval_time
        .ok_or_else(|| CliError::Config("missing key `eval_time`".into()))?;
    let dir = start(cfg, out)?;
    let seq = load_edges(cfg, n)?;
    let actual = time
        .checked_sub(1)
        .and_then(|t| seq.get(t))
        .ok_or_else(|| CliError::Config(format!("eval_time = {time} outside 1..={}", seq.len())))?;
    let scores = parse_scores(scores_path, n, time)?;
    let roc = roc_curve(&scores, actual).map_err(CliError::Input)?;
    dir.write("roc.csv", roc_csv(&roc))?;
    dir.write_json(
        "auc.json",
        &json!({
            "time": time,
            "auc": roc.auc,
            "positives": roc.positives,
            "negatives": roc.negatives,
        }),
    )
}
