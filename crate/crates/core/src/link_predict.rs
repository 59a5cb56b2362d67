//! Next-snapshot edge prediction and ROC evaluation.
//!
//! Two predictors are combined convexly: block-level scores from the filtered
//! edge probabilities (every pair inherits its block's probability) and an
//! edge-level exponentially weighted moving average of past adjacency
//! matrices. Diagonal pairs are never scored or evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_data::{ClassAssignment, Snapshot, SnapshotSequence};
use crate::static_sbm::EdgeProbabilityMatrix;

pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Edge-level moving average of past adjacency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EwmaState {
    node_count: usize,
    scores: Vec<f64>,
    lambda: f64,
}

fn check_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {value} outside [0, 1]")))
    }
}

impl EwmaState {
    pub fn zeros(node_count: usize, lambda: f64) -> Result<Self> {
        check_unit("lambda", lambda)?;
        Ok(Self {
            node_count,
            scores: vec![0.0; node_count * node_count],
            lambda,
        })
    }

    /// Seeds the average with a single observed snapshot.
    pub fn from_snapshot(snapshot: &Snapshot, lambda: f64) -> Result<Self> {
        check_unit("lambda", lambda)?;
        let n = snapshot.node_count();
        let scores = (0..n * n)
            .map(|idx| f64::from(u8::from(snapshot.has_edge(idx / n, idx % n))))
            .collect();
        Ok(Self {
            node_count: n,
            scores,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.node_count + j]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// `scores <- lambda * scores + (1 - lambda) * W`, diagonal kept at zero.
pub fn ewma_step(state: &EwmaState, snapshot: &Snapshot) -> Result<EwmaState> {
    let n = state.node_count;
    if snapshot.node_count() != n {
        return Err(Error::Dimension(format!(
            "snapshot has {} nodes, average has {n}",
            snapshot.node_count()
        )));
    }
    let lambda = state.lambda;
    let scores = state
        .scores
        .iter()
        .enumerate()
        .map(|(idx, &s)| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                0.0
            } else {
                let w = if snapshot.has_edge(i, j) { 1.0 } else { 0.0 };
                lambda * s + (1.0 - lambda) * w
            }
        })
        .collect();
    Ok(EwmaState {
        node_count: n,
        scores,
        lambda,
    })
}

/// Real-valued scores for every ordered pair at `target_time` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionScores {
    pub node_count: usize,
    /// Row-major, zero diagonal.
    pub scores: Vec<f64>,
    pub target_time: usize,
}

impl PredictionScores {
    pub fn new(node_count: usize, scores: Vec<f64>, target_time: usize) -> Result<Self> {
        if scores.len() != node_count * node_count {
            return Err(Error::Dimension(format!(
                "{} scores for {node_count} nodes",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("prediction scores must be finite".into()));
        }
        let mut scores = scores;
        for i in 0..node_count {
            scores[i * node_count + i] = 0.0;
        }
        Ok(Self {
            node_count,
            scores,
            target_time,
        })
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.node_count + j]
    }

    pub fn from_ewma(ewma: &EwmaState, target_time: usize) -> Self {
        Self {
            node_count: ewma.node_count,
            scores: ewma.scores.clone(),
            target_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinerConfig {
    /// Weight on the block-level (EKF) scores.
    pub eta: f64,
}

impl CombinerConfig {
    pub fn new(eta: f64) -> Result<Self> {
        check_unit("eta", eta)?;
        Ok(Self { eta })
    }
}

/// Block-level scores: pair `(i, j)` gets `theta[c_i][c_j]`.
pub fn ekf_edge_scores(
    theta: &EdgeProbabilityMatrix,
    classes: &ClassAssignment,
    target_time: usize,
) -> Result<PredictionScores> {
    if theta.k() != classes.k() {
        return Err(Error::Dimension(format!(
            "probabilities have k = {}, assignment k = {}",
            theta.k(),
            classes.k()
        )));
    }
    let n = classes.len();
    let labels = classes.labels();
    let scores = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if i == j {
                0.0
            } else {
                theta.get(labels[i], labels[j])
            }
        })
        .collect();
    Ok(PredictionScores {
        node_count: n,
        scores,
        target_time,
    })
}

/// `eta * ekf + (1 - eta) * ewma`, elementwise.
pub fn combine(
    ekf: &PredictionScores,
    ewma: &EwmaState,
    config: &CombinerConfig,
) -> Result<PredictionScores> {
    check_unit("eta", config.eta)?;
    if ekf.node_count != ewma.node_count {
        return Err(Error::Dimension(format!(
            "EKF scores over {} nodes, EWMA over {}",
            ekf.node_count, ewma.node_count
        )));
    }
    let eta = config.eta;
    let scores = ekf
        .scores
        .iter()
        .zip(&ewma.scores)
        .map(|(&a, &b)| eta * a + (1.0 - eta) * b)
        .collect();
    Ok(PredictionScores {
        node_count: ekf.node_count,
        scores,
        target_time: ekf.target_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Pairs scoring at or above this value are predicted as edges.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: u64,
    pub negatives: u64,
}

/// ROC curve over scored binary labels. Tied scores form a single threshold
/// step, so the trapezoidal AUC equals the rank statistic with ties counted half.
pub fn roc_from_scores(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{positives} actual edges and {negatives} non-edges"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area, in units of one (positive, negative) pair
    let mut twice_area: u128 = 0;
    let mut pos = 0;
    while pos < order.len() {
        let threshold = scores[order[pos]];
        let (tp_prev, fp_prev) = (tp, fp);
        while pos < order.len() && scores[order[pos]] == threshold {
            if labels[order[pos]] {
                tp += 1;
            } else {
                fp += 1;
            }
            pos += 1;
        }
        twice_area += u128::from(fp - fp_prev) * u128::from(tp + tp_prev);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    let auc = twice_area as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(RocCurve {
        points,
        auc,
        positives,
        negatives,
    })
}

fn off_diagonal_pairs(
    scores: &PredictionScores,
    actual: &Snapshot,
    out_scores: &mut Vec<f64>,
    out_labels: &mut Vec<bool>,
) {
    let n = scores.node_count;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out_scores.push(scores.score(i, j));
                out_labels.push(actual.has_edge(i, j));
            }
        }
    }
}

/// ROC of `scores` against the observed snapshot, over off-diagonal pairs.
pub fn roc_curve(scores: &PredictionScores, actual: &Snapshot) -> Result<RocCurve> {
    if scores.node_count != actual.node_count() {
        return Err(Error::Dimension(format!(
            "scores over {} nodes, snapshot over {}",
            scores.node_count,
            actual.node_count()
        )));
    }
    let mut s = Vec::new();
    let mut l = Vec::new();
    off_diagonal_pairs(scores, actual, &mut s, &mut l);
    roc_from_scores(&s, &l)
}

/// Filtered estimate available after observing one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    pub theta: EdgeProbabilityMatrix,
    pub classes: ClassAssignment,
}

/// Both predictors for one target snapshot, built from data strictly before it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepComponents {
    pub target_time: usize,
    pub ekf: PredictionScores,
    pub ewma: EwmaState,
}

/// Builds the predictors for targets `2..=T`. `estimates[t]` must be the
/// estimate after snapshot `t` (0-based); the EWMA starts from the first snapshot.
pub fn component_scores(
    seq: &SnapshotSequence,
    estimates: &[StepEstimate],
    lambda: f64,
) -> Result<Vec<StepComponents>> {
    let steps = seq.len();
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "prediction needs at least 2 snapshots, got {steps}"
        )));
    }
    if estimates.len() < steps - 1 {
        return Err(Error::Dimension(format!(
            "{} estimates for {steps} snapshots",
            estimates.len()
        )));
    }
    let snaps = seq.snapshots();
    let mut ewma = EwmaState::from_snapshot(&snaps[0], lambda)?;
    let mut out = Vec::with_capacity(steps - 1);
    for t in 0..steps - 1 {
        if t > 0 {
            ewma = ewma_step(&ewma, &snaps[t])?;
        }
        let target_time = t + 2;
        let est = &estimates[t];
        out.push(StepComponents {
            target_time,
            ekf: ekf_edge_scores(&est.theta, &est.classes, target_time)?,
            ewma: ewma.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvaluation {
    pub target_time: usize,
    /// `None` when the target snapshot has no edges or no non-edges.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub lambda: f64,
    pub eta: f64,
    pub scores: Vec<PredictionScores>,
    pub steps: Vec<StepEvaluation>,
    pub pooled: RocCurve,
}

/// Combines and evaluates the given components with weight `eta`.
pub fn evaluate_components(
    seq: &SnapshotSequence,
    components: &[StepComponents],
    eta: f64,
) -> Result<PredictionReport> {
    let config = CombinerConfig::new(eta)?;
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut scores = Vec::with_capacity(components.len());
    let mut steps = Vec::with_capacity(components.len());
    for comp in components {
        let combined = combine(&comp.ekf, &comp.ewma, &config)?;
        let actual = seq.get(comp.target_time - 1).ok_or_else(|| {
            Error::Dimension(format!("no snapshot for target time {}", comp.target_time))
        })?;
        let auc = match roc_curve(&combined, actual) {
            Ok(roc) => Some(roc.auc),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        off_diagonal_pairs(&combined, actual, &mut pooled_scores, &mut pooled_labels);
        steps.push(StepEvaluation {
            target_time: comp.target_time,
            auc,
        });
        scores.push(combined);
    }
    let pooled = roc_from_scores(&pooled_scores, &pooled_labels)?;
    Ok(PredictionReport {
        lambda: components.first().map_or(DEFAULT_LAMBDA, |c| c.ewma.lambda),
        eta,
        scores,
        steps,
        pooled,
    })
}

/// Online prediction of snapshots `2..=T` and their evaluation.
pub fn predict_sequence(
    seq: &SnapshotSequence,
    estimates: &[StepEstimate],
    lambda: f64,
    eta: f64,
) -> Result<PredictionReport> {
    let components = component_scores(seq, estimates, lambda)?;
    evaluate_components(seq, &components, eta)
}

/// Picks the grid weight with the highest pooled AUC over the first
/// `validation_steps` components. Ties keep the earlier grid value.
pub fn select_eta(
    seq: &SnapshotSequence,
    components: &[StepComponents],
    grid: &[f64],
    validation_steps: usize,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty eta grid".into()));
    }
    let validation = &components[..validation_steps.clamp(1, components.len())];
    let mut best: Option<(f64, f64)> = None;
    for &eta in grid {
        let auc = evaluate_components(seq, validation, eta)?.pooled.auc;
        if best.is_none_or(|(_, b)| auc > b) {
            best = Some((eta, auc));
        }
    }
    Ok(best.expect("grid is nonempty").0)
}

/// `0, 1/steps, ..., 1`.
pub fn uniform_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}
