//! Joint estimation of class memberships and states.
//!
//! Each candidate assignment is scored by running the EKF update on its block
//! statistics and evaluating the log-posterior at the updated state. The
//! search is steepest-ascent hill climbing over single-node relabels.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_data::{block_counts, BlockStats, ClassAssignment, Snapshot, SnapshotSequence};
use crate::spectral::{spectral_init, SpectralConfig};
use crate::state_space::{
    filter_step, init_predicted, predict, GaussianState, Hyperparameters, StateKind,
};

/// Largest node count accepted by [`exhaustive_search`].
pub const MAX_EXHAUSTIVE_NODES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub max_sweeps: usize,
    /// A move is accepted only if it improves the objective by more than this.
    pub objective_tol: f64,
    /// Replace hill climbing with exhaustive enumeration (n <= 12 only).
    pub exhaustive: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            objective_tol: 1e-9,
            exhaustive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub assignment: ClassAssignment,
    /// Prior used for this step.
    pub predicted: GaussianState,
    pub state: GaussianState,
    /// Log-posterior at `state.mean`, additive constant dropped.
    pub objective: f64,
    pub iterations: usize,
    pub moves_accepted: usize,
    pub budget_limited: bool,
    /// Fraction of nodes keeping the previous step's label (`None` at the first step).
    pub label_agreement: Option<f64>,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-posterior of `psi` given the predicted state and block counts.
///
/// Coordinates of blocks with no possible edges are dropped from both the
/// prior quadratic form and the likelihood.
pub fn log_posterior(psi: &DVector<f64>, pred: &GaussianState, stats: &BlockStats) -> Result<f64> {
    let k = stats.k();
    let d = k * k;
    if psi.len() != d || pred.dim() != d {
        return Err(Error::Dimension(format!(
            "state of dimension {} / {} for k = {k}",
            psi.len(),
            pred.dim()
        )));
    }
    let counts = stats.vectorized_counts();
    let idx: Vec<usize> = (0..d).filter(|&i| counts[i].1 > 0).collect();
    let q = idx.len();
    let mut likelihood = 0.0;
    for &i in &idx {
        let (m, n) = counts[i];
        // log h(x) = -softplus(-x), log(1 - h(x)) = -softplus(x)
        likelihood -= m as f64 * softplus(-psi[i]) + (n - m) as f64 * softplus(psi[i]);
    }
    if q == 0 {
        return Ok(likelihood);
    }
    let r_obs = DMatrix::from_fn(q, q, |a, b| pred.covariance[(idx[a], idx[b])]);
    let diff = DVector::from_fn(q, |a, _| psi[idx[a]] - pred.mean[idx[a]]);
    let chol = r_obs.cholesky().ok_or(Error::SingularPrior)?;
    let quad = diff.dot(&chol.solve(&diff));
    Ok(-0.5 * quad + likelihood)
}

struct Scored {
    stats: BlockStats,
    state: GaussianState,
    objective: f64,
}

fn score(pred: &GaussianState, stats: BlockStats, epsilon: f64) -> Result<Scored> {
    let (state, _) = filter_step(pred, &stats, epsilon)?;
    let objective = log_posterior(&state.mean, pred, &stats)?;
    Ok(Scored {
        stats,
        state,
        objective,
    })
}

/// Objective of one assignment: EKF posterior under its block statistics, scored by the log-posterior.
pub fn assignment_objective(
    snapshot: &Snapshot,
    pred: &GaussianState,
    classes: &ClassAssignment,
    epsilon: f64,
) -> Result<(f64, GaussianState)> {
    let s = score(pred, block_counts(snapshot, classes)?, epsilon)?;
    Ok((s.objective, s.state))
}

/// Hill climbing over single-node relabels starting from `init`.
///
/// Every sweep evaluates all moves that keep each class nonempty and accepts
/// the best one if it improves the objective by more than the tolerance.
/// Ties go to the lowest `(node, class)`.
pub fn fit_aposteriori(
    snapshot: &Snapshot,
    pred: &GaussianState,
    init: &ClassAssignment,
    config: &SearchConfig,
    epsilon: f64,
) -> Result<FitResult> {
    if pred.kind != StateKind::Predicted {
        return Err(Error::InvalidArgument(
            "fit expects a predicted state".into(),
        ));
    }
    let k = init.k();
    if pred.dim() != k * k {
        return Err(Error::Dimension(format!(
            "predicted state of dimension {} for k = {k}",
            pred.dim()
        )));
    }
    if init.sizes().contains(&0) {
        return Err(Error::InvalidArgument(
            "initial assignment has an empty class".into(),
        ));
    }
    if config.exhaustive {
        let (assignment, objective, state) = exhaustive_search(snapshot, pred, k, epsilon)?;
        return Ok(FitResult {
            assignment,
            predicted: pred.clone(),
            state,
            objective,
            iterations: 1,
            moves_accepted: 0,
            budget_limited: false,
            label_agreement: None,
        });
    }

    let n = snapshot.node_count();
    let mut current = init.clone();
    let mut best = score(pred, block_counts(snapshot, &current)?, epsilon)?;
    let mut sweeps = 0;
    let mut moves = 0;
    let mut budget_limited = false;
    loop {
        if sweeps >= config.max_sweeps {
            budget_limited = true;
            break;
        }
        sweeps += 1;
        let sizes = current.sizes();
        let labels = current.labels();
        let candidates: Vec<(usize, usize)> = (0..n)
            .filter(|&v| sizes[labels[v]] > 1)
            .flat_map(|v| (0..k).filter(move |&c| c != labels[v]).map(move |c| (v, c)))
            .collect();
        let scored: Vec<Result<Scored>> = candidates
            .par_iter()
            .map(|&(v, c)| {
                score(
                    pred,
                    best.stats.with_move(snapshot, &current, v, c),
                    epsilon,
                )
            })
            .collect();
        let mut winner: Option<(usize, Scored)> = None;
        for (pos, s) in scored.into_iter().enumerate() {
            let s = s?;
            if winner
                .as_ref()
                .is_none_or(|(_, w)| s.objective > w.objective)
            {
                winner = Some((pos, s));
            }
        }
        match winner {
            Some((pos, s)) if s.objective > best.objective + config.objective_tol => {
                let (v, c) = candidates[pos];
                current = current.with_label(v, c);
                best = s;
                moves += 1;
            }
            _ => break,
        }
    }
    Ok(FitResult {
        assignment: current,
        predicted: pred.clone(),
        state: best.state,
        objective: best.objective,
        iterations: sweeps,
        moves_accepted: moves,
        budget_limited,
        label_agreement: None,
    })
}

/// Scores every assignment with all `k` classes nonempty and returns the best.
/// Ties go to the lexicographically smallest label vector.
pub fn exhaustive_search(
    snapshot: &Snapshot,
    pred: &GaussianState,
    k: usize,
    epsilon: f64,
) -> Result<(ClassAssignment, f64, GaussianState)> {
    let n = snapshot.node_count();
    if n > MAX_EXHAUSTIVE_NODES {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search limited to {MAX_EXHAUSTIVE_NODES} nodes, got {n}"
        )));
    }
    let total = (k as u64).pow(n as u32);
    let mut best: Option<(ClassAssignment, f64, GaussianState)> = None;
    for code in 0..total {
        let mut rest = code;
        let mut labels = vec![0; n];
        for slot in labels.iter_mut().rev() {
            *slot = (rest % k as u64) as usize;
            rest /= k as u64;
        }
        let classes = ClassAssignment::new(labels, k)?;
        if classes.sizes().contains(&0) {
            continue;
        }
        let (objective, state) = assignment_objective(snapshot, pred, &classes, epsilon)?;
        if best.as_ref().is_none_or(|b| objective > b.1) {
            best = Some((classes, objective, state));
        }
    }
    best.ok_or_else(|| {
        Error::InvalidArgument(format!("no assignment of {n} nodes fills {k} classes"))
    })
}

/// Fraction of nodes with identical labels in two assignments.
pub fn label_agreement(a: &ClassAssignment, b: &ClassAssignment) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let same = a
        .labels()
        .iter()
        .zip(b.labels())
        .filter(|(x, y)| x == y)
        .count();
    same as f64 / a.len() as f64
}

/// Online a posteriori fit of a whole sequence: spectral initialization at the
/// first step, warm starts from the previous step afterwards.
pub fn fit_sequence(
    seq: &SnapshotSequence,
    k: usize,
    hp: &Hyperparameters,
    spectral: &SpectralConfig,
    search: &SearchConfig,
) -> Result<Vec<FitResult>> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit an empty sequence".into(),
        ));
    }
    if hp.k() != k {
        return Err(Error::Dimension(format!(
            "hyperparameters have k = {}, requested k = {k}",
            hp.k()
        )));
    }
    let mut results: Vec<FitResult> = Vec::with_capacity(seq.len());
    for snapshot in seq.snapshots() {
        let (pred, init) = match results.last() {
            None => {
                let init = spectral_init(snapshot, k, spectral)?.assignment;
                let first = block_counts(snapshot, &init)?;
                (init_predicted(hp, Some(&first))?, init)
            }
            Some(prev) => (predict(&prev.state, hp)?, prev.assignment.clone()),
        };
        let mut fit = fit_aposteriori(snapshot, &pred, &init, search, hp.epsilon)?;
        if let Some(prev) = results.last() {
            fit.label_agreement = Some(label_agreement(&prev.assignment, &fit.assignment));
        }
        results.push(fit);
    }
    Ok(results)
}
