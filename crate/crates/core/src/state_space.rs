//! Logit-space random-walk state model and the extended Kalman filter that
//! tracks block edge probabilities from block densities.
//!
//! The state is the column-stacked vector of logit edge probabilities (length
//! `k^2`). Observations are block densities, modeled as the logistic of the
//! state plus Gaussian noise whose variance follows the binomial CLT
//! approximation `theta (1 - theta) / n`. Blocks with no possible edges are
//! masked: they receive zero Kalman gain, which is the same as an
//! infinite-variance observation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::net_data::{block_counts, BlockStats, ClassAssignment, SnapshotSequence};
use crate::static_sbm::{EdgeProbabilityMatrix, DEFAULT_EPSILON};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const JITTER: f64 = 1e-10;

pub const DEFAULT_GAMMA0_SCALE: f64 = 1.0;
pub const DEFAULT_GAMMA_SCALE: f64 = 0.01;

pub fn logit(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!("logit undefined at {theta}")));
    }
    Ok(theta.ln() - (-theta).ln_1p())
}

/// Numerically stable scalar logistic.
#[inline]
pub fn logistic_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logistic(psi: &DVector<f64>) -> DVector<f64> {
    psi.map(logistic_scalar)
}

/// Diagonal Jacobian of the elementwise logistic.
pub fn jacobian_h(psi: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&psi.map(logistic_derivative))
}

#[inline]
fn logistic_derivative(x: f64) -> f64 {
    // even in x; exp(-|x|) never overflows
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Clamps a probability into `[epsilon, 1 - epsilon]`.
#[inline]
pub fn clamp_probability(p: f64, epsilon: f64) -> f64 {
    p.clamp(epsilon, 1.0 - epsilon)
}

/// Elementwise measurement function with diagonal Jacobian.
pub trait MeasurementModel {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// The blockmodel observation function: densities are the logistic of the state.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticMeasurement;

impl MeasurementModel for LogisticMeasurement {
    fn value(&self, x: f64) -> f64 {
        logistic_scalar(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        logistic_derivative(x)
    }
}

/// Linear identity observation; turns the EKF into the ordinary Kalman filter.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMeasurement;

impl MeasurementModel for IdentityMeasurement {
    fn value(&self, x: f64) -> f64 {
        x
    }
    fn derivative(&self, _x: f64) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Predicted,
    Posterior,
}

/// Gaussian belief over the vectorized logit state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub kind: StateKind,
    pub time: usize,
}

impl GaussianState {
    pub fn new(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        kind: StateKind,
        time: usize,
    ) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "mean of length {d} with covariance {:?}",
                covariance.shape()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("state mean has non-finite entries".into()));
        }
        check_psd(&covariance, "state covariance")?;
        Ok(Self {
            mean,
            covariance,
            kind,
            time,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Class count implied by a `k^2`-dimensional state.
    pub fn k(&self) -> usize {
        square_root_dim(self.dim())
    }

    /// Edge probabilities `logistic(mean)` as a `k x k` matrix.
    pub fn theta(&self) -> EdgeProbabilityMatrix {
        let probs: Vec<f64> = self
            .mean
            .iter()
            .map(|&x| open_unit(logistic_scalar(x)))
            .collect();
        EdgeProbabilityMatrix::from_vectorized(self.k(), &probs)
            .expect("logistic values lie in the open unit interval")
    }
}

fn square_root_dim(d: usize) -> usize {
    let k = (d as f64).sqrt().round() as usize;
    debug_assert_eq!(k * k, d);
    k
}

/// Keeps saturated logistic values representable as open-interval probabilities.
#[inline]
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::Domain(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    if m.nrows() > 0 {
        let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::Domain(format!(
                "{what} is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
    }
    Ok(())
}

/// Where the initial state mean comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean {
    /// Logit of the first snapshot's clamped block densities under the initial assignment.
    FromData,
    Explicit(DVector<f64>),
}

/// Prior and process-noise settings for the random walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub prior_mean: PriorMean,
    pub gamma0: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub epsilon: f64,
}

impl Hyperparameters {
    /// `Gamma0 = gamma0_scale * I`, `Gamma = gamma_scale * I`, data-driven prior mean.
    pub fn isotropic(k: usize, gamma0_scale: f64, gamma_scale: f64) -> Self {
        let d = k * k;
        Self {
            prior_mean: PriorMean::FromData,
            gamma0: DMatrix::identity(d, d) * gamma0_scale,
            gamma: DMatrix::identity(d, d) * gamma_scale,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_default_noise(k: usize) -> Self {
        Self::isotropic(k, DEFAULT_GAMMA0_SCALE, DEFAULT_GAMMA_SCALE)
    }

    pub fn with_prior_mean(mut self, mean: DVector<f64>) -> Self {
        self.prior_mean = PriorMean::Explicit(mean);
        self
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn k(&self) -> usize {
        square_root_dim(self.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let k = self.k();
        if k * k != d || d == 0 {
            return Err(Error::Dimension(format!(
                "process noise dimension {d} is not a positive square"
            )));
        }
        if self.gamma0.shape() != (d, d) {
            return Err(Error::Dimension("gamma0 and gamma differ in shape".into()));
        }
        if let PriorMean::Explicit(mu) = &self.prior_mean {
            if mu.len() != d {
                return Err(Error::Dimension(format!(
                    "prior mean of length {} for dim {d}",
                    mu.len()
                )));
            }
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("prior mean has non-finite entries".into()));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Domain(format!(
                "epsilon {} outside (0, 0.5)",
                self.epsilon
            )));
        }
        check_psd(&self.gamma0, "gamma0")?;
        check_psd(&self.gamma, "gamma")
    }

    /// Resolves the prior mean, using `first` when it is data-driven.
    pub fn resolve_prior_mean(&self, first: Option<&BlockStats>) -> Result<DVector<f64>> {
        match &self.prior_mean {
            PriorMean::Explicit(mu) => Ok(mu.clone()),
            PriorMean::FromData => {
                let stats = first.ok_or_else(|| {
                    Error::InvalidArgument("data-driven prior mean needs the first snapshot".into())
                })?;
                if stats.k() != self.k() {
                    return Err(Error::Dimension(format!(
                        "statistics have k = {}, hyperparameters k = {}",
                        stats.k(),
                        self.k()
                    )));
                }
                stats
                    .vectorized_density()
                    .into_iter()
                    .map(|y| match y {
                        Some(y) => logit(clamp_probability(y, self.epsilon)),
                        None => Ok(0.0),
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(DVector::from_vec)
            }
        }
    }
}

/// Vectorized block densities with their noise variances and observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub y: DVector<f64>,
    pub sigma2: DVector<f64>,
    /// `true` where the block has at least one possible edge.
    pub observed: Vec<bool>,
}

impl ObservationModel {
    /// All coordinates observed.
    pub fn dense(y: DVector<f64>, sigma2: DVector<f64>) -> Self {
        let observed = vec![true; y.len()];
        Self {
            y,
            sigma2,
            observed,
        }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    fn observed_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.observed[i]).collect()
    }
}

/// Builds the observation from block statistics; noise variances use the plug-in probabilities.
pub fn observation_from_stats(
    stats: &BlockStats,
    theta_plugin: &EdgeProbabilityMatrix,
) -> Result<ObservationModel> {
    let k = stats.k();
    if theta_plugin.k() != k {
        return Err(Error::Dimension(format!(
            "statistics have k = {k}, plug-in probabilities k = {}",
            theta_plugin.k()
        )));
    }
    let plugin = theta_plugin.vectorized();
    let counts = stats.vectorized_counts();
    let d = k * k;
    let mut y = DVector::zeros(d);
    let mut sigma2 = DVector::zeros(d);
    let mut observed = vec![false; d];
    for i in 0..d {
        let (m, n) = counts[i];
        if n == 0 {
            continue;
        }
        let p = plugin[i];
        y[i] = m as f64 / n as f64;
        sigma2[i] = p * (1.0 - p) / n as f64;
        observed[i] = true;
    }
    Ok(ObservationModel {
        y,
        sigma2,
        observed,
    })
}

/// Initial predicted state: mean `mu0`, covariance `Gamma0 + Gamma`.
pub fn init_predicted(hp: &Hyperparameters, first: Option<&BlockStats>) -> Result<GaussianState> {
    hp.validate()?;
    let mean = hp.resolve_prior_mean(first)?;
    let cov = symmetrize(&(&hp.gamma0 + &hp.gamma));
    GaussianState::new(mean, cov, StateKind::Predicted, 1)
}

/// Random-walk prediction: mean unchanged, covariance grows by `Gamma`.
pub fn predict(state: &GaussianState, hp: &Hyperparameters) -> Result<GaussianState> {
    if state.kind != StateKind::Posterior {
        return Err(Error::InvalidArgument(
            "predict expects a posterior state".into(),
        ));
    }
    if hp.gamma.shape() != state.covariance.shape() {
        return Err(Error::Dimension(
            "process noise does not match state".into(),
        ));
    }
    Ok(GaussianState {
        mean: state.mean.clone(),
        covariance: symmetrize(&(&state.covariance + &hp.gamma)),
        kind: StateKind::Predicted,
        time: state.time + 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    /// Full `d x d` Kalman gain; columns of unobserved coordinates are zero.
    pub gain: DMatrix<f64>,
    /// `y - h(predicted mean)`; zero on unobserved coordinates.
    pub innovation: DVector<f64>,
}

impl UpdateDiagnostics {
    pub fn innovation_norm(&self) -> f64 {
        self.innovation.norm()
    }
}

pub fn ekf_update(
    pred: &GaussianState,
    obs: &ObservationModel,
) -> Result<(GaussianState, UpdateDiagnostics)> {
    ekf_update_with(pred, obs, &LogisticMeasurement)
}

/// Extended Kalman update linearized at the predicted mean.
pub fn ekf_update_with<M: MeasurementModel>(
    pred: &GaussianState,
    obs: &ObservationModel,
    model: &M,
) -> Result<(GaussianState, UpdateDiagnostics)> {
    if pred.kind != StateKind::Predicted {
        return Err(Error::InvalidArgument(
            "update expects a predicted state".into(),
        ));
    }
    let d = pred.dim();
    if obs.dim() != d || obs.sigma2.len() != d || obs.observed.len() != d {
        return Err(Error::Dimension(format!(
            "observation of dimension {} for a state of dimension {d}",
            obs.dim()
        )));
    }
    let idx = obs.observed_indices();
    let q = idx.len();
    let mut gain = DMatrix::zeros(d, d);
    let mut innovation = DVector::zeros(d);
    if q == 0 {
        let mut post = pred.clone();
        post.kind = StateKind::Posterior;
        return Ok((post, UpdateDiagnostics { gain, innovation }));
    }
    if let Some(&bad) = idx
        .iter()
        .find(|&&i| !(obs.sigma2[i] >= 0.0 && obs.sigma2[i].is_finite()))
    {
        return Err(Error::Domain(format!(
            "observation variance {} at coordinate {bad}",
            obs.sigma2[bad]
        )));
    }

    let r = &pred.covariance;
    let jac: Vec<f64> = idx
        .iter()
        .map(|&i| model.derivative(pred.mean[i]))
        .collect();
    // P = R[:, O] J_O, the cross-covariance between state and observed coordinates.
    let cross = DMatrix::from_fn(d, q, |row, col| r[(row, idx[col])] * jac[col]);
    let mut s = DMatrix::from_fn(q, q, |a, b| jac[a] * r[(idx[a], idx[b])] * jac[b]);
    for a in 0..q {
        s[(a, a)] += obs.sigma2[idx[a]];
    }
    let s = symmetrize(&s);
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => (s.clone() + DMatrix::identity(q, q) * JITTER)
            .cholesky()
            .ok_or_else(|| Error::SingularInnovation {
                coordinates: singular_coordinates(&s, &idx),
            })?,
    };
    // K_O = P S^{-1}  <=>  S K_O^T = P^T
    let gain_obs = chol.solve(&cross.transpose()).transpose();

    let mut resid = DVector::zeros(q);
    for (a, &i) in idx.iter().enumerate() {
        let v = obs.y[i] - model.value(pred.mean[i]);
        resid[a] = v;
        innovation[i] = v;
    }
    let mean = &pred.mean + &gain_obs * &resid;
    // (I - K J) R = R - K_O (J_O R[O, :])
    let cov = r - &gain_obs * cross.transpose();
    let cov = symmetrize(&cov);
    for (a, &i) in idx.iter().enumerate() {
        gain.set_column(i, &gain_obs.column(a));
    }
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("posterior mean is not finite".into()));
    }
    Ok((
        GaussianState {
            mean,
            covariance: cov,
            kind: StateKind::Posterior,
            time: pred.time,
        },
        UpdateDiagnostics { gain, innovation },
    ))
}

fn singular_coordinates(s: &DMatrix<f64>, idx: &[usize]) -> Vec<usize> {
    let scale = s.amax().max(f64::MIN_POSITIVE);
    let tiny: Vec<usize> = idx
        .iter()
        .enumerate()
        .filter(|&(a, _)| s[(a, a)].is_nan() || s[(a, a)] <= 1e-14 * scale)
        .map(|(_, &i)| i)
        .collect();
    if tiny.is_empty() {
        idx.to_vec()
    } else {
        tiny
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// One step of a priori tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackStep {
    /// 1-based time index.
    pub time: usize,
    pub predicted: GaussianState,
    pub posterior: GaussianState,
    pub theta: EdgeProbabilityMatrix,
    /// Row-major `k x k` interval endpoints.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub innovation_norm: f64,
}

/// Two-sided standard normal critical value for a confidence level.
pub fn normal_critical_value(confidence_level: f64) -> Result<f64> {
    if !(confidence_level > 0.0 && confidence_level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level {confidence_level} outside (0, 1)"
        )));
    }
    let alpha = 1.0 - confidence_level;
    Ok(Normal::standard().inverse_cdf(1.0 - alpha / 2.0))
}

/// Interval endpoints `logistic(psi_i -/+ z sqrt(R_ii))` in row-major block order.
pub fn probability_intervals(state: &GaussianState, z: f64) -> (Vec<f64>, Vec<f64>) {
    let k = state.k();
    let mut lower = vec![0.0; k * k];
    let mut upper = vec![0.0; k * k];
    for i in 0..k * k {
        let (a, b) = crate::net_data::block_of(i, k);
        let half = z * state.covariance[(i, i)].max(0.0).sqrt();
        lower[a * k + b] = logistic_scalar(state.mean[i] - half);
        upper[a * k + b] = logistic_scalar(state.mean[i] + half);
    }
    (lower, upper)
}

/// Filters one step: builds the observation from `stats` with the predicted plug-in variance and updates.
pub fn filter_step(
    pred: &GaussianState,
    stats: &BlockStats,
    epsilon: f64,
) -> Result<(GaussianState, UpdateDiagnostics)> {
    let obs = observation_from_stats(stats, &plugin_theta(pred, epsilon))?;
    ekf_update(pred, &obs)
}

/// `logistic(predicted mean)` clamped into `[epsilon, 1 - epsilon]`.
pub fn plugin_theta(pred: &GaussianState, epsilon: f64) -> EdgeProbabilityMatrix {
    let probs: Vec<f64> = pred
        .mean
        .iter()
        .map(|&x| clamp_probability(logistic_scalar(x), epsilon))
        .collect();
    EdgeProbabilityMatrix::from_vectorized(pred.k(), &probs)
        .expect("clamped probabilities are interior")
}

/// A priori tracking with known classes. `classes` holds one assignment per
/// snapshot, or a single assignment used at every step.
pub fn track_apriori(
    seq: &SnapshotSequence,
    classes: &[ClassAssignment],
    hp: &Hyperparameters,
    confidence_level: f64,
) -> Result<Vec<TrackStep>> {
    if seq.is_empty() {
        return Ok(Vec::new());
    }
    if classes.len() != 1 && classes.len() != seq.len() {
        return Err(Error::Dimension(format!(
            "{} class assignments for {} snapshots",
            classes.len(),
            seq.len()
        )));
    }
    let z = normal_critical_value(confidence_level)?;
    let classes_at = |t: usize| {
        if classes.len() == 1 {
            &classes[0]
        } else {
            &classes[t]
        }
    };
    if let Some(c) = classes.iter().find(|c| c.k() != hp.k()) {
        return Err(Error::Dimension(format!(
            "assignment has k = {}, hyperparameters k = {}",
            c.k(),
            hp.k()
        )));
    }

    let first = block_counts(&seq.snapshots()[0], classes_at(0))?;
    let mut pred = init_predicted(hp, Some(&first))?;
    let mut out = Vec::with_capacity(seq.len());
    for (t, snapshot) in seq.snapshots().iter().enumerate() {
        let stats = if t == 0 {
            first.clone()
        } else {
            block_counts(snapshot, classes_at(t))?
        };
        let (post, diag) = filter_step(&pred, &stats, hp.epsilon)?;
        let (lower, upper) = probability_intervals(&post, z);
        let next = predict(&post, hp)?;
        out.push(TrackStep {
            time: t + 1,
            theta: post.theta(),
            predicted: pred,
            posterior: post,
            lower,
            upper,
            innovation_norm: diag.innovation_norm(),
        });
        pred = next;
    }
    Ok(out)
}

/// Smallest eigenvalue of `a - b`, for checking covariance ordering.
pub fn min_eigenvalue_of_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    symmetrize(&(a - b)).symmetric_eigen().eigenvalues.min()
}
