//! Synthetic dynamic networks with known ground truth.
//!
//! The logit state follows `psi^0 ~ N(mu0, Gamma0)`, `psi^t = psi^{t-1} + v^t`
//! with `v^t ~ N(0, Gamma)`, and each off-diagonal edge is an independent
//! Bernoulli draw with the probability of its block. All randomness comes from
//! one ChaCha20 stream seeded by `seed`, consumed in this order:
//!
//! 1. `psi^0`, then the increments `v^1..v^T` (standard normals, coordinate order);
//! 2. the initial memberships (a shuffle of a balanced assignment), then for
//!    `t >= 2` in Markov mode one uniform per node, plus a uniform class draw
//!    for each node that moves;
//! 3. edges in `(t, i, j)` lexicographic order, one uniform per pair, preceded
//!    by a persistence uniform when `persistence > 0` and `t >= 2`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net_data::{block_of, ClassAssignment, Snapshot, SnapshotSequence};
use crate::state_space::{logistic_scalar, logit, Hyperparameters, PriorMean};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipMode {
    Static,
    /// Each node keeps its class with probability `p_stay`, otherwise resamples uniformly.
    Markov {
        p_stay: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub node_count: usize,
    pub k: usize,
    pub steps: usize,
    /// Must carry an explicit prior mean.
    pub hp: Hyperparameters,
    pub membership: MembershipMode,
    /// Probability that an edge indicator is copied from the previous step
    /// instead of redrawn. Zero gives the plain blockmodel.
    pub persistence: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Static two-level blockmodel: `theta_in` on diagonal blocks, `theta_out`
    /// elsewhere, no state noise.
    pub fn planted(
        node_count: usize,
        k: usize,
        theta_in: f64,
        theta_out: f64,
        steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let d = k * k;
        let (psi_in, psi_out) = (logit(theta_in)?, logit(theta_out)?);
        let mu0 = DVector::from_fn(d, |i, _| {
            let (a, b) = block_of(i, k);
            if a == b {
                psi_in
            } else {
                psi_out
            }
        });
        Ok(Self {
            node_count,
            k,
            steps,
            hp: Hyperparameters::isotropic(k, 0.0, 0.0).with_prior_mean(mu0),
            membership: MembershipMode::Static,
            persistence: 0.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::InvalidArgument("node_count must be positive".into()));
        }
        if self.k == 0 || self.k > self.node_count {
            return Err(Error::InvalidArgument(format!(
                "k = {} must be in 1..={}",
                self.k, self.node_count
            )));
        }
        self.hp.validate()?;
        if self.hp.k() != self.k {
            return Err(Error::Dimension(format!(
                "hyperparameters have k = {}, spec k = {}",
                self.hp.k(),
                self.k
            )));
        }
        if matches!(self.hp.prior_mean, PriorMean::FromData) {
            return Err(Error::InvalidArgument(
                "generator needs an explicit prior mean".into(),
            ));
        }
        if let MembershipMode::Markov { p_stay } = self.membership {
            if !(0.0..=1.0).contains(&p_stay) {
                return Err(Error::Domain(format!("p_stay {p_stay} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            return Err(Error::Domain(format!(
                "persistence {} outside [0, 1]",
                self.persistence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Vectorized logit states for steps `1..=T`.
    pub psi: Vec<DVector<f64>>,
    /// `logistic(psi)` at each step.
    pub theta: Vec<DVector<f64>>,
    pub memberships: Vec<ClassAssignment>,
}

/// Symmetric square root `V diag(sqrt(max(lambda, 0))) V^T` of a PSD matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn gaussian(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

pub fn generate(spec: &GeneratorSpec) -> Result<(SnapshotSequence, GroundTruth)> {
    spec.validate()?;
    let (n, k, steps) = (spec.node_count, spec.k, spec.steps);
    let d = k * k;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    let PriorMean::Explicit(mu0) = &spec.hp.prior_mean else {
        unreachable!("validated above");
    };
    let l0 = psd_sqrt(&spec.hp.gamma0);
    let lg = psd_sqrt(&spec.hp.gamma);
    let mut psi_t = mu0 + &l0 * gaussian(&mut rng, d);
    let mut psi = Vec::with_capacity(steps);
    for _ in 0..steps {
        psi_t += &lg * gaussian(&mut rng, d);
        psi.push(psi_t.clone());
    }
    let theta: Vec<DVector<f64>> = psi.iter().map(|p| p.map(logistic_scalar)).collect();

    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut memberships = Vec::with_capacity(steps);
    for t in 0..steps {
        if t > 0 {
            if let MembershipMode::Markov { p_stay } = spec.membership {
                for label in labels.iter_mut() {
                    if rng.random::<f64>() >= p_stay {
                        *label = rng.random_range(0..k);
                    }
                }
            }
        }
        memberships.push(ClassAssignment::new(labels.clone(), k)?);
    }

    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(steps);
    for t in 0..steps {
        let classes = &memberships[t];
        let mut snap = Snapshot::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if spec.persistence > 0.0 && t > 0 && rng.random::<f64>() < spec.persistence {
                    if snapshots[t - 1].has_edge(i, j) {
                        snap.insert(i, j)?;
                    }
                    continue;
                }
                let p = theta[t][classes.label(i) + k * classes.label(j)];
                if rng.random::<f64>() < p {
                    snap.insert(i, j)?;
                }
            }
        }
        snapshots.push(snap);
    }
    Ok((
        SnapshotSequence::new(n, snapshots)?,
        GroundTruth {
            psi,
            theta,
            memberships,
        },
    ))
}
