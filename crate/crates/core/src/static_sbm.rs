//! Static blockmodel likelihood and its maximum-likelihood estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_data::{block_of, BlockStats};

/// Default probability clamp keeping estimates strictly inside (0, 1).
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// `k x k` matrix of block edge probabilities, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilityMatrix {
    k: usize,
    values: Vec<f64>,
    /// Blocks whose value was filled in rather than estimated (no possible edges).
    imputed: Vec<bool>,
}

impl EdgeProbabilityMatrix {
    /// Builds a matrix from row-major values; every entry must lie in the open interval (0, 1).
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() != k * k {
            return Err(Error::Dimension(format!(
                "{} values for a {k}x{k} probability matrix",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!(
                "edge probability {bad} outside (0, 1)"
            )));
        }
        Ok(Self {
            k,
            imputed: vec![false; k * k],
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("probability matrix must be square".into()));
        }
        Self::new(k, rows.concat())
    }

    pub fn constant(k: usize, value: f64) -> Result<Self> {
        Self::new(k, vec![value; k * k])
    }

    /// From a column-stacked vector, as produced by the state-space code.
    pub fn from_vectorized(k: usize, vectorized: &[f64]) -> Result<Self> {
        if vectorized.len() != k * k {
            return Err(Error::Dimension(format!(
                "vector of length {} for k = {k}",
                vectorized.len()
            )));
        }
        let mut values = vec![0.0; k * k];
        for (idx, &v) in vectorized.iter().enumerate() {
            let (a, b) = block_of(idx, k);
            values[a * k + b] = v;
        }
        Self::new(k, values)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    pub fn is_imputed(&self, a: usize, b: usize) -> bool {
        self.imputed[a * self.k + b]
    }

    pub fn vectorized(&self) -> Vec<f64> {
        let k = self.k;
        (0..k * k)
            .map(|idx| {
                let (a, b) = block_of(idx, k);
                self.get(a, b)
            })
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k).map(<[f64]>::to_vec).collect()
    }
}

/// Bernoulli blockmodel log-likelihood from block counts. Blocks with no possible edges are skipped.
pub fn log_likelihood(stats: &BlockStats, theta: &EdgeProbabilityMatrix) -> Result<f64> {
    let k = stats.k();
    if theta.k() != k {
        return Err(Error::Dimension(format!(
            "statistics have k = {k}, probabilities have k = {}",
            theta.k()
        )));
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            let n = stats.n(a, b);
            if n == 0 {
                continue;
            }
            let p = theta.get(a, b);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Domain(format!(
                    "theta[{a}][{b}] = {p} outside (0, 1)"
                )));
            }
            let m = stats.m(a, b);
            total += bernoulli_block_term(m, n, p);
        }
    }
    Ok(total)
}

#[inline]
pub(crate) fn bernoulli_block_term(m: u64, n: u64, p: f64) -> f64 {
    let mut term = 0.0;
    if m > 0 {
        term += m as f64 * p.ln();
    }
    if n > m {
        term += (n - m) as f64 * (-p).ln_1p();
    }
    term
}

/// Block densities clamped into `[epsilon, 1 - epsilon]`; unobserved blocks are set to 0.5 and flagged.
pub fn mle_theta(stats: &BlockStats, epsilon: f64) -> EdgeProbabilityMatrix {
    let k = stats.k();
    let mut values = vec![0.5; k * k];
    let mut imputed = vec![false; k * k];
    for a in 0..k {
        for b in 0..k {
            match stats.density(a, b) {
                Some(y) => values[a * k + b] = y.clamp(epsilon, 1.0 - epsilon),
                None => imputed[a * k + b] = true,
            }
        }
    }
    EdgeProbabilityMatrix { k, values, imputed }
}
