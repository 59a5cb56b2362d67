//! Run configuration: a TOML file whose every key is known, overridden by flags.

use std::path::{Path, PathBuf};

use dsbm::aposteriori::SearchConfig;
use dsbm::net_data::vec_index;
use dsbm::spectral::SpectralConfig;
use dsbm::state_space::{logit, Hyperparameters, PriorMean};
use dsbm::static_sbm::DEFAULT_EPSILON;
use dsbm::synth::{GeneratorSpec, MembershipMode};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMeanMode {
    Data,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub node_count: Option<usize>,
    pub k: Option<usize>,
    pub seed: u64,
    pub format: OutputFormat,
    pub confidence_level: f64,
    /// Edge-list file (`t i j`).
    pub edges: Option<PathBuf>,
    /// Class file (`i c_i`) for a priori tracking.
    pub classes: Option<PathBuf>,
    /// `estimates.json` written by `track` or `fit`, read by `predict`.
    pub estimates: Option<PathBuf>,
    /// Score file (`i j score`) read by `eval-roc`.
    pub scores: Option<PathBuf>,
    /// 1-based snapshot index that `eval-roc` scores against.
    pub eval_time: Option<usize>,
    pub hyperparameters: HyperparameterConfig,
    pub spectral: SpectralSection,
    pub search: SearchSection,
    pub generator: GeneratorSection,
    pub predict: PredictSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            node_count: None,
            k: None,
            seed: 0,
            format: OutputFormat::Csv,
            confidence_level: 0.95,
            edges: None,
            classes: None,
            estimates: None,
            scores: None,
            eval_time: None,
            hyperparameters: HyperparameterConfig::default(),
            spectral: SpectralSection::default(),
            search: SearchSection::default(),
            generator: GeneratorSection::default(),
            predict: PredictSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperparameterConfig {
    pub mu0: PriorMeanMode,
    /// `k x k` logit matrix used when `mu0 = "explicit"`.
    pub mu0_values: Option<Vec<Vec<f64>>>,
    pub gamma0_scale: f64,
    pub gamma_scale: f64,
    /// Whitespace-separated `k^2 x k^2` process-noise matrix; overrides `gamma_scale`.
    pub gamma_matrix: Option<PathBuf>,
    pub epsilon: f64,
}

impl Default for HyperparameterConfig {
    fn default() -> Self {
        Self {
            mu0: PriorMeanMode::Data,
            mu0_values: None,
            gamma0_scale: dsbm::state_space::DEFAULT_GAMMA0_SCALE,
            gamma_scale: dsbm::state_space::DEFAULT_GAMMA_SCALE,
            gamma_matrix: None,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub embedding_rank: Option<usize>,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        let d = SpectralConfig::default();
        Self {
            embedding_rank: d.embedding_rank,
            kmeans_restarts: d.kmeans_restarts,
            kmeans_max_iter: d.kmeans_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub max_sweeps: usize,
    pub objective_tol: f64,
    pub exhaustive: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            max_sweeps: d.max_sweeps,
            objective_tol: d.objective_tol,
            exhaustive: d.exhaustive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipKind {
    Static,
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub steps: usize,
    /// Initial `k x k` edge probabilities; defaults to `theta_in` / `theta_out`.
    pub theta: Option<Vec<Vec<f64>>>,
    pub theta_in: f64,
    pub theta_out: f64,
    pub gamma0_scale: f64,
    pub gamma_scale: f64,
    pub membership: MembershipKind,
    pub p_stay: f64,
    pub persistence: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            steps: 10,
            theta: None,
            theta_in: 0.3,
            theta_out: 0.05,
            gamma0_scale: 0.0,
            gamma_scale: 0.01,
            membership: MembershipKind::Static,
            p_stay: 0.95,
            persistence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub lambda: f64,
    /// Fixed combination weight; when absent it is selected on the validation prefix.
    pub eta: Option<f64>,
    pub eta_grid: Vec<f64>,
    /// Number of leading prediction steps used to select `eta`; defaults to half.
    pub validation_steps: Option<usize>,
    pub write_scores: bool,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            lambda: dsbm::link_predict::DEFAULT_LAMBDA,
            eta: None,
            eta_grid: dsbm::link_predict::uniform_grid(20),
            validation_steps: None,
            write_scores: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn require_node_count(&self) -> Result<usize, CliError> {
        match self.node_count {
            Some(n) if n > 0 => Ok(n),
            Some(_) => Err(CliError::Config("node_count must be positive".into())),
            None => Err(CliError::Config("missing key `node_count`".into())),
        }
    }

    pub fn require_k(&self) -> Result<usize, CliError> {
        match self.k {
            Some(k) if k > 0 => Ok(k),
            Some(_) => Err(CliError::Config("k must be positive".into())),
            None => Err(CliError::Config("missing key `k`".into())),
        }
    }

    pub fn require_path<'a>(
        &self,
        value: &'a Option<PathBuf>,
        key: &str,
    ) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(CliError::Config(format!(
                "confidence_level = {} must lie in (0, 1)",
                self.confidence_level
            )));
        }
        let hp = &self.hyperparameters;
        if !(hp.epsilon > 0.0 && hp.epsilon < 0.5) {
            return Err(CliError::Config(format!(
                "hyperparameters.epsilon = {} must lie in (0, 0.5)",
                hp.epsilon
            )));
        }
        if hp.gamma0_scale < 0.0 || hp.gamma_scale < 0.0 {
            return Err(CliError::Config(
                "hyperparameter scales must be nonnegative".into(),
            ));
        }
        let p = &self.predict;
        if !(0.0..=1.0).contains(&p.lambda) {
            return Err(CliError::Config(format!(
                "predict.lambda = {} must lie in [0, 1]",
                p.lambda
            )));
        }
        if let Some(eta) = p.eta {
            if !(0.0..=1.0).contains(&eta) {
                return Err(CliError::Config(format!(
                    "predict.eta = {eta} must lie in [0, 1]"
                )));
            }
        }
        if p.eta_grid.is_empty() || p.eta_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(CliError::Config(
                "predict.eta_grid must be nonempty values in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn hyperparameters(&self, k: usize) -> Result<Hyperparameters, CliError> {
        let cfg = &self.hyperparameters;
        let mut hp = Hyperparameters::isotropic(k, cfg.gamma0_scale, cfg.gamma_scale);
        hp.epsilon = cfg.epsilon;
        if let Some(path) = &cfg.gamma_matrix {
            hp.gamma = read_matrix(path, k * k)?;
        }
        hp.prior_mean = match cfg.mu0 {
            PriorMeanMode::Data => PriorMean::FromData,
            PriorMeanMode::Explicit => {
                let rows = cfg.mu0_values.as_ref().ok_or_else(|| {
                    CliError::Config("hyperparameters.mu0 = \"explicit\" needs mu0_values".into())
                })?;
                PriorMean::Explicit(vectorize_rows(rows, k, "hyperparameters.mu0_values")?)
            }
        };
        hp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(hp)
    }

    pub fn spectral_config(&self) -> SpectralConfig {
        SpectralConfig {
            embedding_rank: self.spectral.embedding_rank,
            kmeans_restarts: self.spectral.kmeans_restarts,
            kmeans_max_iter: self.spectral.kmeans_max_iter,
            seed: self.seed,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            max_sweeps: self.search.max_sweeps,
            objective_tol: self.search.objective_tol,
            exhaustive: self.search.exhaustive,
        }
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec, CliError> {
        let n = self.require_node_count()?;
        let k = self.require_k()?;
        let g = &self.generator;
        let rows = match &g.theta {
            Some(rows) => rows.clone(),
            None => (0..k)
                .map(|a| {
                    (0..k)
                        .map(|b| if a == b { g.theta_in } else { g.theta_out })
                        .collect()
                })
                .collect(),
        };
        let probs = vectorize_rows(&rows, k, "generator.theta")?;
        let mu0 = probs
            .iter()
            .map(|&p| logit(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("generator.theta: {e}")))?;
        let membership = match g.membership {
            MembershipKind::Static => MembershipMode::Static,
            MembershipKind::Markov => MembershipMode::Markov { p_stay: g.p_stay },
        };
        let spec = GeneratorSpec {
            node_count: n,
            k,
            steps: g.steps,
            hp: Hyperparameters::isotropic(k, g.gamma0_scale, g.gamma_scale)
                .with_prior_mean(DVector::from_vec(mu0)),
            membership,
            persistence: g.persistence,
            seed: self.seed,
        };
        spec.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Row-major `k x k` matrix to the column-stacked state layout.
fn vectorize_rows(rows: &[Vec<f64>], k: usize, key: &str) -> Result<DVector<f64>, CliError> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(CliError::Config(format!("{key} must be a {k}x{k} matrix")));
    }
    let mut v = DVector::zeros(k * k);
    for (a, row) in rows.iter().enumerate() {
        for (b, &x) in row.iter().enumerate() {
            v[vec_index(a, b, k)] = x;
        }
    }
    Ok(v)
}

fn read_matrix(path: &Path, dim: usize) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if values.len() != dim * dim {
        return Err(CliError::Config(format!(
            "{}: expected {} entries for a {dim}x{dim} matrix, found {}",
            path.display(),
            dim * dim,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(dim, dim, &values))
}
