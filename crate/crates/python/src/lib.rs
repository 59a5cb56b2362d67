//! Python bindings. Snapshot indices are 0-based Python indices; the `time`
//! fields in returned records are 1-based, as in the CLI outputs.

use dsbm::aposteriori::{fit_sequence, SearchConfig};
use dsbm::link_predict::{predict_sequence, roc_from_scores, StepEstimate};
use dsbm::net_data::{load_snapshots, vec_index};
use dsbm::spectral::SpectralConfig;
use dsbm::state_space::{logistic_scalar, track_apriori, Hyperparameters};
use dsbm::static_sbm::{
    log_likelihood as sbm_log_likelihood, mle_theta as sbm_mle_theta, DEFAULT_EPSILON,
};
use dsbm::synth::{generate as synth_generate, GeneratorSpec, MembershipMode};
use dsbm::{BlockStats, ClassAssignment, EdgeProbabilityMatrix, Snapshot, SnapshotSequence};
use nalgebra::DVector;
use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: dsbm::Error) -> PyErr {
    match e {
        dsbm::Error::SingularInnovation { .. } | dsbm::Error::SingularPrior => {
            PyRuntimeError::new_err(e.to_string())
        }
        dsbm::Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A sequence of directed graph snapshots over a fixed node set.
#[pyclass(name = "Snapshots", module = "dsbm_py")]
struct PySnapshots {
    inner: SnapshotSequence,
}

#[pymethods]
impl PySnapshots {
    /// Builds a sequence from `(t, i, j)` triples; times are re-indexed densely.
    #[new]
    fn new(node_count: usize, edges: Vec<(u64, usize, usize)>) -> PyResult<Self> {
        let mut times: Vec<u64> = edges.iter().map(|e| e.0).collect();
        times.sort_unstable();
        times.dedup();
        let mut snaps = vec![Snapshot::empty(node_count); times.len()];
        for (t, i, j) in edges {
            let idx = times.binary_search(&t).expect("time collected above");
            snaps[idx].insert(i, j).map_err(py_err)?;
        }
        Ok(Self {
            inner: SnapshotSequence::new(node_count, snaps).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str, node_count: usize) -> PyResult<Self> {
        Ok(Self {
            inner: load_snapshots(path, node_count).map_err(py_err)?,
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Edges of snapshot `t` as `(i, j)` pairs.
    fn edges(&self, t: usize) -> PyResult<Vec<(usize, usize)>> {
        Ok(self.snapshot(t)?.edges().collect())
    }

    fn write_edge_list(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        self.inner
            .write_edge_list(std::io::BufWriter::new(file))
            .map_err(|e| PyOSError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Snapshots(node_count={}, steps={})",
            self.inner.node_count(),
            self.inner.len()
        )
    }
}

impl PySnapshots {
    fn snapshot(&self, t: usize) -> PyResult<&Snapshot> {
        self.inner
            .get(t)
            .ok_or_else(|| PyIndexError::new_err(format!("snapshot {t} of {}", self.inner.len())))
    }

    fn stats(&self, t: usize, labels: Vec<usize>, k: usize) -> PyResult<BlockStats> {
        let classes = ClassAssignment::new(labels, k).map_err(py_err)?;
        dsbm::block_counts(self.snapshot(t)?, &classes).map_err(py_err)
    }
}

/// Edge counts `m`, possible edges `n` (row-major `k x k`) and class sizes.
#[pyfunction]
fn block_counts<'py>(
    py: Python<'py>,
    snapshots: PyRef<'_, PySnapshots>,
    t: usize,
    labels: Vec<usize>,
    k: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = snapshots.stats(t, labels, k)?;
    let grid = |f: &dyn Fn(usize, usize) -> u64| -> Vec<Vec<u64>> {
        (0..k).map(|a| (0..k).map(|b| f(a, b)).collect()).collect()
    };
    let out = PyDict::new(py);
    out.set_item("m", grid(&|a, b| stats.m(a, b)))?;
    out.set_item("n", grid(&|a, b| stats.n(a, b)))?;
    out.set_item("sizes", stats.sizes().to_vec())?;
    Ok(out)
}

#[pyfunction]
fn log_likelihood(
    snapshots: PyRef<'_, PySnapshots>,
    t: usize,
    labels: Vec<usize>,
    k: usize,
    theta: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let stats = snapshots.stats(t, labels, k)?;
    let theta = EdgeProbabilityMatrix::from_rows(&theta).map_err(py_err)?;
    sbm_log_likelihood(&stats, &theta).map_err(py_err)
}

/// Clamped block densities; blocks with no possible edges get 0.5.
#[pyfunction]
#[pyo3(signature = (snapshots, t, labels, k, epsilon = DEFAULT_EPSILON))]
fn mle_theta(
    snapshots: PyRef<'_, PySnapshots>,
    t: usize,
    labels: Vec<usize>,
    k: usize,
    epsilon: f64,
) -> PyResult<Vec<Vec<f64>>> {
    Ok(sbm_mle_theta(&snapshots.stats(t, labels, k)?, epsilon).rows())
}

#[pyfunction]
fn logit(p: f64) -> PyResult<f64> {
    dsbm::state_space::logit(p).map_err(py_err)
}

#[pyfunction]
fn logistic(x: f64) -> f64 {
    logistic_scalar(x)
}

fn hyperparameters(k: usize, gamma0: f64, gamma: f64) -> PyResult<Hyperparameters> {
    let hp = Hyperparameters::isotropic(k, gamma0, gamma);
    hp.validate().map_err(py_err)?;
    Ok(hp)
}

fn rows(values: &[f64], k: usize) -> Vec<Vec<f64>> {
    values.chunks(k).map(<[f64]>::to_vec).collect()
}

/// A priori tracking with fixed classes. Returns one record per snapshot.
#[pyfunction]
#[pyo3(signature = (snapshots, labels, k, gamma0 = 1.0, gamma = 0.01, confidence_level = 0.95))]
fn track<'py>(
    py: Python<'py>,
    snapshots: PyRef<'_, PySnapshots>,
    labels: Vec<usize>,
    k: usize,
    gamma0: f64,
    gamma: f64,
    confidence_level: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let classes = ClassAssignment::new(labels, k).map_err(py_err)?;
    let steps = track_apriori(
        &snapshots.inner,
        &[classes],
        &hyperparameters(k, gamma0, gamma)?,
        confidence_level,
    )
    .map_err(py_err)?;
    steps
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("time", s.time)?;
            d.set_item("theta", s.theta.rows())?;
            d.set_item("lower", rows(&s.lower, k))?;
            d.set_item("upper", rows(&s.upper, k))?;
            d.set_item("innovation_norm", s.innovation_norm)?;
            Ok(d)
        })
        .collect()
}

/// Online a posteriori fit: spectral start, then label switching at every step.
#[pyfunction]
#[pyo3(signature = (snapshots, k, seed = 0, max_sweeps = 50, gamma0 = 1.0, gamma = 0.01))]
fn fit<'py>(
    py: Python<'py>,
    snapshots: PyRef<'_, PySnapshots>,
    k: usize,
    seed: u64,
    max_sweeps: usize,
    gamma0: f64,
    gamma: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spectral = SpectralConfig {
        seed,
        ..SpectralConfig::default()
    };
    let search = SearchConfig {
        max_sweeps,
        ..SearchConfig::default()
    };
    let fits = fit_sequence(
        &snapshots.inner,
        k,
        &hyperparameters(k, gamma0, gamma)?,
        &spectral,
        &search,
    )
    .map_err(py_err)?;
    fits.iter()
        .enumerate()
        .map(|(t, f)| {
            let d = PyDict::new(py);
            d.set_item("time", t + 1)?;
            d.set_item("labels", f.assignment.labels().to_vec())?;
            d.set_item("theta", f.state.theta().rows())?;
            d.set_item("objective", f.objective)?;
            d.set_item("iterations", f.iterations)?;
            d.set_item("budget_limited", f.budget_limited)?;
            d.set_item("label_agreement", f.label_agreement)?;
            Ok(d)
        })
        .collect()
}

/// Samples a planted two-level blockmodel sequence. Returns the snapshots and
/// a dict with the true `theta` (row-major per step) and `memberships`.
#[pyfunction]
#[pyo3(signature = (node_count, k, steps, theta_in, theta_out, seed = 0, gamma = 0.0, persistence = 0.0, p_stay = None))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    node_count: usize,
    k: usize,
    steps: usize,
    theta_in: f64,
    theta_out: f64,
    seed: u64,
    gamma: f64,
    persistence: f64,
    p_stay: Option<f64>,
) -> PyResult<(PySnapshots, Bound<'py, PyDict>)> {
    let mut spec =
        GeneratorSpec::planted(node_count, k, theta_in, theta_out, steps, seed).map_err(py_err)?;
    spec.hp.gamma = nalgebra::DMatrix::identity(k * k, k * k) * gamma;
    spec.persistence = persistence;
    if let Some(p_stay) = p_stay {
        spec.membership = MembershipMode::Markov { p_stay };
    }
    let (seq, truth) = synth_generate(&spec).map_err(py_err)?;
    let theta: Vec<Vec<Vec<f64>>> = truth
        .theta
        .iter()
        .map(|v: &DVector<f64>| {
            (0..k)
                .map(|a| (0..k).map(|b| v[vec_index(a, b, k)]).collect())
                .collect()
        })
        .collect();
    let memberships: Vec<Vec<usize>> = truth
        .memberships
        .iter()
        .map(|m| m.labels().to_vec())
        .collect();
    let d = PyDict::new(py);
    d.set_item("theta", theta)?;
    d.set_item("memberships", memberships)?;
    Ok((PySnapshots { inner: seq }, d))
}

/// ROC points `(threshold, fpr, tpr)` and AUC with ties counted half.
#[pyfunction]
fn roc_curve<'py>(
    py: Python<'py>,
    scores: Vec<f64>,
    labels: Vec<bool>,
) -> PyResult<Bound<'py, PyDict>> {
    let roc = roc_from_scores(&scores, &labels).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("auc", roc.auc)?;
    d.set_item(
        "points",
        roc.points
            .iter()
            .map(|p| (p.threshold, p.fpr, p.tpr))
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Predicts snapshots `2..=T` from per-step `(theta_rows, labels)` estimates
/// and returns the pooled and per-step AUCs.
#[pyfunction]
#[pyo3(signature = (snapshots, estimates, k, lam = 0.5, eta = 0.5))]
fn predict<'py>(
    py: Python<'py>,
    snapshots: PyRef<'_, PySnapshots>,
    estimates: Vec<(Vec<Vec<f64>>, Vec<usize>)>,
    k: usize,
    lam: f64,
    eta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let estimates = estimates
        .into_iter()
        .map(|(theta, labels)| {
            Ok(StepEstimate {
                theta: EdgeProbabilityMatrix::from_rows(&theta)?,
                classes: ClassAssignment::new(labels, k)?,
            })
        })
        .collect::<dsbm::Result<Vec<_>>>()
        .map_err(py_err)?;
    let report = predict_sequence(&snapshots.inner, &estimates, lam, eta).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("auc", report.pooled.auc)?;
    d.set_item("lambda", report.lambda)?;
    d.set_item("eta", report.eta)?;
    d.set_item(
        "steps",
        report
            .steps
            .iter()
            .map(|s| (s.target_time, s.auc))
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

#[pymodule]
fn dsbm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySnapshots>()?;
    m.add_function(wrap_pyfunction!(block_counts, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(mle_theta, m)?)?;
    m.add_function(wrap_pyfunction!(logit, m)?)?;
    m.add_function(wrap_pyfunction!(logistic, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    Ok(())
}
