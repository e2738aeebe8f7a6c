//! Python bindings: graphs, labels, SBM generation, attacks, victim
//! evaluation and diagnostics. Reports come back as plain dicts.

use std::path::PathBuf;
use std::str::FromStr;

use edgepoison::attack::{self, AttackConfig, LossKind};
use edgepoison::diagnostics::{self, BipartitePolicy, LpaScenario};
use edgepoison::graph::{self, Graph, LabelData};
use edgepoison::{io, victim, Architecture, AttackTrace, Csr};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

create_exception!(edgepoison_py, EdgePoisonError, PyException);

fn err(e: edgepoison::Error) -> PyErr {
    EdgePoisonError::new_err(format!("{}: {e}", e.kind()))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (_, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn report<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| EdgePoisonError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Undirected simple graph with node features.
#[pyclass(name = "Graph", module = "edgepoison_py", skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: Graph,
}

#[pymethods]
impl PyGraph {
    /// `features` is a list of rows; identity features when omitted.
    #[new]
    #[pyo3(signature = (n_nodes, edges, features=None))]
    fn new(n_nodes: usize, edges: Vec<(usize, usize)>, features: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let inner = match features {
            None => Graph::from_edges(n_nodes, &edges),
            Some(rows) => {
                let d = rows.first().map_or(0, Vec::len);
                if rows.len() != n_nodes || rows.iter().any(|r| r.len() != d) {
                    return Err(EdgePoisonError::new_err("features must be an n_nodes x d list of rows"));
                }
                let triplets = rows
                    .iter()
                    .enumerate()
                    .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, v)| (i, j, *v)))
                    .collect();
                Csr::from_triplets(n_nodes, d, triplets).and_then(|x| Graph::new(n_nodes, &edges, x))
            }
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn has_edge(&self, i: usize, j: usize) -> bool {
        self.inner.has_edge(i, j)
    }

    /// Toggle `(i, j)`; returns whether the edge now exists.
    fn flip(&mut self, i: usize, j: usize) -> PyResult<bool> {
        let n = self.inner.n_nodes();
        if i == j || i >= n || j >= n {
            return Err(EdgePoisonError::new_err(format!("invalid pair ({i}, {j}) for {n} nodes")));
        }
        Ok(self.inner.flip(i, j))
    }

    #[pyo3(signature = (labels, include_self_loops=false))]
    fn homophily(&self, labels: Vec<usize>, include_self_loops: bool) -> PyResult<f64> {
        graph::homophily(&self.inner, &labels, include_self_loops).map_err(err)
    }

    fn dense_adjacency(&self) -> Vec<Vec<f64>> {
        self.inner.dense_adjacency().rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    fn __len__(&self) -> usize {
        self.inner.edge_count()
    }

    fn __eq__(&self, other: &PyGraph) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Graph(n_nodes={}, edges={})", self.inner.n_nodes(), self.inner.edge_count())
    }
}

/// Ground-truth labels with a train/test split.
#[pyclass(name = "Labels", module = "edgepoison_py", skip_from_py_object)]
#[derive(Clone)]
struct PyLabels {
    inner: LabelData,
}

#[pymethods]
impl PyLabels {
    #[new]
    fn new(labels: Vec<usize>, k_classes: usize, train: Vec<usize>, test: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: LabelData::new(labels, k_classes, train, test).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (labels, k_classes, train_fraction=0.1, seed=0))]
    fn stratified(labels: Vec<usize>, k_classes: usize, train_fraction: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: LabelData::stratified(labels, k_classes, train_fraction, seed).map_err(err)?,
        })
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn k_classes(&self) -> usize {
        self.inner.k_classes
    }

    #[getter]
    fn train(&self) -> Vec<usize> {
        self.inner.train.clone()
    }

    #[getter]
    fn test(&self) -> Vec<usize> {
        self.inner.test.clone()
    }
}

/// Record of an attack run.
#[pyclass(name = "Trace", module = "edgepoison_py", skip_from_py_object)]
#[derive(Clone)]
struct PyTrace {
    inner: AttackTrace,
}

#[pymethods]
impl PyTrace {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn clean_h_gt(&self) -> f64 {
        self.inner.clean_h_gt
    }

    #[getter]
    fn clean_h_pseudo(&self) -> f64 {
        self.inner.clean_h_pseudo
    }

    #[getter]
    fn clean_edge_count(&self) -> usize {
        self.inner.clean_edge_count
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report(py, &self.inner.records)
    }

    fn trajectory<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report(py, &diagnostics::homophily_trajectory(&self.inner))
    }

    fn interclass<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report(py, &diagnostics::interclass_fraction(&self.inner))
    }

    /// Apply the trace to `clean`, checking every step.
    fn replay(&self, clean: &PyGraph) -> PyResult<PyGraph> {
        Ok(PyGraph {
            inner: attack::replay(&clean.inner, &self.inner.records).map_err(err)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (n, k, p_intra, p_inter, seed=0))]
fn generate_sbm(n: usize, k: usize, p_intra: f64, p_inter: f64, seed: u64) -> PyResult<(PyGraph, PyLabels)> {
    let (g, l) = graph::generate_sbm(n, k, p_intra, p_inter, seed).map_err(err)?;
    Ok((PyGraph { inner: g }, PyLabels { inner: l }))
}

#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<(PyGraph, PyLabels)> {
    let (g, l) = io::load_dataset(&path).map_err(err)?;
    Ok((PyGraph { inner: g }, PyLabels { inner: l }))
}

#[pyfunction]
#[pyo3(signature = (path, graph, labels, split_seed=0))]
fn save_dataset(path: PathBuf, graph: &PyGraph, labels: &PyLabels, split_seed: u64) -> PyResult<()> {
    std::fs::create_dir_all(&path).map_err(|e| EdgePoisonError::new_err(e.to_string()))?;
    io::save_dataset(&path, &graph.inner, &labels.inner, split_seed).map_err(err)
}

/// Greedy saliency attack; returns the poisoned graph and its trace.
#[pyfunction]
#[pyo3(signature = (graph, labels, surrogate="multihop", loss="ce", epsilon=1.0, budget=None, budget_fraction=0.05, retrain_every=1, epochs=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_attack(
    py: Python<'_>,
    graph: &PyGraph,
    labels: &PyLabels,
    surrogate: &str,
    loss: &str,
    epsilon: f64,
    budget: Option<usize>,
    budget_fraction: f64,
    retrain_every: usize,
    epochs: Option<usize>,
    seed: u64,
) -> PyResult<(PyGraph, PyTrace)> {
    let arch = Architecture::from_str(surrogate).map_err(err)?;
    let mut config = AttackConfig::new(arch, seed);
    config.loss = LossKind::from_str(loss).map_err(err)?;
    config.epsilon = epsilon;
    config.budget = budget;
    config.budget_fraction = budget_fraction;
    config.retrain_every = retrain_every;
    if let Some(e) = epochs {
        config.train.epochs = e;
    }
    let (g, l) = (&graph.inner, &labels.inner);
    let (poisoned, trace) = py.detach(|| attack::run_attack(g, l, &config)).map_err(err)?;
    Ok((PyGraph { inner: poisoned }, PyTrace { inner: trace }))
}

/// Random baseline: remove intra-class edges or add inter-class edges.
#[pyfunction]
#[pyo3(signature = (graph, labels, budget, seed=0))]
fn dice_attack(graph: &PyGraph, labels: &PyLabels, budget: usize, seed: u64) -> PyResult<(PyGraph, PyTrace)> {
    let (poisoned, trace) = attack::dice_attack(&graph.inner, &labels.inner, budget, seed).map_err(err)?;
    Ok((PyGraph { inner: poisoned }, PyTrace { inner: trace }))
}

#[pyfunction]
#[pyo3(signature = (graph, labels, runs=10, seed=0))]
fn evaluate_victim<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    labels: &PyLabels,
    runs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (g, l) = (&graph.inner, &labels.inner);
    let r = py.detach(|| victim::evaluate_victim(g, l, runs, seed)).map_err(err)?;
    report(py, &r)
}

#[pyfunction]
fn lpa_report<'py>(py: Python<'py>, n1: usize, n2: usize, delta: f64) -> PyResult<Bound<'py, PyAny>> {
    let s = LpaScenario::new(n1, n2, delta).map_err(err)?;
    report(py, &diagnostics::lpa_report(&s))
}

/// Spectrum of the normalized adjacency; bipartite graphs are reported
/// rather than rejected.
#[pyfunction]
fn spectral_analysis<'py>(py: Python<'py>, graph: &PyGraph) -> PyResult<Bound<'py, PyAny>> {
    report(py, &diagnostics::spectral_analysis(&graph.inner, BipartitePolicy::Warn).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (trials=100, dim=6, delta_a=1e-3, seed=0))]
fn lemma1_trials<'py>(py: Python<'py>, trials: usize, dim: usize, delta_a: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    report(py, &diagnostics::lemma1_gcn_trials(trials, dim, delta_a, seed).map_err(err)?)
}

/// Pairwise-distance trace under repeated aggregation of the graph's own
/// features.
#[pyfunction]
#[pyo3(signature = (graph, tau_max=200, seed=0))]
fn smoothing_trace<'py>(py: Python<'py>, graph: &PyGraph, tau_max: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let x = graph.inner.features().to_dense();
    report(py, &diagnostics::smoothing_trace(&graph.inner, &x, tau_max, None, seed).map_err(err)?)
}

#[pyfunction]
fn predicted_homophily(h0: f64, edge_count: usize, additions: usize) -> f64 {
    graph::predicted_homophily_after_additions(h0, edge_count, additions)
}

#[pymodule]
fn edgepoison_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EdgePoisonError", m.py().get_type::<EdgePoisonError>())?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyLabels>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(generate_sbm, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(save_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_attack, m)?)?;
    m.add_function(wrap_pyfunction!(dice_attack, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_victim, m)?)?;
    m.add_function(wrap_pyfunction!(lpa_report, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(lemma1_trials, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_trace, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_homophily, m)?)?;
    Ok(())
}
