//! Python bindings for the core crate.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sparse_mfc::census::{self as nbhd, KeyMode};
use sparse_mfc::config::ExperimentConfig;
use sparse_mfc::dp::{self, ObservationPolicy, RewardTarget};
use sparse_mfc::env::{self, EnvParams, Penalty};
use sparse_mfc::graph::{self, Decoration, GraphKind, GraphSpec};
use sparse_mfc::noise::NoiseStreams;
use sparse_mfc::policy::{self, LocalPolicyParams, ObservationMode};
use sparse_mfc::studies;

fn py_err(e: sparse_mfc::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_deco(states: &str) -> PyResult<Decoration> {
    Decoration::parse(states).ok_or_else(|| PyValueError::new_err(format!("bad state string {states:?}")))
}

fn parse_mode(mode: &str) -> PyResult<ObservationMode> {
    mode.parse().map_err(py_err)
}

/// Undirected simple graph.
#[pyclass(module = "sparse_mfc_py")]
#[derive(Clone)]
struct Graph {
    inner: graph::Graph,
}

#[pymethods]
impl Graph {
    /// Generated family: `grid`, `cliques`, `er`, `path`, `cycle` or `tree`.
    #[staticmethod]
    #[pyo3(signature = (kind, seed=0, width=20, height=20, count=20, size=3, n=100, d=3.0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(kind: &str, seed: u64, width: usize, height: usize, count: usize, size: usize, n: usize, d: f64) -> PyResult<Self> {
        let kind = match kind {
            "grid" => GraphKind::Grid { width, height },
            "cliques" => GraphKind::Cliques { count, size },
            "er" => GraphKind::Er { n, d },
            "path" => GraphKind::Path { n },
            "cycle" => GraphKind::Cycle { n },
            "tree" => GraphKind::Tree { n },
            other => return Err(PyValueError::new_err(format!("unknown graph kind {other:?}"))),
        };
        let inner = graph::generate(&GraphSpec::new(kind, seed)).map_err(py_err)?;
        Ok(Graph { inner })
    }

    #[staticmethod]
    fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = graph::Graph::from_edges(n, &edges, "custom").map_err(py_err)?;
        Ok(Graph { inner })
    }

    /// Parses the edge-list text format; returns the graph and the states
    /// string when present.
    #[staticmethod]
    fn from_edge_list(text: &str) -> PyResult<(Self, Option<String>)> {
        let (inner, deco) = graph::parse_edge_list(text, &PathBuf::from("<python>")).map_err(py_err)?;
        Ok((Graph { inner }, deco.map(|d| d.to_string())))
    }

    #[pyo3(signature = (states=None))]
    fn to_edge_list(&self, states: Option<&str>) -> PyResult<String> {
        let deco = states.map(parse_deco).transpose()?;
        Ok(graph::write_edge_list(&self.inner, deco.as_ref()))
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn tag(&self) -> String {
        self.inner.tag().to_string()
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<usize>> {
        if v >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {v} out of range")));
        }
        Ok(self.inner.neighbors(v).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Graph({:?}, nodes={}, edges={})", self.inner.tag(), self.inner.node_count(), self.inner.edge_count())
    }
}

/// Epidemic parameters from a preset (`grid`, `triangles` or `default`)
/// with keyword overrides.
#[pyclass(module = "sparse_mfc_py")]
#[derive(Clone)]
struct Params {
    inner: EnvParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (preset="default", beta=None, gamma=None, f_iso=None, c_i=None, c_v=None, c_q=None, horizon=None, clique_threshold=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        preset: &str,
        beta: Option<f64>,
        gamma: Option<f64>,
        f_iso: Option<f64>,
        c_i: Option<f64>,
        c_v: Option<f64>,
        c_q: Option<f64>,
        horizon: Option<usize>,
        clique_threshold: Option<f64>,
    ) -> PyResult<Self> {
        let mut p = match preset {
            "grid" => EnvParams::grid_experiment(),
            "triangles" => EnvParams::triangles_experiment(),
            "default" => EnvParams::default(),
            other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
        };
        p.beta = beta.unwrap_or(p.beta);
        p.gamma = gamma.unwrap_or(p.gamma);
        p.f_iso = f_iso.unwrap_or(p.f_iso);
        p.c_i = c_i.unwrap_or(p.c_i);
        p.c_v = c_v.unwrap_or(p.c_v);
        p.c_q = c_q.unwrap_or(p.c_q);
        p.horizon = horizon.unwrap_or(p.horizon);
        if let Some(tau) = clique_threshold {
            p.penalty = Penalty::CliquesWithTwoInfected(tau);
        }
        p.validate().map_err(py_err)?;
        Ok(Params { inner: p })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Neighborhood census as `(key_hex, mass, count)` rows in key order.
#[pyfunction]
#[pyo3(signature = (graph, states, radius, mode="exact"))]
fn census(graph: &Graph, states: &str, radius: usize, mode: &str) -> PyResult<Vec<(String, f64, usize)>> {
    let mode: KeyMode = mode.parse().map_err(py_err)?;
    let deco = parse_deco(states)?;
    let c = nbhd::empirical_distribution(&graph.inner, &deco, radius, mode).map_err(py_err)?;
    Ok(c.iter().map(|(k, e)| (k.to_hex(), c.mass(k), e.count)).collect())
}

/// Census CSV text, as written by the CLI.
#[pyfunction]
#[pyo3(signature = (graph, states, radius, mode="exact"))]
fn census_csv(graph: &Graph, states: &str, radius: usize, mode: &str) -> PyResult<String> {
    let mode: KeyMode = mode.parse().map_err(py_err)?;
    let deco = parse_deco(states)?;
    let c = nbhd::empirical_distribution(&graph.inner, &deco, radius, mode).map_err(py_err)?;
    Ok(c.to_csv())
}

/// Total-variation distance between the censuses of two decorated graphs.
#[pyfunction]
#[pyo3(signature = (graph_a, states_a, graph_b, states_b, radius, mode="exact"))]
fn census_tv(graph_a: &Graph, states_a: &str, graph_b: &Graph, states_b: &str, radius: usize, mode: &str) -> PyResult<f64> {
    let mode: KeyMode = mode.parse().map_err(py_err)?;
    let a = nbhd::empirical_distribution(&graph_a.inner, &parse_deco(states_a)?, radius, mode).map_err(py_err)?;
    let b = nbhd::empirical_distribution(&graph_b.inner, &parse_deco(states_b)?, radius, mode).map_err(py_err)?;
    nbhd::tv_distance(&a, &b).map_err(py_err)
}

/// One rollout of the local policy with 18 logits; returns the per-step
/// mean rewards and the state strings for `t = 0..=T`.
#[pyfunction]
#[pyo3(signature = (graph, states, logits, params, seed, mode="local6"))]
fn rollout(graph: &Graph, states: &str, logits: Vec<f64>, params: &Params, seed: u64, mode: &str) -> PyResult<(Vec<f64>, Vec<String>)> {
    let pol = LocalPolicyParams::new(logits, parse_mode(mode)?).map_err(py_err)?;
    let deco = parse_deco(states)?;
    let r = env::rollout(&graph.inner, &deco, &pol, &params.inner, &NoiseStreams::new(seed), None).map_err(py_err)?;
    Ok((r.mean_rewards, r.states.iter().map(|d| d.to_string()).collect()))
}

/// Exact expected return of a local policy from a fixed start.
#[pyfunction]
#[pyo3(signature = (graph, states, logits, params, mode="local6"))]
fn exact_value(graph: &Graph, states: &str, logits: Vec<f64>, params: &Params, mode: &str) -> PyResult<f64> {
    let local = LocalPolicyParams::new(logits, parse_mode(mode)?).map_err(py_err)?;
    let pol = ObservationPolicy::from_params(&local);
    let x0 = parse_deco(states)?;
    dp::evaluate_from(&graph.inner, &pol, &params.inner, params.inner.horizon, &x0, RewardTarget::Mean).map_err(py_err)
}

/// Graph-conditioned Gaussian policy over local-policy logits.
#[pyclass(module = "sparse_mfc_py")]
#[derive(Clone)]
struct MetaPolicy {
    inner: policy::MetaPolicy,
}

#[pymethods]
impl MetaPolicy {
    #[new]
    #[pyo3(signature = (width=16, sigma=3.0, mode="local6", seed=0))]
    fn new(width: usize, sigma: f64, mode: &str, seed: u64) -> PyResult<Self> {
        let base = policy::MetaPolicy::zero_init(width, parse_mode(mode)?, seed);
        let inner = policy::MetaPolicy::new(base.mpnn, sigma, base.mode).map_err(py_err)?;
        Ok(MetaPolicy { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(MetaPolicy {
            inner: policy::MetaPolicy::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    /// Mean logits after `passes` message passes.
    fn mean(&self, graph: &Graph, states: &str, passes: usize) -> PyResult<Vec<f64>> {
        self.inner.mean(&graph.inner, &parse_deco(states)?, passes).map_err(py_err)
    }

    fn log_density(&self, graph: &Graph, states: &str, passes: usize, logits: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&graph.inner, &parse_deco(states)?, passes, &logits).map_err(py_err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.mpnn.num_params()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
}

/// Runs the study described by a TOML config; returns the summary JSON.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run_experiment(py: Python<'_>, config: PathBuf, out: Option<PathBuf>) -> PyResult<String> {
    let cfg = ExperimentConfig::load(&config).map_err(py_err)?;
    let dir = cfg.output_dir(out.as_deref());
    py.allow_threads(|| studies::run_experiment(&cfg, &dir)).map_err(py_err)?;
    std::fs::read_to_string(dir.join("summary.json")).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn sparse_mfc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Params>()?;
    m.add_class::<MetaPolicy>()?;
    m.add_function(wrap_pyfunction!(census, m)?)?;
    m.add_function(wrap_pyfunction!(census_csv, m)?)?;
    m.add_function(wrap_pyfunction!(census_tv, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(exact_value, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
