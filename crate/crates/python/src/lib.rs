//! Python bindings: graphs, moment analysis, gradient checks, policy
//! optimisation and cascade simulation.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wmg::gradients::{fd_verify_all, FD_STEP};
use wmg::graph::{parse_json, to_json, RandomGraphSpec, WeightModel};
use wmg::optimizer::{
    baseline_policy, build_feasible_set, optimize_policy as optimize, Objective, OptimizerConfig,
};
use wmg::passage::monte_carlo_passage;
use wmg::surveillance::{run_surveillance_study, GridSpec, StudyMode};
use wmg::traffic::{aggregate_cascades, gen_geometric_graph, run_study, CascadeConfig, PolicyKind};
use wmg::{EdgeSpec, WeightedMarkovGraph, WmgError};

fn err(e: WmgError) -> PyErr {
    match e {
        WmgError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> PyResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("{what} must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// A weighted Markovian graph.
#[pyclass(name = "Graph", module = "wmg", frozen)]
struct PyGraph {
    inner: WeightedMarkovGraph,
}

#[pymethods]
impl PyGraph {
    /// `edges` holds `(from, to, p, w_mean)` tuples. `cv`, when given, has one
    /// entry per edge; positive entries draw the weight from `dist`.
    #[new]
    #[pyo3(signature = (n, edges, cv=None, dist="lognormal"))]
    fn new(n: usize, edges: Vec<(usize, usize, f64, f64)>, cv: Option<Vec<f64>>, dist: &str) -> PyResult<Self> {
        if cv.as_ref().is_some_and(|c| c.len() != edges.len()) {
            return Err(PyValueError::new_err("cv must have one entry per edge"));
        }
        let specs = edges
            .iter()
            .enumerate()
            .map(|(e, &(from, to, p, w_mean))| {
                let c = cv.as_ref().map_or(0.0, |c| c[e]);
                let model = WeightModel::from_cv(c, (c > 0.0).then_some(dist)).map_err(PyValueError::new_err)?;
                Ok(EdgeSpec { from, to, p, w_mean, model })
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: WeightedMarkovGraph::from_edges(n, &specs).map_err(err)? })
    }

    /// Reads a `.json` or `.csv` graph file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: wmg::graph::load_graph(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = parse_json(text).map_err(err)?;
        let report = doc.graph.validate();
        if !report.is_empty() {
            return Err(err(WmgError::Invalid(report)));
        }
        Ok(Self { inner: doc.graph })
    }

    /// Random strongly connected graph.
    #[staticmethod]
    #[pyo3(signature = (n, seed, density=0.4, stochastic=0.0))]
    fn random(n: usize, seed: u64, density: f64, stochastic: f64) -> Self {
        Self { inner: RandomGraphSpec::new(n).density(density).stochastic(stochastic).generate(seed) }
    }

    /// Random geometric network on the unit square.
    #[staticmethod]
    #[pyo3(signature = (n, degree, seed, weight_range=(1.0, 10.0)))]
    fn geometric(n: usize, degree: f64, seed: u64, weight_range: (f64, f64)) -> PyResult<Self> {
        Ok(Self { inner: gen_geometric_graph(n, degree, weight_range, seed).map_err(err)?.graph })
    }

    fn to_json(&self) -> String {
        to_json(&self.inner, None, None)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter(P)]
    fn p(&self) -> Vec<Vec<f64>> {
        rows(self.inner.p())
    }

    #[getter(W)]
    fn w(&self) -> Vec<Vec<f64>> {
        rows(self.inner.w())
    }

    #[getter(W2)]
    fn w2(&self) -> Vec<Vec<f64>> {
        rows(self.inner.w2())
    }

    /// Copy with a new transition matrix on the same support.
    fn with_transition(&self, p: Vec<Vec<f64>>) -> PyResult<Self> {
        let p = matrix(&p, self.inner.n(), "P")?;
        let g = self.inner.with_transition(&p);
        let report = g.validate();
        if !report.is_empty() {
            return Err(err(WmgError::Invalid(report)));
        }
        Ok(Self { inner: g })
    }

    /// Copy with new mean weights; second moments follow each edge's CV.
    fn with_weights(&self, w: Vec<Vec<f64>>) -> PyResult<Self> {
        let w = matrix(&w, self.inner.n(), "W")?;
        Ok(Self { inner: self.inner.with_weights(&w) })
    }

    /// Validation messages; empty when the graph is valid.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().messages()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

/// First-passage moments and Kemeny constants of a graph.
#[pyclass(name = "Evaluation", module = "wmg", frozen)]
struct PyEvaluation {
    inner: wmg::Evaluation,
}

#[pymethods]
impl PyEvaluation {
    #[getter]
    fn k(&self) -> f64 {
        self.inner.summary.k
    }

    #[getter]
    fn k_w(&self) -> f64 {
        self.inner.summary.k_w
    }

    #[getter]
    fn v(&self) -> f64 {
        self.inner.summary.v
    }

    #[getter]
    fn v_w(&self) -> f64 {
        self.inner.summary.v_w
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.summary.s
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.summary.r
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        vector(&self.inner.analysis.pi)
    }

    #[getter]
    fn pi_w(&self) -> Vec<f64> {
        vector(&self.inner.analysis.pi_w)
    }

    #[getter(Z)]
    fn z(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.analysis.z)
    }

    #[getter(L)]
    fn l(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.moments.l)
    }

    #[getter(M)]
    fn m(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.moments.m)
    }

    #[getter(M2)]
    fn m2(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.moments.m2)
    }

    #[getter(V)]
    fn var(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.moments.v)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.summary;
        format!("Evaluation(k={}, k_w={}, v={}, v_w={}, s={})", s.k, s.k_w, s.v, s.v_w, s.s)
    }
}

#[pyfunction]
fn evaluate(py: Python<'_>, graph: &PyGraph) -> PyResult<PyEvaluation> {
    let g = &graph.inner;
    Ok(PyEvaluation { inner: py.detach(|| wmg::evaluate(g)).map_err(err)? })
}

/// Monte Carlo estimate of the weighted first-passage time from `i` to `j`.
#[pyfunction]
#[pyo3(signature = (graph, i, j, episodes=100_000, seed=0))]
fn monte_carlo<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    i: usize,
    j: usize,
    episodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = &graph.inner;
    let est = py.detach(|| monte_carlo_passage(g, i, j, episodes, seed)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean", est.mean)?;
    d.set_item("variance", est.variance)?;
    d.set_item("second_moment", est.second_moment)?;
    d.set_item("mean_se", est.mean_se)?;
    d.set_item("variance_se", est.variance_se)?;
    Ok(d)
}

/// Central-difference check of every analytic derivative. Returns one dict
/// per (quantity, direction).
#[pyfunction]
#[pyo3(signature = (graph, h=FD_STEP))]
fn check_gradients<'py>(py: Python<'py>, graph: &PyGraph, h: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let g = &graph.inner;
    let reports = py.detach(|| fd_verify_all(g, h)).map_err(err)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("quantity", r.quantity.name())?;
            d.set_item("wrt", r.wrt.to_string())?;
            d.set_item("rel_err", r.rel_err)?;
            d.set_item("h", r.h)?;
            Ok(d)
        })
        .collect()
}

fn config_with(iterations: Option<usize>, seed: u64) -> OptimizerConfig {
    let mut cfg = OptimizerConfig { seed, ..OptimizerConfig::default() };
    if let Some(it) = iterations {
        cfg.iterations = it;
    }
    cfg
}

/// Optimises the transition matrix on the support of `graph` subject to
/// `μP = μ` and `P ≥ η` on edges. `objective` is `"max-surprise"` or
/// `"min-variance"`.
#[pyfunction]
#[pyo3(signature = (graph, mu, eta, objective="max-surprise", iterations=None, seed=0))]
fn optimize_policy<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    mu: Vec<f64>,
    eta: f64,
    objective: &str,
    iterations: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let objective = match objective {
        "max-surprise" => Objective::MaxSurprise,
        "min-variance" => Objective::MinVariance,
        other => return Err(PyValueError::new_err(format!("unknown objective {other:?}"))),
    };
    let cfg = config_with(iterations, seed);
    let g = &graph.inner;
    let mu = DVector::from_vec(mu);
    let (base, res) = py
        .detach(|| {
            let set = build_feasible_set(g, &mu, eta, &cfg)?;
            if !set.is_feasible() {
                return Err(WmgError::InvalidArgument("policy feasible set is empty".into()));
            }
            Ok((baseline_policy(&set)?, optimize(g, &set, objective, &cfg)?))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("P", rows(&res.p))?;
    d.set_item("baseline", rows(&base))?;
    d.set_item("objective", res.objective)?;
    d.set_item("best_iter", res.best_iter)?;
    Ok(d)
}

/// Grid surveillance study. `spec` is the JSON text of a grid description.
#[pyfunction]
#[pyo3(signature = (spec, modes=None, iterations=None, seed=0))]
fn surveillance_study<'py>(
    py: Python<'py>,
    spec: &str,
    modes: Option<Vec<String>>,
    iterations: Option<usize>,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = GridSpec::from_json(spec).map_err(err)?;
    let modes = match modes {
        None => vec![StudyMode::MaxSurprise, StudyMode::MinVariance],
        Some(names) => names
            .iter()
            .map(|m| StudyMode::parse(m).ok_or_else(|| PyValueError::new_err(format!("unknown mode {m:?}"))))
            .collect::<PyResult<_>>()?,
    };
    let cfg = config_with(iterations, seed);
    let result = py.detach(|| run_surveillance_study(&spec, &cfg, &modes)).map_err(err)?;
    std::iter::once(&result.baseline)
        .chain(&result.policies)
        .map(|o| {
            let d = PyDict::new(py);
            d.set_item("mode", o.mode.name())?;
            d.set_item("P", rows(&o.p))?;
            d.set_item("k_w", o.summary.k_w)?;
            d.set_item("v_w", o.summary.v_w)?;
            d.set_item("s", o.summary.s)?;
            d.set_item("gain", o.gain)?;
            d.set_item("rho_p_cv", o.rho_p_cv)?;
            Ok(d)
        })
        .collect()
}

/// Cascading-failure study. `config` is JSON text; omitted fields take
/// their defaults. Returns per-policy summaries and per-run records.
#[pyfunction]
#[pyo3(signature = (config=None, seeds=None, first_seed=None, policy="all"))]
fn run_cascades<'py>(
    py: Python<'py>,
    config: Option<&str>,
    seeds: Option<usize>,
    first_seed: Option<u64>,
    policy: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match config {
        Some(text) => CascadeConfig::from_json(text).map_err(err)?,
        None => CascadeConfig::default(),
    };
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(s) = first_seed {
        cfg.first_seed = s;
    }
    let policies = match policy {
        "all" => PolicyKind::all(&cfg.destinations),
        name => vec![PolicyKind::parse(name, &cfg.destinations).map_err(err)?],
    };
    let runs = py.detach(|| run_study(&policies, &cfg)).map_err(err)?;
    let summary = aggregate_cascades(&runs, &cfg.destinations);
    let summary_list = summary
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("policy", &s.policy)?;
            d.set_item("runs", s.runs)?;
            d.set_item("successful_runs", s.successful_runs)?;
            d.set_item("mean_dk", s.mean_dk)?;
            d.set_item("mean_dv", s.mean_dv)?;
            d.set_item("mean_dpi", s.mean_dpi)?;
            d.set_item("max_dpi_dest", s.max_dpi_dest)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let run_list = runs
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("seed", r.seed)?;
            d.set_item("policy", r.policy.name())?;
            d.set_item("steps", r.steps.len())?;
            d.set_item("termination", r.termination.name())?;
            d.set_item("dk", r.steps.iter().map(|s| s.dk()).collect::<Vec<_>>())?;
            d.set_item("dv", r.steps.iter().map(|s| s.dv()).collect::<Vec<_>>())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("summary", summary_list)?;
    out.set_item("runs", run_list)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "wmg")]
fn wmg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyEvaluation>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(check_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_policy, m)?)?;
    m.add_function(wrap_pyfunction!(surveillance_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_cascades, m)?)?;
    Ok(())
}
