//! Weighted Markovian graphs: a transition matrix on a directed edge set plus
//! per-edge traversal weights with known first and second moments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, WmgError};

/// Smallest admissible mean weight on an edge.
pub const WEIGHT_FLOOR: f64 = 1e-9;
/// Tolerance on row sums of the transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Sampling law attached to an edge weight.
///
/// The mean is stored in `W`; the tag fixes the coefficient of variation and
/// hence `W2 = W² (1 + cv²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightModel {
    Deterministic,
    LognormalCv { cv: f64 },
    GammaCv { cv: f64 },
}

impl WeightModel {
    /// Builds a tag from the file-level `(cv, dist)` pair.
    pub fn from_cv(cv: f64, dist: Option<&str>) -> std::result::Result<Self, String> {
        if !cv.is_finite() || cv < 0.0 {
            return Err(format!("cv must be a finite non-negative number, got {cv}"));
        }
        match dist {
            None if cv == 0.0 => Ok(Self::Deterministic),
            None | Some("lognormal") if cv > 0.0 => Ok(Self::LognormalCv { cv }),
            Some("gamma") if cv > 0.0 => Ok(Self::GammaCv { cv }),
            Some("deterministic") if cv == 0.0 => Ok(Self::Deterministic),
            Some("deterministic") => Err(format!("deterministic weight with cv = {cv}")),
            Some(d @ ("lognormal" | "gamma")) => Err(format!("{d} weight requires cv > 0")),
            Some(other) => Err(format!("unknown weight distribution {other:?}")),
            None => unreachable!(),
        }
    }

    pub fn cv(&self) -> f64 {
        match *self {
            Self::Deterministic => 0.0,
            Self::LognormalCv { cv } | Self::GammaCv { cv } => cv,
        }
    }

    pub fn dist_name(&self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::LognormalCv { .. } => "lognormal",
            Self::GammaCv { .. } => "gamma",
        }
    }

    /// `E[𝒲²] / E[𝒲]²`.
    pub fn second_moment_factor(&self) -> f64 {
        1.0 + self.cv() * self.cv()
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Deterministic)
    }
}

/// One directed edge as it appears in input files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub p: f64,
    pub w_mean: f64,
    pub model: WeightModel,
}

impl EdgeSpec {
    pub fn deterministic(from: usize, to: usize, p: f64, w_mean: f64) -> Self {
        Self { from, to, p, w_mean, model: WeightModel::Deterministic }
    }
}

/// A weighted Markovian graph with dense storage.
///
/// `edges` is kept sorted; `models[e]` belongs to `edges[e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMarkovGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    index: BTreeMap<(usize, usize), usize>,
    p: DMatrix<f64>,
    w: DMatrix<f64>,
    w2: DMatrix<f64>,
    models: Vec<WeightModel>,
}

impl WeightedMarkovGraph {
    /// Assembles the matrices without validating them.
    pub fn from_edges_unchecked(n: usize, specs: &[EdgeSpec]) -> Result<Self> {
        if n == 0 {
            return Err(WmgError::InvalidArgument("graph needs at least one node".into()));
        }
        let mut sorted: Vec<EdgeSpec> = specs.to_vec();
        sorted.sort_by_key(|e| (e.from, e.to));
        let mut p = DMatrix::zeros(n, n);
        let mut w = DMatrix::zeros(n, n);
        let mut w2 = DMatrix::zeros(n, n);
        let mut edges = Vec::with_capacity(sorted.len());
        let mut models = Vec::with_capacity(sorted.len());
        let mut index = BTreeMap::new();
        for e in &sorted {
            if e.from >= n || e.to >= n {
                return Err(WmgError::InvalidArgument(format!(
                    "edge ({}, {}) out of range for n = {n}",
                    e.from, e.to
                )));
            }
            if index.insert((e.from, e.to), edges.len()).is_some() {
                return Err(WmgError::InvalidArgument(format!(
                    "duplicate edge ({}, {})",
                    e.from, e.to
                )));
            }
            edges.push((e.from, e.to));
            models.push(e.model);
            p[(e.from, e.to)] = e.p;
            w[(e.from, e.to)] = e.w_mean;
            w2[(e.from, e.to)] = e.w_mean * e.w_mean * e.model.second_moment_factor();
        }
        Ok(Self { n, edges, index, p, w, w2, models })
    }

    /// Assembles and validates; any violation is returned as [`WmgError::Invalid`].
    pub fn from_edges(n: usize, specs: &[EdgeSpec]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, specs)?;
        let report = g.validate();
        if report.is_empty() {
            Ok(g)
        } else {
            Err(WmgError::Invalid(report))
        }
    }

    /// Same topology and weights, new transition matrix (entries copied on the edge set only).
    pub fn with_transition(&self, p: &DMatrix<f64>) -> Self {
        let mut g = self.clone();
        g.p = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            g.p[(i, j)] = p[(i, j)];
        }
        g
    }

    /// Same topology and transition matrix, new mean weights; `W2` follows the weight models.
    pub fn with_weights(&self, w: &DMatrix<f64>) -> Self {
        let mut g = self.clone();
        g.w = DMatrix::zeros(self.n, self.n);
        g.w2 = DMatrix::zeros(self.n, self.n);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let v = w[(i, j)];
            g.w[(i, j)] = v;
            g.w2[(i, j)] = v * v * self.models[e].second_moment_factor();
        }
        g
    }

    /// Drops an edge. Row `from` of `P` is left as is (no renormalisation).
    pub fn without_edge(&self, from: usize, to: usize) -> Result<Self> {
        if !self.has_edge(from, to) {
            return Err(WmgError::NotAnEdge(from, to));
        }
        let specs: Vec<EdgeSpec> = self
            .edge_specs()
            .into_iter()
            .filter(|e| (e.from, e.to) != (from, to))
            .collect();
        Self::from_edges_unchecked(self.n, &specs)
    }

    pub fn edge_specs(&self) -> Vec<EdgeSpec> {
        self.edges
            .iter()
            .zip(&self.models)
            .map(|(&(i, j), &model)| EdgeSpec {
                from: i,
                to: j,
                p: self.p[(i, j)],
                w_mean: self.w[(i, j)],
                model,
            })
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.index.contains_key(&(i, j))
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    pub fn models(&self) -> &[WeightModel] {
        &self.models
    }

    pub fn model(&self, i: usize, j: usize) -> Option<WeightModel> {
        self.edge_index(i, j).map(|e| self.models[e])
    }

    pub fn is_deterministic(&self) -> bool {
        self.models.iter().all(WeightModel::is_deterministic)
    }

    /// `∂W2(l,k)/∂W(l,k)` under the edge's weight model (`2 W (1 + cv²)`).
    pub fn second_moment_slope(&self, l: usize, k: usize) -> Result<f64> {
        let e = self.edge_index(l, k).ok_or(WmgError::NotAnEdge(l, k))?;
        Ok(2.0 * self.w[(l, k)] * self.models[e].second_moment_factor())
    }

    /// Out-neighbours of `i`, in increasing order.
    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.index.range((i, 0)..(i + 1, 0)).map(|(&(_, j), _)| j)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.successors(i).count()
    }

    pub fn max_out_degree(&self) -> usize {
        (0..self.n).map(|i| self.out_degree(i)).max().unwrap_or(0)
    }

    /// Checks every admissibility condition and reports all failures.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for i in 0..self.n {
            let s: f64 = self.p.row(i).sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum { row: i, sum: s });
            }
        }
        for i in 0..self.n {
            for j in 0..self.n {
                let on = self.has_edge(i, j);
                let (p, w, w2) = (self.p[(i, j)], self.w[(i, j)], self.w2[(i, j)]);
                if on {
                    if !(p > 0.0) {
                        violations.push(Violation::Support { row: i, col: j, what: "P", value: p });
                    }
                    if !(w >= WEIGHT_FLOOR) {
                        violations.push(Violation::WeightFloor { row: i, col: j, value: w });
                    }
                    if !(w2 > 0.0) {
                        violations.push(Violation::Support { row: i, col: j, what: "W2", value: w2 });
                    }
                    if w2 < w * w * (1.0 - 1e-12) {
                        violations.push(Violation::Moments { row: i, col: j, w, w2 });
                    }
                } else {
                    for (what, value) in [("P", p), ("W", w), ("W2", w2)] {
                        if value != 0.0 {
                            violations.push(Violation::Support { row: i, col: j, what, value });
                        }
                    }
                }
            }
        }
        let components = strongly_connected_components(self.n, &self.edges);
        if components != 1 {
            violations.push(Violation::Connectivity { found: components });
        }
        ValidationReport { violations }
    }
}

/// A single admissibility failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { row: usize, sum: f64 },
    Support { row: usize, col: usize, what: &'static str, value: f64 },
    WeightFloor { row: usize, col: usize, value: f64 },
    Moments { row: usize, col: usize, w: f64, w2: f64 },
    Connectivity { found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Self::Support { row, col, what, value } => {
                write!(f, "support mismatch: {what}({row},{col}) = {value}")
            }
            Self::WeightFloor { row, col, value } => {
                write!(f, "weight W({row},{col}) = {value} below floor {WEIGHT_FLOOR:e}")
            }
            Self::Moments { row, col, w, w2 } => {
                write!(f, "W2({row},{col}) = {w2} is smaller than W({row},{col})^2 = {}", w * w)
            }
            Self::Connectivity { found } => {
                write!(f, "1 strongly connected component required, found {found}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Number of strongly connected components (Tarjan).
pub fn strongly_connected_components(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
    }
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut count = 0;
    // explicit call stack: (node, next child position)
    let mut calls: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        calls.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = calls.last_mut() {
            if *pos < adj[v].len() {
                let u = adj[v][*pos];
                *pos += 1;
                if index[u] == usize::MAX {
                    index[u] = next;
                    low[u] = next;
                    next += 1;
                    stack.push(u);
                    on_stack[u] = true;
                    calls.push((u, 0));
                } else if on_stack[u] {
                    low[v] = low[v].min(index[u]);
                }
            } else {
                calls.pop();
                if let Some(&(parent, _)) = calls.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    count += 1;
                    while let Some(x) = stack.pop() {
                        on_stack[x] = false;
                        if x == v {
                            break;
                        }
                    }
                }
            }
        }
    }
    count
}

/// Finds a pair `(from, to)` with `to` unreachable from `from` over the positive entries of `p`.
pub fn unreachable_pair(p: &DMatrix<f64>) -> Option<(usize, usize)> {
    let n = p.nrows();
    for s in 0..n {
        let mut seen = vec![false; n];
        let mut queue = vec![s];
        seen[s] = true;
        while let Some(v) = queue.pop() {
            for u in 0..n {
                if p[(v, u)] > 0.0 && !seen[u] {
                    seen[u] = true;
                    queue.push(u);
                }
            }
        }
        if let Some(t) = seen.iter().position(|&b| !b) {
            return Some((s, t));
        }
    }
    None
}

/// The all-`1/n` matrix, feasible for the uniform target whenever `1/n ≥ η`.
pub fn uniform_mixing_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0 / n as f64)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// A graph file together with its optional experiment annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDocument {
    pub graph: WeightedMarkovGraph,
    pub mu: Option<Vec<f64>>,
    pub destinations: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct EdgeRecordOut {
    from: usize,
    to: usize,
    p: f64,
    w_mean: f64,
    cv: f64,
    dist: &'static str,
}

#[derive(Serialize)]
struct GraphFileOut<'a> {
    n: usize,
    edges: Vec<EdgeRecordOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    destinations: Option<&'a [usize]>,
}

/// Reads a `.json` or `.csv` graph file and validates it.
pub fn load_graph(path: impl AsRef<Path>) -> Result<WeightedMarkovGraph> {
    Ok(load_document(path)?.graph)
}

pub fn load_document(path: impl AsRef<Path>) -> Result<GraphDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let doc = if is_csv { parse_csv(&text)? } else { parse_json(&text)? };
    let report = doc.graph.validate();
    if !report.is_empty() {
        return Err(WmgError::Invalid(report));
    }
    Ok(doc)
}

fn parse_err(locus: impl Into<String>, message: impl Into<String>) -> WmgError {
    WmgError::Parse { locus: locus.into(), message: message.into() }
}

/// Parses the JSON graph schema without validating admissibility.
pub fn parse_json(text: &str) -> Result<GraphDocument> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        parse_err(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;
    let obj = root.as_object().ok_or_else(|| parse_err("$", "expected a JSON object"))?;
    let n = obj
        .get("n")
        .and_then(Value::as_u64)
        .ok_or_else(|| parse_err("n", "missing or non-integer node count"))? as usize;
    let edges = obj
        .get("edges")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("edges", "missing edge array"))?;
    let mut specs = Vec::with_capacity(edges.len());
    for (k, e) in edges.iter().enumerate() {
        let locus = |field: &str| format!("edges[{k}].{field}");
        let e = e.as_object().ok_or_else(|| parse_err(format!("edges[{k}]"), "expected an object"))?;
        let index = |field: &str| -> Result<usize> {
            e.get(field)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| parse_err(locus(field), format!("missing or invalid \"{field}\"")))
        };
        let number = |field: &str| -> Result<f64> {
            e.get(field)
                .and_then(Value::as_f64)
                .ok_or_else(|| parse_err(locus(field), format!("missing or invalid \"{field}\"")))
        };
        let from = index("from")?;
        let to = index("to")?;
        let p = number("p")?;
        let w_mean = number("w_mean")?;
        let cv = match e.get("cv") {
            None | Some(Value::Null) => 0.0,
            Some(_) => number("cv")?,
        };
        let dist = match e.get("dist") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => return Err(parse_err(locus("dist"), "expected a string")),
        };
        let model = WeightModel::from_cv(cv, dist).map_err(|m| parse_err(locus("cv"), m))?;
        specs.push(EdgeSpec { from, to, p, w_mean, model });
    }
    let mu = match obj.get("mu") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<f64>>(v.clone()).map_err(|e| parse_err("mu", e.to_string()))?,
        ),
    };
    let destinations = match obj.get("destinations") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value::<Vec<usize>>(v.clone())
                .map_err(|e| parse_err("destinations", e.to_string()))?,
        ),
    };
    if let Some(mu) = &mu {
        if mu.len() != n {
            return Err(parse_err("mu", format!("expected {n} entries, found {}", mu.len())));
        }
    }
    let graph = WeightedMarkovGraph::from_edges_unchecked(n, &specs)
        .map_err(|e| parse_err("edges", e.to_string()))?;
    Ok(GraphDocument { graph, mu, destinations })
}

/// Parses the CSV edge list (`from,to,p,w_mean,cv`); `n` is one past the largest index.
pub fn parse_csv(text: &str) -> Result<GraphDocument> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err("line 1", e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(cf), Some(ct), Some(cp), Some(cw)) = (col("from"), col("to"), col("p"), col("w_mean"))
    else {
        return Err(parse_err("line 1", "header must contain from,to,p,w_mean[,cv]"));
    };
    let ccv = col("cv");
    let mut specs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err("csv", e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize, name: &str| -> Result<&str> {
            record
                .get(c)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| parse_err(format!("line {line}, field {name}"), "missing value"))
        };
        let int = |c: usize, name: &str| -> Result<usize> {
            field(c, name)?
                .parse()
                .map_err(|e| parse_err(format!("line {line}, field {name}"), format!("{e}")))
        };
        let float = |c: usize, name: &str| -> Result<f64> {
            field(c, name)?
                .parse()
                .map_err(|e| parse_err(format!("line {line}, field {name}"), format!("{e}")))
        };
        let cv = match ccv {
            Some(c) if record.get(c).is_some_and(|s| !s.is_empty()) => float(c, "cv")?,
            _ => 0.0,
        };
        let model =
            WeightModel::from_cv(cv, None).map_err(|m| parse_err(format!("line {line}, field cv"), m))?;
        specs.push(EdgeSpec {
            from: int(cf, "from")?,
            to: int(ct, "to")?,
            p: float(cp, "p")?,
            w_mean: float(cw, "w_mean")?,
            model,
        });
    }
    let n = specs.iter().map(|e| e.from.max(e.to) + 1).max().unwrap_or(0);
    let graph = WeightedMarkovGraph::from_edges_unchecked(n, &specs)
        .map_err(|e| parse_err("edges", e.to_string()))?;
    Ok(GraphDocument { graph, mu: None, destinations: None })
}

/// JSON text in the graph schema. Floats are written in shortest round-trip form.
pub fn to_json(graph: &WeightedMarkovGraph, mu: Option<&[f64]>, destinations: Option<&[usize]>) -> String {
    let edges = graph
        .edge_specs()
        .into_iter()
        .map(|e| EdgeRecordOut {
            from: e.from,
            to: e.to,
            p: e.p,
            w_mean: e.w_mean,
            cv: e.model.cv(),
            dist: e.model.dist_name(),
        })
        .collect();
    let out = GraphFileOut { n: graph.n(), edges, mu, destinations };
    serde_json::to_string_pretty(&out).expect("graph serialisation cannot fail")
}

pub fn save_graph(graph: &WeightedMarkovGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(graph, None, None))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Recipe for random strongly connected test graphs.
///
/// A random Hamiltonian cycle guarantees strong connectivity; every other
/// ordered pair becomes an edge with probability `density`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGraphSpec {
    pub n: usize,
    pub density: f64,
    pub self_loops: bool,
    pub weight_range: (f64, f64),
    /// Fraction of edges that get a random (non-deterministic) weight.
    pub stochastic_fraction: f64,
    pub cv_range: (f64, f64),
}

impl RandomGraphSpec {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            density: 0.4,
            self_loops: false,
            weight_range: (0.5, 5.0),
            stochastic_fraction: 0.0,
            cv_range: (0.2, 0.8),
        }
    }

    pub fn stochastic(mut self, fraction: f64) -> Self {
        self.stochastic_fraction = fraction;
        self
    }

    pub fn density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn generate(&self, seed: u64) -> WeightedMarkovGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut support = vec![vec![false; n]; n];
        if n == 1 {
            support[0][0] = true;
        }
        for k in 0..n {
            let (a, b) = (order[k], order[(k + 1) % n]);
            if a != b {
                support[a][b] = true;
            }
        }
        for (i, row) in support.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if (i != j || self.self_loops) && rng.random::<f64>() < self.density {
                    *cell = true;
                }
            }
        }
        let mut specs = Vec::new();
        for (i, row) in support.iter().enumerate() {
            let raw: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(j, _)| (j, rng.random_range(0.2..1.0)))
                .collect();
            let total: f64 = raw.iter().map(|(_, v)| v).sum();
            for (j, v) in raw {
                let w_mean = rng.random_range(self.weight_range.0..self.weight_range.1);
                let model = if rng.random::<f64>() < self.stochastic_fraction {
                    let cv = rng.random_range(self.cv_range.0..self.cv_range.1);
                    if rng.random::<bool>() {
                        WeightModel::LognormalCv { cv }
                    } else {
                        WeightModel::GammaCv { cv }
                    }
                } else {
                    WeightModel::Deterministic
                };
                specs.push(EdgeSpec { from: i, to: j, p: v / total, w_mean, model });
            }
        }
        let mut g = WeightedMarkovGraph::from_edges_unchecked(n, &specs)
            .expect("generated edges are in range and unique");
        // exact row sums
        let mut p = g.p.clone();
        for i in 0..n {
            let s: f64 = p.row(i).sum();
            p.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
        g.p = p;
        g
    }
}

/// The alternating two-state chain `P = [[0,1],[1,0]]` with weights 2 and 3.
pub fn two_state_swap() -> WeightedMarkovGraph {
    WeightedMarkovGraph::from_edges(
        2,
        &[EdgeSpec::deterministic(0, 1, 1.0, 2.0), EdgeSpec::deterministic(1, 0, 1.0, 3.0)],
    )
    .expect("two-state swap is admissible")
}

/// The deterministic cycle `0 → 1 → … → n-1 → 0` with unit weights.
pub fn unit_cycle(n: usize) -> WeightedMarkovGraph {
    let specs: Vec<EdgeSpec> =
        (0..n).map(|i| EdgeSpec::deterministic(i, (i + 1) % n, 1.0, 1.0)).collect();
    WeightedMarkovGraph::from_edges(n, &specs).expect("cycle is admissible")
}
