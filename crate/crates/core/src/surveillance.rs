//! Patrol-policy studies on grid graphs: baseline, max-surprise and
//! min-variance policies under a prescribed coverage distribution.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WmgError};
use crate::graph::{EdgeSpec, WeightModel, WeightedMarkovGraph};
use crate::kemeny::{evaluate, KemenySummary};
use crate::optimizer::{
    baseline_policy, build_feasible_set, optimize_policy, Objective, OptimizerConfig, PolicyFeasibleSet, TraceRow,
};

/// Coverage target over accessible cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetRule {
    Uniform,
    /// Cells 4-adjacent to an obstacle get twice the weight of the rest.
    ObstacleAdjacentDouble,
}

/// Per-edge coefficient-of-variation draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSpec {
    /// Fraction of edges drawn from `high`.
    pub high_fraction: f64,
    pub high: (f64, f64),
    pub low: (f64, f64),
    #[serde(default = "default_dist")]
    pub dist: String,
}

fn default_dist() -> String {
    "lognormal".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col)` cells removed from the lattice, 0-based.
    #[serde(default)]
    pub obstacles: Vec<(usize, usize)>,
    /// Mean weights are uniform on this range.
    pub weight_range: (f64, f64),
    /// Deterministic weights when absent.
    #[serde(default)]
    pub cv: Option<CvSpec>,
    pub target: TargetRule,
    pub eta: f64,
    pub seed: u64,
}

impl GridSpec {
    /// 4×4 lattice, deterministic weights on [1, 3], uniform coverage.
    pub fn grid4x4() -> Self {
        Self {
            rows: 4,
            cols: 4,
            obstacles: vec![],
            weight_range: (1.0, 3.0),
            cv: None,
            target: TargetRule::Uniform,
            eta: 1e-4,
            seed: 0,
        }
    }

    /// 8×8 lattice with two horizontal obstacle pairs, doubled coverage next
    /// to obstacles and lognormal weights with CV in [0.30, 1.70], mean 0.85.
    pub fn grid8x8() -> Self {
        Self {
            rows: 8,
            cols: 8,
            obstacles: vec![(2, 2), (2, 3), (5, 4), (5, 5)],
            weight_range: (1.0, 3.0),
            cv: Some(CvSpec {
                high_fraction: 0.4,
                high: (1.0, 1.7),
                // 0.4 · 1.35 + 0.6 · (0.30 + b) / 2 = 0.85
                low: (0.30, 2.0 * (0.85 - 0.4 * 1.35) / 0.6 - 0.30),
                dist: default_dist(),
            }),
            target: TargetRule::ObstacleAdjacentDouble,
            eta: 1e-4,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| WmgError::Parse { locus: format!("line {}, column {}", e.line(), e.column()), message: e.to_string() })
    }

    fn check(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(WmgError::InvalidArgument("grid needs at least one row and column".into()));
        }
        let (a, b) = self.weight_range;
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(WmgError::InvalidArgument(format!("weight range ({a}, {b}) must satisfy 0 < a ≤ b")));
        }
        for &(r, c) in &self.obstacles {
            if r >= self.rows || c >= self.cols {
                return Err(WmgError::InvalidArgument(format!("obstacle ({r}, {c}) outside the grid")));
            }
        }
        if let Some(cv) = &self.cv {
            let ok = |(x, y): (f64, f64)| x > 0.0 && x <= y && y.is_finite();
            if !(ok(cv.high) && ok(cv.low) && (0.0..=1.0).contains(&cv.high_fraction)) {
                return Err(WmgError::InvalidArgument("cv ranges must be positive and ordered".into()));
            }
        }
        Ok(())
    }
}

/// A grid instance: graph, coverage target and the cell of every node.
#[derive(Debug, Clone)]
pub struct GridInstance {
    pub graph: WeightedMarkovGraph,
    pub mu: DVector<f64>,
    pub cells: Vec<(usize, usize)>,
    pub eta: f64,
}

/// Row-major numbering of accessible cells, bidirectional 4-neighbour edges,
/// uniform-over-neighbours transition matrix.
pub fn build_grid(spec: &GridSpec) -> Result<GridInstance> {
    spec.check()?;
    let blocked: BTreeSet<(usize, usize)> = spec.obstacles.iter().copied().collect();
    let mut id = vec![vec![None; spec.cols]; spec.rows];
    let mut cells = Vec::new();
    for (r, row) in id.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            if !blocked.contains(&(r, c)) {
                *slot = Some(cells.len());
                cells.push((r, c));
            }
        }
    }
    let n = cells.len();
    if n < 2 {
        return Err(WmgError::InvalidArgument("grid needs at least two accessible cells".into()));
    }
    let neighbours = |r: usize, c: usize| {
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push((r - 1, c));
        }
        if c > 0 {
            out.push((r, c - 1));
        }
        if c + 1 < spec.cols {
            out.push((r, c + 1));
        }
        if r + 1 < spec.rows {
            out.push((r + 1, c));
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::new();
    for (i, &(r, c)) in cells.iter().enumerate() {
        let succ: Vec<usize> = neighbours(r, c).into_iter().filter_map(|(rr, cc)| id[rr][cc]).collect();
        for &j in &succ {
            pairs.push((i, j, succ.len()));
        }
    }
    let mut specs = Vec::with_capacity(pairs.len());
    for (i, j, deg) in pairs {
        let w = rng.random_range(spec.weight_range.0..=spec.weight_range.1);
        let model = match &spec.cv {
            None => WeightModel::Deterministic,
            Some(cv) => {
                let range = if rng.random::<f64>() < cv.high_fraction { cv.high } else { cv.low };
                let value = rng.random_range(range.0..=range.1);
                WeightModel::from_cv(value, Some(&cv.dist)).map_err(WmgError::InvalidArgument)?
            }
        };
        specs.push(EdgeSpec { from: i, to: j, p: 1.0 / deg as f64, w_mean: w, model });
    }
    let graph = WeightedMarkovGraph::from_edges(n, &specs)?;

    let adjacent = |r: usize, c: usize| {
        neighbours(r, c).into_iter().any(|cell| blocked.contains(&cell))
    };
    let raw = DVector::from_iterator(
        n,
        cells.iter().map(|&(r, c)| match spec.target {
            TargetRule::Uniform => 1.0,
            TargetRule::ObstacleAdjacentDouble if adjacent(r, c) => 2.0,
            TargetRule::ObstacleAdjacentDouble => 1.0,
        }),
    );
    let mu = &raw / raw.sum();
    Ok(GridInstance { graph, mu, cells, eta: spec.eta })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyStructure {
    /// Edges with `P(i,j)` above the threshold.
    pub dominant_edges: Vec<(usize, usize)>,
    /// Dominant edges form one cycle through every node.
    pub is_hamiltonian_cycle: bool,
    pub k_w: f64,
    pub sqrt_v_w: f64,
    pub s: f64,
}

/// Dominant-edge structure and Kemeny summary of `p` on `graph`'s weights.
pub fn analyze_policy(graph: &WeightedMarkovGraph, p: &DMatrix<f64>, threshold: f64) -> Result<PolicyStructure> {
    let n = p.nrows();
    let mut dominant_edges = Vec::new();
    let mut next = vec![None; n];
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > threshold {
                dominant_edges.push((i, j));
                next[i] = if next[i].is_none() { Some(j) } else { None };
            }
        }
    }
    let is_hamiltonian_cycle = dominant_edges.len() == n && next.iter().all(Option::is_some) && {
        let mut seen = vec![false; n];
        let mut at = 0;
        let mut steps = 0;
        while !seen[at] {
            seen[at] = true;
            at = next[at].expect("checked above");
            steps += 1;
        }
        at == 0 && steps == n
    };
    let s = evaluate(&graph.with_transition(p))?.summary;
    Ok(PolicyStructure { dominant_edges, is_hamiltonian_cycle, k_w: s.k_w, sqrt_v_w: s.v_w.max(0.0).sqrt(), s: s.s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMode {
    Baseline,
    MaxSurprise,
    MinVariance,
}

impl StudyMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::MaxSurprise => "max-surprise",
            Self::MinVariance => "min-variance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Self::Baseline),
            "max-surprise" => Some(Self::MaxSurprise),
            "min-variance" => Some(Self::MinVariance),
            _ => None,
        }
    }
}

impl fmt::Display for StudyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One optimised (or baseline) policy.
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub mode: StudyMode,
    pub p: DMatrix<f64>,
    pub summary: KemenySummary,
    pub structure: PolicyStructure,
    /// `S / S_baseline - 1`; `None` for the baseline itself.
    pub gain: Option<f64>,
    pub trace: Vec<TraceRow>,
    /// Pearson correlation between `P` and edge CV over active edges.
    pub rho_p_cv: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub instance: GridInstance,
    pub baseline: PolicyOutcome,
    pub policies: Vec<PolicyOutcome>,
}

impl StudyResult {
    pub fn get(&self, mode: StudyMode) -> Option<&PolicyOutcome> {
        if mode == StudyMode::Baseline {
            return Some(&self.baseline);
        }
        self.policies.iter().find(|p| p.mode == mode)
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// `ρ(P, CV)` over the edges of `graph`.
pub fn policy_cv_correlation(graph: &WeightedMarkovGraph, p: &DMatrix<f64>) -> Option<f64> {
    let ps: Vec<f64> = graph.edges().iter().map(|&(i, j)| p[(i, j)]).collect();
    let cvs: Vec<f64> = graph.models().iter().map(WeightModel::cv).collect();
    pearson(&ps, &cvs)
}

fn outcome(
    inst: &GridInstance,
    mode: StudyMode,
    p: DMatrix<f64>,
    trace: Vec<TraceRow>,
    base_s: Option<f64>,
) -> Result<PolicyOutcome> {
    let summary = evaluate(&inst.graph.with_transition(&p))?.summary;
    let structure = analyze_policy(&inst.graph, &p, 0.5)?;
    let rho_p_cv = policy_cv_correlation(&inst.graph, &p);
    let gain = base_s.map(|b| summary.s / b - 1.0);
    Ok(PolicyOutcome { mode, p, summary, structure, gain, trace, rho_p_cv })
}

/// Feasible set of a grid instance, or an error naming the residual.
pub fn feasible_set(inst: &GridInstance, config: &OptimizerConfig) -> Result<PolicyFeasibleSet> {
    let set = build_feasible_set(&inst.graph, &inst.mu, inst.eta, config)?;
    if let crate::optimizer::FeasibilityStatus::Infeasible { residual } = set.status {
        return Err(WmgError::InvalidArgument(format!(
            "no policy meets the coverage target (phase-1 residual {residual:.3e})"
        )));
    }
    Ok(set)
}

/// Baseline plus the requested optimised policies, all from the same start.
pub fn run_surveillance_study(spec: &GridSpec, config: &OptimizerConfig, modes: &[StudyMode]) -> Result<StudyResult> {
    let instance = build_grid(spec)?;
    let set = feasible_set(&instance, config)?;
    let p0 = baseline_policy(&set)?;
    let baseline = outcome(&instance, StudyMode::Baseline, p0, vec![], None)?;
    let base_s = baseline.summary.s;
    let wanted: Vec<StudyMode> = {
        let mut seen = BTreeSet::new();
        modes
            .iter()
            .copied()
            .filter(|m| *m != StudyMode::Baseline && seen.insert(m.name()))
            .collect()
    };
    let policies = wanted
        .par_iter()
        .map(|&mode| {
            let obj = match mode {
                StudyMode::MaxSurprise => Objective::MaxSurprise,
                _ => Objective::MinVariance,
            };
            let r = optimize_policy(&instance.graph, &set, obj, config)?;
            outcome(&instance, mode, r.p, r.trace, Some(base_s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult { instance, baseline, policies })
}

#[derive(Serialize)]
struct PolicyDocument<'a> {
    mode: &'a str,
    n: usize,
    eta: f64,
    mu: Vec<f64>,
    cells: &'a [(usize, usize)],
    p: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    cv: Vec<Vec<f64>>,
    summary: &'a KemenySummary,
    structure: &'a PolicyStructure,
    gain: Option<f64>,
    rho_p_cv: Option<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn io_err(path: &Path, e: impl fmt::Display) -> WmgError {
    WmgError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct SummaryRow {
    policy: &'static str,
    #[serde(rename = "K_W")]
    k_w: f64,
    #[serde(rename = "sqrtV_W")]
    sqrt_v_w: f64,
    #[serde(rename = "S")]
    s: f64,
    gain: Option<f64>,
}

/// `μP = μ` within 1e-8 and `P ≥ η` on every edge.
fn check_policy(inst: &GridInstance, p: &DMatrix<f64>) -> std::result::Result<(), String> {
    let drift = (inst.mu.transpose() * p - inst.mu.transpose()).amax();
    if drift > 1e-8 {
        return Err(format!("μP differs from μ by {drift:e}"));
    }
    for &(i, j) in inst.graph.edges() {
        if p[(i, j)] < inst.eta * (1.0 - 1e-9) {
            return Err(format!("P({i},{j}) = {:e} below η = {:e}", p[(i, j)], inst.eta));
        }
    }
    Ok(())
}

/// Writes `study_summary.csv`, `policy_<mode>.json` and `trace_<mode>.csv`
/// into `dir` and returns the paths written.
pub fn write_study(result: &StudyResult, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    let all: Vec<&PolicyOutcome> = std::iter::once(&result.baseline).chain(&result.policies).collect();
    for o in &all {
        check_policy(&result.instance, &o.p).map_err(|m| WmgError::InvalidArgument(format!("{}: {m}", o.mode.name())))?;
    }
    let summary: Vec<SummaryRow> = all
        .iter()
        .map(|o| SummaryRow {
            policy: o.mode.name(),
            k_w: o.summary.k_w,
            sqrt_v_w: o.summary.v_w.max(0.0).sqrt(),
            s: o.summary.s,
            gain: o.gain,
        })
        .collect();
    let path = dir.join("study_summary.csv");
    write_csv(&path, &summary)?;
    written.push(path);
    let inst = &result.instance;
    let n = inst.graph.n();
    let cv = DMatrix::from_fn(n, n, |i, j| inst.graph.model(i, j).map_or(0.0, |m| m.cv()));
    for o in all {
        let doc = PolicyDocument {
            mode: o.mode.name(),
            n,
            eta: inst.eta,
            mu: inst.mu.iter().copied().collect(),
            cells: &inst.cells,
            p: rows(&o.p),
            w: rows(inst.graph.w()),
            cv: rows(&cv),
            summary: &o.summary,
            structure: &o.structure,
            gain: o.gain,
            rho_p_cv: o.rho_p_cv,
        };
        let path = dir.join(format!("policy_{}.json", o.mode.name()));
        let text = serde_json::to_string_pretty(&doc).map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        written.push(path);
        if o.mode != StudyMode::Baseline {
            let path = dir.join(format!("trace_{}.csv", o.mode.name()));
            write_csv(&path, &o.trace)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = build_grid(&GridSpec::grid4x4()).unwrap();
        assert_eq!((g.graph.n(), g.graph.edge_count()), (16, 48));
        let g = build_grid(&GridSpec::grid8x8()).unwrap();
        assert_eq!((g.graph.n(), g.graph.edge_count()), (60, 196));
        let doubled = g.mu.iter().filter(|&&m| m > g.mu.min() * 1.5).count();
        assert_eq!(doubled, 12);
        assert!((g.mu.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cv_mix_mean() {
        let cv = GridSpec::grid8x8().cv.unwrap();
        let mean = cv.high_fraction * (cv.high.0 + cv.high.1) / 2.0
            + (1.0 - cv.high_fraction) * (cv.low.0 + cv.low.1) / 2.0;
        assert!((mean - 0.85).abs() < 1e-12);
    }

    #[test]
    fn structure_of_simple_policies() {
        let n = 4;
        let cycle = DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
        let g = crate::graph::unit_cycle(n);
        let s = analyze_policy(&g, &cycle, 0.5).unwrap();
        assert!(s.is_hamiltonian_cycle);
        assert_eq!(s.dominant_edges.len(), 4);
        let h = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let spec: Vec<EdgeSpec> =
            (0..3).flat_map(|i| (0..3).map(move |j| EdgeSpec::deterministic(i, j, 1.0 / 3.0, 1.0))).collect();
        let g = WeightedMarkovGraph::from_edges(3, &spec).unwrap();
        let s = analyze_policy(&g, &h, 0.5).unwrap();
        assert!(s.dominant_edges.is_empty() && !s.is_hamiltonian_cycle);
    }
}
