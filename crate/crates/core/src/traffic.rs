//! Sequential edge-failure cascades on random geometric networks.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::stationary_of;
use crate::error::{Result, WmgError};
use crate::graph::{strongly_connected_components, EdgeSpec, WeightedMarkovGraph};
use crate::kemeny::evaluate;
use crate::optimizer::{
    build_feasible_set_on, hybrid_target, minimal_intervention, project_to_feasible, InterventionStatus,
    OptimizerConfig, WeightBounds,
};

const MAX_RESAMPLES: usize = 100_000;

/// A random geometric network and the points it was built from.
#[derive(Debug, Clone)]
pub struct GeometricInstance {
    pub graph: WeightedMarkovGraph,
    pub points: Vec<(f64, f64)>,
    pub radius: f64,
    /// Number of point sets drawn before one was strongly connected.
    pub attempts: usize,
}

/// Points uniform on the unit square joined both ways when closer than
/// `r = √(d / (n π))`; resampled until connected.
///
/// `P` is uniform over out-edges and every edge gets a deterministic weight
/// drawn from `weight_range`.
pub fn gen_geometric_graph(n: usize, degree: f64, weight_range: (f64, f64), seed: u64) -> Result<GeometricInstance> {
    if n < 2 {
        return Err(WmgError::InvalidArgument("geometric graph needs n ≥ 2".into()));
    }
    if !(degree > 0.0) {
        return Err(WmgError::InvalidArgument("target degree must be positive".into()));
    }
    let (lo, hi) = weight_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(WmgError::InvalidArgument("weight range must satisfy 0 < lo ≤ hi".into()));
    }
    let radius = (degree / (n as f64 * std::f64::consts::PI)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=MAX_RESAMPLES {
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                if i != j && dx.hypot(dy) < radius {
                    edges.push((i, j));
                }
            }
        }
        if strongly_connected_components(n, &edges) != 1 {
            continue;
        }
        let mut deg = vec![0usize; n];
        for &(i, _) in &edges {
            deg[i] += 1;
        }
        let specs: Vec<EdgeSpec> = edges
            .iter()
            .map(|&(i, j)| {
                let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
                EdgeSpec::deterministic(i, j, 1.0 / deg[i] as f64, w)
            })
            .collect();
        let graph = WeightedMarkovGraph::from_edges(n, &specs)?;
        return Ok(GeometricInstance { graph, points, radius, attempts: attempt });
    }
    Err(WmgError::InvalidArgument(format!(
        "no connected geometric graph with n = {n}, d = {degree} after {MAX_RESAMPLES} draws"
    )))
}

/// How the transition mass of a failed edge is redistributed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Renormalise the row of the failed edge.
    Unsupervised,
    /// Re-project onto the policies keeping the original occupancy.
    Supervised,
    /// Keep the original occupancy on the destinations only.
    LocallySupervised { destinations: Vec<usize> },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Unsupervised => "unsupervised",
            PolicyKind::Supervised => "supervised",
            PolicyKind::LocallySupervised { .. } => "locally-supervised",
        }
    }

    /// Parses a policy name; `destinations` is used by the locally supervised policy.
    pub fn parse(name: &str, destinations: &[usize]) -> Result<Self> {
        match name {
            "unsupervised" => Ok(PolicyKind::Unsupervised),
            "supervised" => Ok(PolicyKind::Supervised),
            "locally-supervised" => Ok(PolicyKind::LocallySupervised { destinations: destinations.to_vec() }),
            other => Err(WmgError::InvalidArgument(format!("unknown policy {other:?}"))),
        }
    }

    pub fn all(destinations: &[usize]) -> Vec<Self> {
        vec![
            PolicyKind::Unsupervised,
            PolicyKind::Supervised,
            PolicyKind::LocallySupervised { destinations: destinations.to_vec() },
        ]
    }

    fn check(&self, n: usize) -> Result<()> {
        if let PolicyKind::LocallySupervised { destinations } = self {
            if destinations.is_empty() || destinations.iter().any(|&d| d >= n) {
                return Err(WmgError::InvalidArgument("destinations must be non-empty and in range".into()));
            }
            let mut d = destinations.clone();
            d.sort_unstable();
            d.dedup();
            if d.len() == n {
                return Err(WmgError::InvalidArgument("destinations must leave at least one transit node".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of redistributing one failed edge.
#[derive(Debug, Clone)]
pub enum PolicyOutcome {
    Feasible(DMatrix<f64>),
    Infeasible(String),
}

/// Redistributes the transition mass of `failed` in `graph` (whose `P` is the
/// current policy). The returned matrix is zero on `failed`.
pub fn apply_policy(
    graph: &WeightedMarkovGraph,
    failed: (usize, usize),
    policy: &PolicyKind,
    pi_star: &DVector<f64>,
    eta: f64,
    config: &OptimizerConfig,
) -> Result<PolicyOutcome> {
    let (l, k) = failed;
    if !graph.has_edge(l, k) {
        return Err(WmgError::NotAnEdge(l, k));
    }
    let n = graph.n();
    policy.check(n)?;
    let mut p = graph.p().clone();
    p[(l, k)] = 0.0;
    let rest: f64 = p.row(l).sum();
    if !(rest > 0.0) {
        return Ok(PolicyOutcome::Infeasible(format!("node {l} has no other out-edge")));
    }
    p.row_mut(l).iter_mut().for_each(|v| *v /= rest);
    let target = match policy {
        PolicyKind::Unsupervised => return Ok(PolicyOutcome::Feasible(p)),
        PolicyKind::Supervised => pi_star.clone(),
        PolicyKind::LocallySupervised { destinations } => {
            let pi_prime = stationary_of(&p)?;
            hybrid_target(pi_star, &pi_prime, destinations)?
        }
    };
    let support: Vec<(usize, usize)> = graph.edges().iter().copied().filter(|&e| e != failed).collect();
    let set = build_feasible_set_on(n, &support, &target, eta, config)?;
    if !set.is_feasible() {
        return Ok(PolicyOutcome::Infeasible("feasible set is empty".into()));
    }
    let proj = project_to_feasible(&p, &set)?;
    if !proj.converged {
        return Ok(PolicyOutcome::Infeasible(format!("projection stalled at residual {:e}", proj.residual)));
    }
    Ok(PolicyOutcome::Feasible(proj.p))
}

/// Parameters of a cascade study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub n: usize,
    pub degree: f64,
    pub weight_range: (f64, f64),
    pub destinations: Vec<usize>,
    pub eta: f64,
    /// Bounds on surviving weights relative to the original ones.
    pub weight_bounds: (f64, f64),
    pub first_seed: u64,
    pub seeds: usize,
    pub max_steps: Option<usize>,
    pub optimizer: OptimizerConfig,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            n: 10,
            degree: 5.0,
            weight_range: (1.0, 10.0),
            destinations: vec![2, 5, 9],
            eta: 1e-3,
            weight_bounds: (2.0 / 3.0, 4.0 / 3.0),
            first_seed: 0,
            seeds: 150,
            max_steps: None,
            optimizer: OptimizerConfig { projection_tol: 1e-13, ..OptimizerConfig::default() },
        }
    }
}

impl CascadeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)
            .map_err(|e| WmgError::Parse { locus: format!("line {}", e.line()), message: e.to_string() })?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.weight_bounds;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
            return Err(WmgError::InvalidArgument("weight_bounds must satisfy 0 < lo ≤ 1 ≤ hi".into()));
        }
        if !(self.eta > 0.0) {
            return Err(WmgError::InvalidArgument("eta must be positive".into()));
        }
        self.optimizer.check()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|s| self.first_seed + s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Every remaining edge is needed for strong connectivity.
    Disconnection,
    ProjectionInfeasible,
    OptimizationInfeasible,
    StepBudget,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Disconnection => "disconnection",
            Termination::ProjectionInfeasible => "projection-infeasible",
            Termination::OptimizationInfeasible => "optimization-infeasible",
            Termination::StepBudget => "step-budget",
        }
    }
}

/// One successful cascade step.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub removed: (usize, usize),
    pub status: InterventionStatus,
    /// `K` and `V` of the redistributed policy under the original weights.
    pub k_unopt: f64,
    pub v_unopt: f64,
    pub k_opt: f64,
    pub v_opt: f64,
    /// `|π(P̃) - π*|` per node.
    pub dpi: Vec<f64>,
}

impl StepRecord {
    pub fn dk(&self) -> f64 {
        self.k_unopt - self.k_opt
    }

    pub fn dv(&self) -> f64 {
        self.v_unopt - self.v_opt
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CascadeRun {
    pub seed: u64,
    pub policy: PolicyKind,
    /// Every removal attempted, including the one that ended the run.
    pub removals: Vec<(usize, usize)>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
}

impl CascadeRun {
    pub fn is_success(&self) -> bool {
        !self.steps.is_empty()
    }

    pub fn total_dk(&self) -> f64 {
        self.steps.iter().map(StepRecord::dk).sum()
    }

    pub fn total_dv(&self) -> f64 {
        self.steps.iter().map(StepRecord::dv).sum()
    }

    /// Mean over steps of the node-averaged occupancy deviation.
    pub fn mean_dpi(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let per: f64 = self.steps.iter().map(|s| s.dpi.iter().sum::<f64>() / s.dpi.len() as f64).sum();
        per / self.steps.len() as f64
    }

    pub fn max_dpi_on(&self, nodes: &[usize]) -> f64 {
        self.steps.iter().flat_map(|s| nodes.iter().map(move |&i| s.dpi[i])).fold(0.0, f64::max)
    }
}

fn pick_removal(rng: &mut ChaCha8Rng, n: usize, edges: &[(usize, usize)]) -> Option<(usize, usize)> {
    let keeps = |e: (usize, usize)| {
        let rest: Vec<(usize, usize)> = edges.iter().copied().filter(|&x| x != e).collect();
        strongly_connected_components(n, &rest) == 1
    };
    for _ in 0..10 * edges.len() {
        let e = edges[rng.random_range(0..edges.len())];
        if keeps(e) {
            return Some(e);
        }
    }
    None
}

/// Runs one cascade: remove a random edge that keeps the network connected,
/// redistribute with `policy`, restore `K` and `V` of the original network
/// with the smallest weight change, repeat.
///
/// The removal sequence depends on `seed` only, so runs of different
/// policies on the same instance share their prefix.
pub fn run_cascade(
    original: &WeightedMarkovGraph,
    policy: &PolicyKind,
    seed: u64,
    config: &CascadeConfig,
) -> Result<CascadeRun> {
    config.check()?;
    let n = original.n();
    policy.check(n)?;
    let base = evaluate(original)?;
    let (k_ref, v_ref) = (base.summary.k, base.summary.v);
    let pi_star = base.analysis.pi.clone();
    let w_orig = original.w().clone();
    let bounds = WeightBounds::relative(&w_orig, config.weight_bounds.0, config.weight_bounds.1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut current = original.clone();
    let mut run = CascadeRun {
        seed,
        policy: policy.clone(),
        removals: Vec::new(),
        steps: Vec::new(),
        termination: Termination::StepBudget,
    };
    loop {
        if config.max_steps.is_some_and(|m| run.steps.len() >= m) {
            run.termination = Termination::StepBudget;
            break;
        }
        let Some(failed) = pick_removal(&mut rng, n, current.edges()) else {
            run.termination = Termination::Disconnection;
            break;
        };
        run.removals.push(failed);
        let p_new = match apply_policy(&current, failed, policy, &pi_star, config.eta, &config.optimizer)? {
            PolicyOutcome::Feasible(p) => p,
            PolicyOutcome::Infeasible(why) => {
                log::debug!("seed {seed} {}: projection failed after {failed:?}: {why}", policy.name());
                run.termination = Termination::ProjectionInfeasible;
                break;
            }
        };
        let after = current.without_edge(failed.0, failed.1)?.with_transition(&p_new);
        let unopt = evaluate(&after.with_weights(&w_orig))?.summary;
        let res = minimal_intervention(&after, after.w(), &bounds, k_ref, v_ref, &config.optimizer)?;
        if res.status == InterventionStatus::Infeasible {
            run.termination = Termination::OptimizationInfeasible;
            break;
        }
        let pi = stationary_of(&p_new)?;
        run.steps.push(StepRecord {
            removed: failed,
            status: res.status,
            k_unopt: unopt.k,
            v_unopt: unopt.v,
            k_opt: res.k,
            v_opt: res.v,
            dpi: (0..n).map(|i| (pi[i] - pi_star[i]).abs()).collect(),
        });
        current = after.with_weights(&res.w);
    }
    Ok(run)
}

/// Builds the instance for `seed` and runs every policy on it.
pub fn run_seed(seed: u64, policies: &[PolicyKind], config: &CascadeConfig) -> Result<Vec<CascadeRun>> {
    let inst = gen_geometric_graph(config.n, config.degree, config.weight_range, seed)?;
    policies.iter().map(|p| run_cascade(&inst.graph, p, seed, config)).collect()
}

/// Runs all seeds of `config` in parallel; results are ordered by seed, then policy.
pub fn run_study(policies: &[PolicyKind], config: &CascadeConfig) -> Result<Vec<CascadeRun>> {
    let per_seed: Vec<Vec<CascadeRun>> =
        config.seed_list().into_par_iter().map(|s| run_seed(s, policies, config)).collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Table-style statistics of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    pub successful_runs: usize,
    /// Means over successful runs of the per-run totals.
    pub mean_dk: f64,
    pub mean_dv: f64,
    pub mean_dpi: f64,
    /// Largest destination deviation over all steps of all runs.
    pub max_dpi_dest: f64,
}

/// One summary per policy, in order of first appearance.
pub fn aggregate_cascades(runs: &[CascadeRun], destinations: &[usize]) -> Vec<PolicySummary> {
    let mut names: Vec<&'static str> = Vec::new();
    for r in runs {
        if !names.contains(&r.policy.name()) {
            names.push(r.policy.name());
        }
    }
    names
        .into_iter()
        .map(|name| {
            let all: Vec<&CascadeRun> = runs.iter().filter(|r| r.policy.name() == name).collect();
            let ok: Vec<&CascadeRun> = all.iter().copied().filter(|r| r.is_success()).collect();
            let mean = |f: &dyn Fn(&CascadeRun) -> f64| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            PolicySummary {
                policy: name.to_string(),
                runs: all.len(),
                successful_runs: ok.len(),
                mean_dk: mean(&CascadeRun::total_dk),
                mean_dv: mean(&CascadeRun::total_dv),
                mean_dpi: mean(&CascadeRun::mean_dpi),
                max_dpi_dest: all.iter().map(|r| r.max_dpi_on(destinations)).fold(0.0, f64::max),
            }
        })
        .collect()
}

/// `seed,step,policy,status,dK,dV,max_dpi_dest`; each run ends with a row
/// carrying its termination reason.
pub fn write_runs_csv<W: Write>(runs: &[CascadeRun], destinations: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "step", "policy", "status", "dK", "dV", "max_dpi_dest"]).map_err(csv_err)?;
    for r in runs {
        for (i, s) in r.steps.iter().enumerate() {
            let status = match s.status {
                InterventionStatus::Optimal => "optimal",
                InterventionStatus::LocalOptimum => "local-optimum",
                InterventionStatus::Infeasible => "infeasible",
            };
            let dest = destinations.iter().map(|&d| s.dpi[d]).fold(0.0, f64::max);
            w.write_record([
                r.seed.to_string(),
                (i + 1).to_string(),
                r.policy.name().to_string(),
                status.to_string(),
                s.dk().to_string(),
                s.dv().to_string(),
                dest.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            r.seed.to_string(),
            (r.steps.len() + 1).to_string(),
            r.policy.name().to_string(),
            r.termination.name().to_string(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Metrics as rows, policies as columns.
pub fn write_summary_csv<W: Write>(summary: &[PolicySummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string()];
    header.extend(summary.iter().map(|s| s.policy.clone()));
    w.write_record(&header).map_err(csv_err)?;
    let rows: [(&str, fn(&PolicySummary) -> String); 5] = [
        ("successful_runs", |s| s.successful_runs.to_string()),
        ("mean_dK", |s| s.mean_dk.to_string()),
        ("mean_dV", |s| s.mean_dv.to_string()),
        ("mean_dpi", |s| s.mean_dpi.to_string()),
        ("max_dpi_dest", |s| s.max_dpi_dest.to_string()),
    ];
    for (name, f) in rows {
        let mut rec = vec![name.to_string()];
        rec.extend(summary.iter().map(f));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> WmgError {
    WmgError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::two_state_swap;

    fn complete(n: usize) -> WeightedMarkovGraph {
        let specs: Vec<EdgeSpec> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| EdgeSpec::deterministic(i, j, 1.0 / (n - 1) as f64, 1.0 + (i + 2 * j) as f64 / 4.0))
            .collect();
        WeightedMarkovGraph::from_edges(n, &specs).unwrap()
    }

    #[test]
    fn geometric_graph_is_connected() {
        let inst = gen_geometric_graph(10, 5.0, (1.0, 10.0), 3).unwrap();
        let g = &inst.graph;
        assert_eq!(strongly_connected_components(10, g.edges()), 1);
        for &(i, j) in g.edges() {
            assert!(g.has_edge(j, i));
            assert!((g.p()[(i, j)] - 1.0 / g.out_degree(i) as f64).abs() < 1e-15);
            assert!((1.0..10.0).contains(&g.w()[(i, j)]));
        }
    }

    #[test]
    fn two_nodes() {
        let inst = gen_geometric_graph(2, 5.0, (1.0, 10.0), 0).unwrap();
        assert_eq!(inst.graph.edges(), &[(0, 1), (1, 0)]);
    }

    #[test]
    fn swap_has_nothing_to_remove() {
        let cfg = CascadeConfig::default();
        let run = run_cascade(&two_state_swap(), &PolicyKind::Unsupervised, 0, &cfg).unwrap();
        assert!(run.steps.is_empty());
        assert_eq!(run.termination, Termination::Disconnection);
    }

    #[test]
    fn complete_graph_first_removal() {
        let g = complete(4);
        let cfg = CascadeConfig { max_steps: Some(1), destinations: vec![0], ..Default::default() };
        for policy in PolicyKind::all(&[0]) {
            let run = run_cascade(&g, &policy, 7, &cfg).unwrap();
            assert_eq!(run.steps.len(), 1, "{}", policy.name());
            assert!(run.steps[0].dk() >= -1e-9);
        }
    }

    #[test]
    fn unsupervised_single_out_edge() {
        let g = crate::graph::unit_cycle(3);
        let pi = DVector::from_element(3, 1.0 / 3.0);
        let out = apply_policy(&g, (0, 1), &PolicyKind::Unsupervised, &pi, 0.0, &OptimizerConfig::default()).unwrap();
        assert!(matches!(out, PolicyOutcome::Infeasible(_)));
    }

    #[test]
    fn policies_share_removals() {
        let cfg = CascadeConfig { seeds: 1, first_seed: 11, ..Default::default() };
        let runs = run_study(&PolicyKind::all(&cfg.destinations), &cfg).unwrap();
        let shortest = runs.iter().map(|r| r.removals.len()).min().unwrap();
        for r in &runs[1..] {
            assert_eq!(r.removals[..shortest], runs[0].removals[..shortest]);
        }
    }
}
