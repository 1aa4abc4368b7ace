use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, WmgError};
use crate::graph::WeightedMarkovGraph;
use crate::kemeny::evaluate;

use super::feasible::{project_to_feasible, uniform_over_support, PolicyFeasibleSet};
use super::OptimizerConfig;

/// Policy objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Maximise `√V_W / K_W`.
    MaxSurprise,
    /// Minimise `V_W`.
    MinVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    /// Objective at the iterate (surprise index or `V_W`, unnormalised).
    pub objective: f64,
    /// Constraint residual of the iterate.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpsaResult {
    /// Best policy seen.
    pub p: DMatrix<f64>,
    pub objective: f64,
    pub best_iter: usize,
    pub trace: Vec<TraceRow>,
}

fn objective_value(g: &WeightedMarkovGraph, p: &DMatrix<f64>, obj: Objective) -> Result<f64> {
    let s = evaluate(&g.with_transition(p))?.summary;
    Ok(match obj {
        Objective::MaxSurprise => s.s,
        Objective::MinVariance => s.v_w,
    })
}

/// `project_to_feasible` of the uniform-over-support policy.
pub fn baseline_policy(set: &PolicyFeasibleSet) -> Result<DMatrix<f64>> {
    if !set.is_feasible() {
        return Err(WmgError::InvalidArgument("feasible set is empty".into()));
    }
    let proj = project_to_feasible(&uniform_over_support(set.n, &set.support), set)?;
    if proj.converged {
        Ok(proj.p)
    } else {
        Ok(set.feasible_point.clone().expect("feasible set carries a point"))
    }
}

fn project(set: &PolicyFeasibleSet, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let proj = project_to_feasible(p, set)?;
    Ok((proj.p, proj.converged))
}

/// SPSA over the feasible set, starting from [`baseline_policy`].
///
/// Perturbations are Rademacher vectors in null-space coordinates; every
/// perturbed point and every iterate is projected back onto the set. The
/// objective is scaled by its baseline magnitude so the gains are unitless.
pub fn optimize_policy(
    graph: &WeightedMarkovGraph,
    set: &PolicyFeasibleSet,
    objective: Objective,
    config: &OptimizerConfig,
) -> Result<SpsaResult> {
    config.check()?;
    if set.n != graph.n() {
        return Err(WmgError::Dimension(format!("set has {} nodes, graph has {}", set.n, graph.n())));
    }
    let start = baseline_policy(set)?;
    let f0 = objective_value(graph, &start, objective)?;
    let mut trace = vec![TraceRow { iter: 0, objective: f0, residual: set.residual(&start) }];
    let d = set.dimension();
    if d == 0 || config.iterations == 0 {
        return Ok(SpsaResult { p: start, objective: f0, best_iter: 0, trace });
    }
    // ascent direction on sign * f / scale
    let sign = match objective {
        Objective::MaxSurprise => 1.0,
        Objective::MinVariance => -1.0,
    };
    let scale = if f0.abs() > 0.0 { f0.abs() } else { 1.0 };
    let score = |p: &DMatrix<f64>| -> Result<f64> { Ok(sign * objective_value(graph, p, objective)? / scale) };
    let better = |a: f64, b: f64| sign * a > sign * b;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let big_a = config.stability();
    let basis = &set.nullspace_basis;
    let mut x = start.clone();
    let (mut best_p, mut best_f, mut best_iter) = (start, f0, 0);
    for k in 0..config.iterations {
        let kk = (k + 1) as f64;
        let ak = config.a / (kk + big_a).powf(config.alpha);
        let ck = config.c / kk.powf(config.gamma);
        let mut ghat = DVector::zeros(d);
        for _ in 0..config.gradient_samples {
            let delta = DVector::from_fn(d, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let step = set.to_matrix(&(basis * &delta * ck));
            let (xp, _) = project(set, &(&x + &step))?;
            let (xm, _) = project(set, &(&x - &step))?;
            let diff = score(&xp)? - score(&xm)?;
            ghat += &delta * (diff / (2.0 * ck));
        }
        ghat /= config.gradient_samples as f64;
        let move_ = set.to_matrix(&(basis * ghat * ak));
        let (next, converged) = project(set, &(&x + &move_))?;
        if converged {
            x = next;
        }
        let f = objective_value(graph, &x, objective)?;
        trace.push(TraceRow { iter: k + 1, objective: f, residual: set.residual(&x) });
        if better(f, best_f) {
            best_f = f;
            best_p = x.clone();
            best_iter = k + 1;
        }
    }
    log::debug!("SPSA {objective:?}: {f0} -> {best_f} at iteration {best_iter}");
    Ok(SpsaResult { p: best_p, objective: best_f, best_iter, trace })
}

pub fn maximize_surprise(
    graph: &WeightedMarkovGraph,
    set: &PolicyFeasibleSet,
    config: &OptimizerConfig,
) -> Result<SpsaResult> {
    optimize_policy(graph, set, Objective::MaxSurprise, config)
}

pub fn minimize_variance(
    graph: &WeightedMarkovGraph,
    set: &PolicyFeasibleSet,
    config: &OptimizerConfig,
) -> Result<SpsaResult> {
    optimize_policy(graph, set, Objective::MinVariance, config)
}
