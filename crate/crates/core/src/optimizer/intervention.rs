use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::analyze_chain;
use crate::error::{Result, WmgError};
use crate::gradients::variance_scalar_gradient;
use crate::graph::WeightedMarkovGraph;
use crate::kemeny::evaluate;

use super::OptimizerConfig;

/// Elementwise bounds on the weights of surviving edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBounds {
    pub min: DMatrix<f64>,
    pub max: DMatrix<f64>,
}

impl WeightBounds {
    /// `[lo · W, hi · W]` entrywise.
    pub fn relative(w: &DMatrix<f64>, lo: f64, hi: f64) -> Self {
        Self { min: w * lo, max: w * hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionStatus {
    /// Projection onto the convex constraints already met the variance bound.
    Optimal,
    /// Stationary point of the penalised problem, made feasible.
    LocalOptimum,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct InterventionResult {
    pub w: DMatrix<f64>,
    pub status: InterventionStatus,
    /// `‖W̃ - W‖²` over surviving edges.
    pub objective: f64,
    pub k: f64,
    pub v: f64,
}

struct Problem<'a> {
    graph: &'a WeightedMarkovGraph,
    target: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    /// `∂K/∂W` over the edges; `K = g · w`.
    g: DVector<f64>,
    k_ref: f64,
    v_ref: f64,
}

impl Problem<'_> {
    fn matrix(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.graph.w().clone();
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            m[(i, j)] = w[e];
        }
        m
    }

    fn variance(&self, w: &DVector<f64>) -> Result<f64> {
        Ok(evaluate(&self.graph.with_weights(&self.matrix(w)))?.summary.v)
    }

    fn variance_grad(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let g = self.graph.with_weights(&self.matrix(w));
        let e = evaluate(&g)?;
        Ok((e.summary.v, variance_scalar_gradient(&e, &g)?))
    }

    /// Euclidean projection onto `{lo ≤ w ≤ hi, g · w ≤ K_ref}`.
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let at = |lambda: f64| {
            DVector::from_fn(y.len(), |e, _| (y[e] - lambda * self.g[e]).clamp(self.lo[e], self.hi[e]))
        };
        let w0 = at(0.0);
        if self.g.dot(&w0) <= self.k_ref {
            return w0;
        }
        let mut hi = (0..y.len()).map(|e| (y[e] - self.lo[e]) / self.g[e]).fold(0.0_f64, f64::max);
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.g.dot(&at(mid)) <= self.k_ref {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        at(hi)
    }

    fn distance(&self, w: &DVector<f64>) -> f64 {
        (w - &self.target).norm_squared()
    }

    fn vref_scale(&self) -> f64 {
        self.v_ref.abs().max(1e-12)
    }

    /// Projected gradient with Armijo backtracking on
    /// `‖w - target‖² / ‖target‖² + ρ (max(0, V - V_ref) / V_ref)²`.
    fn penalised_descent(&self, mut w: DVector<f64>, rho: f64, iters: usize) -> Result<DVector<f64>> {
        let tscale = self.target.norm_squared().max(1e-300);
        let vs = self.vref_scale();
        let phi = |w: &DVector<f64>, v: f64| {
            let excess = ((v - self.v_ref) / vs).max(0.0);
            self.distance(w) / tscale + rho * excess * excess
        };
        let mut step = 1.0;
        for _ in 0..iters {
            let (v, vgrad) = self.variance_grad(&w)?;
            let excess = ((v - self.v_ref) / vs).max(0.0);
            let grad = (&w - &self.target) * (2.0 / tscale) + vgrad * (2.0 * rho * excess / vs);
            let f = phi(&w, v);
            let mut accepted = false;
            for _ in 0..60 {
                let cand = self.project(&(&w - &grad * step));
                let moved = (&cand - &w).norm_squared();
                if moved == 0.0 {
                    break;
                }
                let fc = phi(&cand, self.variance(&cand)?);
                if fc <= f - 1e-4 * moved / step {
                    w = cand;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(w)
    }

    /// Searches for any point of the convex set with `V ≤ V_ref`.
    fn restore(&self, config: &OptimizerConfig) -> Result<Option<DVector<f64>>> {
        let mut w = self.lo.clone();
        let budget = config.inner_iterations * config.penalty_rounds.max(1);
        let mut step = 1.0;
        for _ in 0..budget {
            let (v, grad) = self.variance_grad(&w)?;
            if v <= self.v_ref {
                return Ok(Some(w));
            }
            let mut accepted = false;
            for _ in 0..60 {
                let cand = self.project(&(&w - &grad * step));
                let moved = (&cand - &w).norm_squared();
                if moved == 0.0 {
                    break;
                }
                if self.variance(&cand)? <= v - 1e-4 * moved / step {
                    w = cand;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok((self.variance(&w)? <= self.v_ref).then_some(w))
    }
}

/// Smallest change of the weights of `graph_after` (transition matrix held
/// fixed) keeping `K ≤ k_ref`, `V ≤ v_ref` and the box bounds.
///
/// `w_target` is the weight matrix the change is measured from. The `K`
/// constraint and the box are handled by exact projection; the variance bound
/// by a quadratic penalty followed by a feasibility line search towards a
/// restoration point.
pub fn minimal_intervention(
    graph_after: &WeightedMarkovGraph,
    w_target: &DMatrix<f64>,
    bounds: &WeightBounds,
    k_ref: f64,
    v_ref: f64,
    config: &OptimizerConfig,
) -> Result<InterventionResult> {
    config.check()?;
    let n = graph_after.n();
    for (name, m) in [("W", w_target), ("W_MIN", &bounds.min), ("W_MAX", &bounds.max)] {
        if m.shape() != (n, n) {
            return Err(WmgError::Dimension(format!("{name} is {:?}, expected ({n}, {n})", m.shape())));
        }
    }
    let edges = graph_after.edges();
    let pick = |m: &DMatrix<f64>| DVector::from_iterator(edges.len(), edges.iter().map(|&(i, j)| m[(i, j)]));
    let (target, lo, hi) = (pick(w_target), pick(&bounds.min), pick(&bounds.max));
    if (0..edges.len()).any(|e| !(lo[e] > 0.0 && lo[e] <= hi[e])) {
        return Err(WmgError::InvalidArgument("weight bounds must satisfy 0 < W_MIN ≤ W_MAX".into()));
    }
    let a = analyze_chain(graph_after)?;
    let tz = a.trace_z();
    let g = DVector::from_iterator(edges.len(), edges.iter().map(|&(l, k)| tz * a.pi[l] * graph_after.p()[(l, k)]));
    let prob = Problem { graph: graph_after, target, lo, hi, g, k_ref, v_ref };

    let finish = |w: DVector<f64>, status: InterventionStatus| -> Result<InterventionResult> {
        let wm = prob.matrix(&w);
        let s = evaluate(&graph_after.with_weights(&wm))?.summary;
        Ok(InterventionResult { objective: prob.distance(&w), w: wm, status, k: s.k, v: s.v })
    };
    let infeasible = || -> Result<InterventionResult> {
        let mut r = finish(prob.target.clone(), InterventionStatus::Infeasible)?;
        r.objective = 0.0;
        Ok(r)
    };

    if prob.g.dot(&prob.lo) > k_ref {
        return infeasible();
    }
    let w0 = prob.project(&prob.target);
    if prob.variance(&w0)? <= v_ref {
        return finish(w0, InterventionStatus::Optimal);
    }
    let Some(w_r) = prob.restore(config)? else {
        return infeasible();
    };
    let mut w = w0;
    let mut rho = config.penalty_start;
    for _ in 0..config.penalty_rounds {
        w = prob.penalised_descent(w, rho, config.inner_iterations)?;
        if prob.variance(&w)? <= v_ref {
            break;
        }
        rho *= config.penalty_growth;
    }
    if prob.variance(&w)? > v_ref {
        // the segment lies in the convex set; keep the point nearest w with V ≤ V_ref
        let (mut t_ok, mut t_bad) = (0.0, 1.0);
        for _ in 0..60 {
            let t = 0.5 * (t_ok + t_bad);
            let cand = &w_r + (&w - &w_r) * t;
            if prob.variance(&cand)? <= v_ref {
                t_ok = t;
            } else {
                t_bad = t;
            }
        }
        w = &w_r + (&w - &w_r) * t_ok;
    }
    if prob.distance(&w_r) < prob.distance(&w) {
        w = w_r;
    }
    finish(w, InterventionStatus::LocalOptimum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RandomGraphSpec;

    #[test]
    fn unchanged_graph_keeps_weights() {
        let g = RandomGraphSpec::new(5).generate(1);
        let s = evaluate(&g).unwrap().summary;
        let b = WeightBounds::relative(g.w(), 2.0 / 3.0, 4.0 / 3.0);
        let r = minimal_intervention(&g, g.w(), &b, s.k, s.v, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.status, InterventionStatus::Optimal);
        assert_eq!(r.objective, 0.0);
        assert_eq!(&r.w, g.w());
    }

    #[test]
    fn collapsed_bounds_are_infeasible() {
        let g = RandomGraphSpec::new(5).generate(2);
        let s = evaluate(&g).unwrap().summary;
        let b = WeightBounds { min: g.w().clone(), max: g.w().clone() };
        let r = minimal_intervention(&g, g.w(), &b, 0.9 * s.k, s.v, &OptimizerConfig::default()).unwrap();
        assert_eq!(r.status, InterventionStatus::Infeasible);
    }
}
