//! Optimisation over transition matrices with a prescribed stationary
//! distribution, and over edge weights under Kemeny-constant constraints.

mod feasible;
mod intervention;
mod spsa;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WmgError};

pub use feasible::{
    build_feasible_set, build_feasible_set_on, project_to_feasible, FeasibilityStatus, PolicyFeasibleSet,
    Projection, Witness,
};
pub use intervention::{minimal_intervention, InterventionResult, InterventionStatus, WeightBounds};
pub use spsa::{baseline_policy, maximize_surprise, minimize_variance, optimize_policy, Objective, SpsaResult, TraceRow};

use nalgebra::DVector;

/// Tuning knobs shared by the policy and weight optimisers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub iterations: usize,
    /// SPSA step gain `a` in `a / (k + 1 + A)^α`.
    pub a: f64,
    /// SPSA perturbation size `c` in `c / (k + 1)^γ`.
    pub c: f64,
    /// Stability constant `A`; `None` means `iterations / 10`.
    pub big_a: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    /// Paired perturbations averaged per gradient estimate.
    pub gradient_samples: usize,
    pub projection_tol: f64,
    pub max_sweeps: usize,
    /// Residual accepted from the phase-1 feasibility search.
    pub phase1_tol: f64,
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
    /// Projected-gradient iterations per penalty round.
    pub inner_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 3000,
            a: 10.0,
            c: 0.05,
            big_a: None,
            alpha: 0.602,
            gamma: 0.101,
            gradient_samples: 1,
            projection_tol: 1e-10,
            max_sweeps: 10_000,
            phase1_tol: 1e-8,
            penalty_start: 1.0,
            penalty_growth: 10.0,
            penalty_rounds: 5,
            inner_iterations: 200,
        }
    }
}

impl OptimizerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| WmgError::Parse { locus: format!("line {}, column {}", e.line(), e.column()), message: e.to_string() })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("c", self.c),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("projection_tol", self.projection_tol),
            ("phase1_tol", self.phase1_tol),
            ("penalty_start", self.penalty_start),
            ("penalty_growth", self.penalty_growth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WmgError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(a) = self.big_a {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(WmgError::InvalidArgument(format!("big_a must be non-negative, got {a}")));
            }
        }
        if self.gradient_samples == 0 || self.max_sweeps == 0 {
            return Err(WmgError::InvalidArgument("gradient_samples and max_sweeps must be positive".into()));
        }
        Ok(())
    }

    pub fn stability(&self) -> f64 {
        self.big_a.unwrap_or(self.iterations as f64 / 10.0)
    }
}

/// Occupancy that keeps `pi_star` on `destinations` and rescales `pi_prime`
/// on the remaining nodes to restore unit mass.
pub fn hybrid_target(pi_star: &DVector<f64>, pi_prime: &DVector<f64>, destinations: &[usize]) -> Result<DVector<f64>> {
    let n = pi_star.len();
    if pi_prime.len() != n {
        return Err(WmgError::Dimension(format!("π* has {n} entries, π′ has {}", pi_prime.len())));
    }
    let mut is_dest = vec![false; n];
    for &d in destinations {
        if d >= n {
            return Err(WmgError::InvalidArgument(format!("destination {d} out of range")));
        }
        is_dest[d] = true;
    }
    if n > 0 && is_dest.iter().all(|&d| d) {
        return Err(WmgError::InvalidArgument("every node is a destination".into()));
    }
    let m_d: f64 = (0..n).filter(|&i| is_dest[i]).map(|i| pi_star[i]).sum();
    let transit: f64 = (0..n).filter(|&i| !is_dest[i]).map(|i| pi_prime[i]).sum();
    let alpha = (1.0 - m_d) / transit;
    Ok(DVector::from_fn(n, |i, _| if is_dest[i] { pi_star[i] } else { alpha * pi_prime[i] }))
}
