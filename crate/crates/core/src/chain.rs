//! Stationary analysis of the embedded jump chain and of the weighted process.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WmgError};
use crate::graph::{unreachable_pair, WeightedMarkovGraph};
use crate::linalg::{norm_one, ones_times_row};

/// Condition estimates above this only produce a warning.
pub const COND_WARN: f64 = 1e12;

/// Stationary quantities of a weighted Markovian graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAnalysis {
    /// Stationary distribution of `P`.
    pub pi: DVector<f64>,
    /// Ergodic projector `1 π`.
    pub ergodic: DMatrix<f64>,
    /// Fundamental matrix `(I - P + Π)⁻¹`.
    pub z: DMatrix<f64>,
    /// Expected weight of one step out of each state, `(P ∘ W) 1`.
    pub ubar: DVector<f64>,
    /// `Σ π(k) Ū(k)`.
    pub y: f64,
    /// Long-run fraction of time spent in each state.
    pub pi_w: DVector<f64>,
    /// One-norm condition estimate of `I - P + Π`.
    pub cond: f64,
}

impl ChainAnalysis {
    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn trace_z(&self) -> f64 {
        self.z.trace()
    }

    /// `π (P ∘ W) 1`, the stationary mean weight per step.
    pub fn mean_step_weight(&self) -> f64 {
        self.y
    }
}

/// Stationary distribution by a direct solve of `π (P - I) = 0`, `π 1 = 1`.
pub fn stationary_of(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(WmgError::Dimension(format!("P is {}x{}", n, p.ncols())));
    }
    if let Some((from, to)) = unreachable_pair(p) {
        return Err(WmgError::Reducible { from, to });
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu.solve(&b).ok_or(WmgError::SingularFundamental { cond: f64::INFINITY })?;
    // one step of iterative refinement
    let r = &b - &a * &pi;
    if let Some(d) = lu.solve(&r) {
        pi += d;
    }
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let s = pi.sum();
    Ok(pi / s)
}

/// Computes `π`, `Π`, `Z`, `Ū`, `Y` and `π_W` for a graph.
pub fn analyze_chain(graph: &WeightedMarkovGraph) -> Result<ChainAnalysis> {
    let p = graph.p();
    let n = graph.n();
    let pi = stationary_of(p)?;
    let ergodic = ones_times_row(n, &pi);
    let a = DMatrix::identity(n, n) - p + &ergodic;
    let z = a.clone().lu().try_inverse().ok_or(WmgError::SingularFundamental { cond: f64::INFINITY })?;
    let cond = norm_one(&a) * norm_one(&z);
    if !cond.is_finite() {
        return Err(WmgError::SingularFundamental { cond });
    }
    if cond > COND_WARN {
        warn!("I - P + Pi is ill-conditioned (condition estimate {cond:e})");
    }
    let ubar = p.component_mul(graph.w()) * DVector::from_element(n, 1.0);
    let y = pi.dot(&ubar);
    let pi_w = pi.component_mul(&ubar) / y;
    Ok(ChainAnalysis { pi, ergodic, z, ubar, y, pi_w, cond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{two_state_swap, uniform_mixing_matrix, EdgeSpec, RandomGraphSpec};
    use crate::linalg::max_abs;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn swap_chain_fundamental_matrix() {
        let a = analyze_chain(&two_state_swap()).unwrap();
        assert!(close(a.pi[0], 0.5, 1e-15) && close(a.pi[1], 0.5, 1e-15));
        let expected = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!(max_abs(&(&a.z - expected)) < 1e-15);
        assert!(close(a.trace_z(), 1.5, 1e-15));
    }

    #[test]
    fn swap_chain_weighted_occupancy() {
        let a = analyze_chain(&two_state_swap()).unwrap();
        assert_eq!(a.ubar.as_slice(), &[2.0, 3.0]);
        assert!(close(a.y, 2.5, 1e-15));
        assert!(close(a.pi_w[0], 0.4, 1e-15) && close(a.pi_w[1], 0.6, 1e-15));
    }

    #[test]
    fn stationary_examples() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(stationary_of(&swap).unwrap().as_slice(), &[0.5, 0.5]);
        let cyc = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        for v in stationary_of(&cyc).unwrap().iter() {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75]);
        let pi = stationary_of(&p).unwrap();
        assert!(close(pi[0], 1.0 / 3.0, 1e-15) && close(pi[1], 2.0 / 3.0, 1e-15));
        assert!((pi.transpose() * &p - pi.transpose()).amax() < 1e-15);
    }

    #[test]
    fn reducible_chain_names_a_pair() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        match stationary_of(&p) {
            Err(WmgError::Reducible { from: 0, to: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_mixing_chain() {
        let n = 5;
        let h = uniform_mixing_matrix(n);
        let specs: Vec<EdgeSpec> = (0..n)
            .flat_map(|i| (0..n).map(move |j| EdgeSpec::deterministic(i, j, 0.2, 1.0)))
            .collect();
        let g = WeightedMarkovGraph::from_edges(n, &specs).unwrap().with_transition(&h);
        let a = analyze_chain(&g).unwrap();
        assert!(a.pi.iter().all(|v| close(*v, 0.2, 1e-15)));
        let ones = DVector::from_element(n, 1.0);
        assert!((&a.z * &ones - &ones).amax() < 1e-14);
        assert!((a.pi.transpose() * &a.z - a.pi.transpose()).amax() < 1e-14);
    }

    #[test]
    fn constant_weights_give_pi_w_equal_pi() {
        let g = RandomGraphSpec::new(6).generate(11);
        let w = DMatrix::from_fn(6, 6, |i, j| if g.has_edge(i, j) { 2.5 } else { 0.0 });
        let a = analyze_chain(&g.with_weights(&w)).unwrap();
        assert!((&a.pi_w - &a.pi).amax() < 1e-14);
    }

    #[test]
    fn any_positive_occupancy_is_reachable_through_weights() {
        // Ū(i) ∝ target(i) / π(i) reproduces the target as π_W.
        let g = RandomGraphSpec::new(5).generate(4);
        let a = analyze_chain(&g).unwrap();
        let target = DVector::from_vec(vec![0.1, 0.3, 0.2, 0.15, 0.25]);
        let ubar = target.component_div(&a.pi);
        let w = DMatrix::from_fn(5, 5, |i, j| if g.has_edge(i, j) { ubar[i] } else { 0.0 });
        let b = analyze_chain(&g.with_weights(&w)).unwrap();
        assert!((&b.pi_w - &target).amax() < 1e-13);
    }
}
