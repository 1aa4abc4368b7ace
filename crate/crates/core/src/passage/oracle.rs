//! Deterministic oracles for first-passage moments that avoid the fundamental matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WmgError};
use crate::graph::WeightedMarkovGraph;

/// Column `j` of `L`, `M` and `M2` obtained from the taboo kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TabooColumn {
    pub target: usize,
    pub length: DVector<f64>,
    pub mean: DVector<f64>,
    pub second_moment: DVector<f64>,
}

/// Solves `(I - ⱼP) x = (P∘W) 1` where `ⱼP` is `P` with column `j` zeroed.
///
/// `x(i)` is the expected weight collected from `i` until the walk first enters
/// `j` (a return when `i = j`). The second moment follows from
/// `(I - ⱼP) y = (P∘W2) 1 + 2 (P∘W)ⱼ x`.
pub fn taboo_oracle(g: &WeightedMarkovGraph, j: usize) -> Result<TabooColumn> {
    let n = g.n();
    if j >= n {
        return Err(WmgError::InvalidArgument(format!("target {j} out of range")));
    }
    let mut taboo = g.p().clone();
    taboo.column_mut(j).fill(0.0);
    let kernel = DMatrix::identity(n, n) - &taboo;
    let lu = kernel.lu();
    let solve = |rhs: &DVector<f64>| lu.solve(rhs).ok_or(WmgError::SingularTaboo { target: j });

    let ones = DVector::from_element(n, 1.0);
    let length = solve(&ones)?;
    let ubar = g.p().component_mul(g.w()) * &ones;
    let mean = solve(&ubar)?;
    let mut pw = g.p().component_mul(g.w());
    pw.column_mut(j).fill(0.0);
    let rhs2 = g.p().component_mul(g.w2()) * &ones + (pw * &mean) * 2.0;
    let second_moment = solve(&rhs2)?;
    Ok(TabooColumn { target: j, length, mean, second_moment })
}

/// Truncated sums over first-passage paths from `from` to `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSums {
    /// `Σ_ρ l(ρ) p(ρ)`.
    pub length: f64,
    /// `Σ_ρ r(ρ) p(ρ)`.
    pub mean: f64,
    /// `Σ_ρ E[r(ρ)²] p(ρ)`.
    pub second_moment: f64,
    /// Probability mass of paths longer than `steps` (truncation bound).
    pub residual_mass: f64,
    pub steps: usize,
}

/// Sums `r(ρ) p(ρ)` over all first-passage paths by path length.
///
/// Paths sharing their current end node are aggregated, so step `t` carries
/// the exact contribution of every path of length `t`. Stops once the mass of
/// paths still avoiding `to` drops below `tol` or after `max_steps`.
pub fn path_enumeration(
    g: &WeightedMarkovGraph,
    from: usize,
    to: usize,
    tol: f64,
    max_steps: usize,
) -> PathSums {
    let n = g.n();
    let (p, w, w2) = (g.p(), g.w(), g.w2());
    // mass, E[r·1], E[r²·1] over walks still avoiding `to`, indexed by current node
    let mut mass = vec![0.0; n];
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    mass[from] = 1.0;
    let (mut length, mut mean, mut second_moment) = (0.0, 0.0, 0.0);
    let mut residual = 1.0;
    let mut steps = 0;
    while steps < max_steps && residual > tol {
        steps += 1;
        let mut nmass = vec![0.0; n];
        let mut nfirst = vec![0.0; n];
        let mut nsecond = vec![0.0; n];
        for k in 0..n {
            if mass[k] == 0.0 {
                continue;
            }
            for m in g.successors(k) {
                let pr = p[(k, m)];
                let (wm, w2m) = (w[(k, m)], w2[(k, m)]);
                let a = mass[k] * pr;
                let b = (first[k] + mass[k] * wm) * pr;
                let c = (second[k] + 2.0 * first[k] * wm + mass[k] * w2m) * pr;
                if m == to {
                    length += steps as f64 * a;
                    mean += b;
                    second_moment += c;
                } else {
                    nmass[m] += a;
                    nfirst[m] += b;
                    nsecond[m] += c;
                }
            }
        }
        mass = nmass;
        first = nfirst;
        second = nsecond;
        residual = mass.iter().sum();
    }
    PathSums { length, mean, second_moment, residual_mass: residual, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{two_state_swap, unit_cycle};

    #[test]
    fn swap_chain_column() {
        let col = taboo_oracle(&two_state_swap(), 1).unwrap();
        assert_eq!(col.mean[0], 2.0);
        assert_eq!(col.mean[1], 5.0);
    }

    #[test]
    fn cycle_column_of_lengths() {
        let col = taboo_oracle(&unit_cycle(3), 2).unwrap();
        assert_eq!(col.length.as_slice(), &[2.0, 1.0, 3.0]);
    }

    #[test]
    fn path_sums_on_swap_chain() {
        let s = path_enumeration(&two_state_swap(), 0, 0, 1e-14, 100);
        assert_eq!((s.length, s.mean, s.second_moment), (2.0, 5.0, 25.0));
        assert_eq!(s.residual_mass, 0.0);
    }
}
