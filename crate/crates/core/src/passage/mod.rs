//! First-passage moment matrices of weighted Markovian graphs.
//!
//! `L` holds mean first-passage lengths, `M` and `M2` the first two moments of
//! the accumulated weight until first passage, and `V = M2 - M ∘ M`.
//! The closed forms are built on the fundamental matrix `Z`; the `oracle` and
//! `montecarlo` submodules compute the same quantities by independent routes.

pub mod montecarlo;
pub mod oracle;

use nalgebra::{DMatrix, DVector};

use crate::chain::ChainAnalysis;
use crate::error::{Result, WmgError};
use crate::graph::WeightedMarkovGraph;
use crate::linalg::{minus_ones_diag, scale_columns};

pub use montecarlo::{monte_carlo_passage, MonteCarloEstimate};
pub use oracle::{path_enumeration, taboo_oracle, PathSums, TabooColumn};

/// Absolute tolerance below zero that is still read as a zero variance.
pub const VARIANCE_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PassageMoments {
    pub l: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// `I - Z + 1 1ᵀ [Z]_dg`.
pub(crate) fn kemeny_snell_core(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    let d = z.diagonal();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - z[(i, j)] + d[j])
}

fn inv_pi(a: &ChainAnalysis) -> DVector<f64> {
    a.pi.map(|v| 1.0 / v)
}

fn check_dims(a: &ChainAnalysis, g: &WeightedMarkovGraph) -> Result<()> {
    if a.n() != g.n() {
        return Err(WmgError::Dimension(format!(
            "analysis has {} states, graph has {}",
            a.n(),
            g.n()
        )));
    }
    Ok(())
}

/// `L = (I - Z + 1 1ᵀ [Z]_dg) Ξ⁻¹`.
pub fn mean_passage_lengths(a: &ChainAnalysis) -> DMatrix<f64> {
    scale_columns(&kemeny_snell_core(&a.z), &inv_pi(a))
}

/// `[M]_dg = π (P ∘ W) 1 · Ξ⁻¹`, the mean weighted return times.
pub fn mean_return_weights(a: &ChainAnalysis) -> DVector<f64> {
    a.pi.map(|p| a.y / p)
}

/// Closed form of the mean weighted first-passage matrix:
/// `M = (Z (P∘W) Π - 1 1ᵀ [Z (P∘W) Π]_dg + π(P∘W)1 · (I - Z + 1 1ᵀ [Z]_dg)) Ξ⁻¹`.
pub fn weighted_mean_passage(a: &ChainAnalysis, g: &WeightedMarkovGraph) -> Result<DMatrix<f64>> {
    check_dims(a, g)?;
    let pw = g.p().component_mul(g.w());
    let zpw_pi = &a.z * pw * &a.ergodic;
    let c = a.pi.dot(&(g.p().component_mul(g.w()) * DVector::from_element(g.n(), 1.0)));
    let f = minus_ones_diag(&zpw_pi) + kemeny_snell_core(&a.z) * c;
    Ok(scale_columns(&f, &inv_pi(a)))
}

/// Explicit diagonal of `M2`:
/// `M2(i,i) = [π(P∘W2)1 + 2 (π (P∘W) (M - [M]_dg))(i)] / π(i)`.
pub fn second_moment_diagonal(
    a: &ChainAnalysis,
    g: &WeightedMarkovGraph,
    m: &DMatrix<f64>,
) -> DVector<f64> {
    let n = g.n();
    let ones = DVector::from_element(n, 1.0);
    let c2 = a.pi.dot(&(g.p().component_mul(g.w2()) * &ones));
    let r = m - crate::linalg::diag_part(m);
    let cross = (a.pi.transpose() * g.p().component_mul(g.w()) * r).transpose();
    DVector::from_fn(n, |i, _| (c2 + 2.0 * cross[i]) / a.pi[i])
}

/// Closed form of the second moment of weighted first-passage times.
pub fn weighted_second_moment(
    a: &ChainAnalysis,
    g: &WeightedMarkovGraph,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(a, g)?;
    let n = g.n();
    if m.nrows() != n || m.ncols() != n {
        return Err(WmgError::Dimension("M does not match the graph".into()));
    }
    let ones = DVector::from_element(n, 1.0);
    // Z (P∘W2) 1 1ᵀ has equal columns
    let zu2 = &a.z * (g.p().component_mul(g.w2()) * &ones);
    let first = DMatrix::from_fn(n, n, |i, j| zu2[i] - zu2[j]);
    let r = m - crate::linalg::diag_part(m);
    let second = minus_ones_diag(&(&a.z * g.p().component_mul(g.w()) * r)) * 2.0;
    let diag = second_moment_diagonal(a, g, m);
    let third = scale_columns(&kemeny_snell_core(&a.z), &diag);
    Ok(first + second + third)
}

/// `V = M2 - M ∘ M`, clamping round-off negatives to zero.
pub fn passage_variance(m: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.shape() != m2.shape() {
        return Err(WmgError::Dimension(format!("M is {:?}, M2 is {:?}", m.shape(), m2.shape())));
    }
    let mut v = m2 - m.component_mul(m);
    let floor = -(VARIANCE_CLAMP + 1e-12 * m2.amax());
    for col in 0..v.ncols() {
        for row in 0..v.nrows() {
            let x = v[(row, col)];
            if x < 0.0 {
                if x < floor {
                    return Err(WmgError::NegativeVariance { row, col, value: x });
                }
                v[(row, col)] = 0.0;
            }
        }
    }
    Ok(v)
}

/// All four moment matrices.
pub fn passage_moments(a: &ChainAnalysis, g: &WeightedMarkovGraph) -> Result<PassageMoments> {
    let l = mean_passage_lengths(a);
    let m = weighted_mean_passage(a, g)?;
    let m2 = weighted_second_moment(a, g, &m)?;
    let v = passage_variance(&m, &m2)?;
    Ok(PassageMoments { l, m, m2, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::analyze_chain;
    use crate::graph::{two_state_swap, unit_cycle, EdgeSpec, RandomGraphSpec, WeightModel};
    use crate::linalg::max_abs;

    fn mat(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    #[test]
    fn swap_chain_moments() {
        let g = two_state_swap();
        let a = analyze_chain(&g).unwrap();
        let pm = passage_moments(&a, &g).unwrap();
        assert!(max_abs(&(&pm.l - mat(2, &[2., 1., 1., 2.]))) < 1e-14);
        assert!(max_abs(&(&pm.m - mat(2, &[5., 2., 3., 5.]))) < 1e-14);
        assert!(max_abs(&(&pm.m2 - mat(2, &[25., 4., 9., 25.]))) < 1e-13);
        assert!(max_abs(&pm.v) < 1e-13);
    }

    #[test]
    fn cycle_lengths() {
        let g = unit_cycle(3);
        let a = analyze_chain(&g).unwrap();
        let l = mean_passage_lengths(&a);
        assert!(max_abs(&(l - mat(3, &[3., 1., 2., 2., 3., 1., 1., 2., 3.]))) < 1e-14);
    }

    #[test]
    fn exponential_edge_variance() {
        // cv = 1 gamma is the exponential law: W2 = 2 W² = 8.
        let g = WeightedMarkovGraph::from_edges(
            2,
            &[
                EdgeSpec { from: 0, to: 1, p: 1.0, w_mean: 2.0, model: WeightModel::GammaCv { cv: 1.0 } },
                EdgeSpec::deterministic(1, 0, 1.0, 3.0),
            ],
        )
        .unwrap();
        assert_eq!(g.w2()[(0, 1)], 8.0);
        let a = analyze_chain(&g).unwrap();
        let pm = passage_moments(&a, &g).unwrap();
        assert!((pm.v[(0, 1)] - 4.0).abs() < 1e-13);
        assert!(pm.v[(1, 0)].abs() < 1e-13);
        // return times 0 -> 0 and 1 -> 1 both carry the edge variance
        assert!((pm.v[(0, 0)] - 4.0).abs() < 1e-12 && (pm.v[(1, 1)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_reduce_to_lengths() {
        let g = RandomGraphSpec::new(6).generate(9);
        let ones = DMatrix::from_fn(6, 6, |i, j| if g.has_edge(i, j) { 1.0 } else { 0.0 });
        let g1 = g.with_weights(&ones);
        let a = analyze_chain(&g1).unwrap();
        let m = weighted_mean_passage(&a, &g1).unwrap();
        assert!(max_abs(&(m - mean_passage_lengths(&a))) < 1e-10);
    }

    #[test]
    fn diagonal_identity_two_ways() {
        let g = RandomGraphSpec::new(7).stochastic(0.5).generate(2);
        let a = analyze_chain(&g).unwrap();
        let m = weighted_mean_passage(&a, &g).unwrap();
        let d = mean_return_weights(&a);
        for i in 0..7 {
            assert!((m[(i, i)] - d[i]).abs() <= 1e-12 * d[i].max(1.0));
        }
        let l = mean_passage_lengths(&a);
        for i in 0..7 {
            assert!((l[(i, i)] * a.pi[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_in_weights() {
        let g = RandomGraphSpec::new(5).generate(21);
        let a = analyze_chain(&g).unwrap();
        let w1 = g.w().clone();
        let w2 = g.w().map(|v| if v > 0.0 { 1.0 / v + 0.5 } else { 0.0 });
        let m1 = weighted_mean_passage(&a, &g.with_weights(&w1)).unwrap();
        let m2 = weighted_mean_passage(&a, &g.with_weights(&w2)).unwrap();
        let mix = weighted_mean_passage(&a, &g.with_weights(&(&w1 * 0.3 + &w2 * 1.7))).unwrap();
        assert!(max_abs(&(mix - (m1 * 0.3 + m2 * 1.7))) < 1e-10);
    }

    #[test]
    fn negative_variance_is_rejected_beyond_clamp() {
        let m = mat(1, &[2.0]);
        assert_eq!(passage_variance(&m, &mat(1, &[4.0 - 5e-9])).unwrap()[(0, 0)], 0.0);
        assert!(matches!(
            passage_variance(&m, &mat(1, &[3.9])),
            Err(WmgError::NegativeVariance { .. })
        ));
    }
}
