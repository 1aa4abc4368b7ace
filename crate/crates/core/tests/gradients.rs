use wmg::gradients::{d_k_dw, fd_verify, fd_verify_all, Direction, Quantity, FD_STEP};
use wmg::graph::{two_state_swap, RandomGraphSpec};
use wmg::analyze_chain;

#[test]
fn every_partial_matches_differences() {
    for seed in [3, 17, 40] {
        let g = RandomGraphSpec::new(5).stochastic(0.6).generate(seed);
        for r in fd_verify_all(&g, FD_STEP).unwrap() {
            let tol = if r.quantity == Quantity::K { 1e-10 } else { 1e-4 };
            assert!(r.rel_err <= tol, "{} wrt {}: {:e}", r.quantity, r.wrt, r.rel_err);
        }
    }
}

#[test]
fn kemeny_gradient_ignores_weights() {
    let g = RandomGraphSpec::new(6).generate(2);
    let scaled = g.with_weights(&(g.w() * 3.5));
    let a = d_k_dw(&analyze_chain(&g).unwrap(), &g);
    let b = d_k_dw(&analyze_chain(&scaled).unwrap(), &scaled);
    assert_eq!(a, b);
}

#[test]
fn corrupted_analytic_value_is_caught() {
    let g = RandomGraphSpec::new(4).generate(1);
    let (l, k) = g.edges()[0];
    let r = fd_verify(Quantity::M, &g, &Direction::Weight(l, k), FD_STEP).unwrap();
    assert!(r.rel_err < 1e-6);
    assert!(r.rescaled(1.01).rel_err > 1e-4);
}

#[test]
fn mismatched_direction_is_rejected() {
    let g = two_state_swap();
    assert!(fd_verify(Quantity::Pi, &g, &Direction::Weight(0, 1), FD_STEP).is_err());
    assert!(fd_verify(Quantity::M, &g, &Direction::Weight(0, 0), FD_STEP).is_err());
}
