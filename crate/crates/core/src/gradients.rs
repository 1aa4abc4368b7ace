//! Analytic partial derivatives of stationary quantities, passage moments and
//! Kemeny constants, with a central finite-difference checker.
//!
//! Derivatives with respect to `W(l,k)` hold `P` fixed; with stochastic weights
//! `W2(l,k)` moves along its weight model (`∂W2/∂W = 2 W (1 + cv²)`).
//! Derivatives with respect to `P` are directional, along perturbations `dP`
//! with `dP 1 = 0` supported on the edge set.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::{analyze_chain, ChainAnalysis};
use crate::error::{Result, WmgError};
use crate::graph::WeightedMarkovGraph;
use crate::kemeny::{evaluate, Evaluation};
use crate::linalg::{diag_part, max_abs, minus_ones_diag, quad_form, scale_columns};
use crate::passage::{kemeny_snell_core, mean_passage_lengths};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-6;

fn edge_check(g: &WeightedMarkovGraph, l: usize, k: usize) -> Result<f64> {
    if g.has_edge(l, k) {
        Ok(g.p()[(l, k)])
    } else {
        Err(WmgError::NotAnEdge(l, k))
    }
}

/// `n = (π(1)Ū(1), …, π(n)Ū(n))`.
fn occupancy_weights(a: &ChainAnalysis) -> DVector<f64> {
    a.pi.component_mul(&a.ubar)
}

/// `∂π_W / ∂W(l,k) = π(l) P(l,k) / Y² · (Y e_l - n)`.
pub fn d_pi_w_dw(a: &ChainAnalysis, g: &WeightedMarkovGraph, l: usize, k: usize) -> Result<DVector<f64>> {
    let plk = edge_check(g, l, k)?;
    let scale = a.pi[l] * plk / (a.y * a.y);
    let mut d = -occupancy_weights(a);
    d[l] += a.y;
    Ok(d * scale)
}

/// `∂M / ∂W(l,k) = P(l,k) [Z e_l 1ᵀ - 1 1ᵀ [Z e_l 1ᵀ]_dg + π(l) L]`.
pub fn d_m_dw(a: &ChainAnalysis, g: &WeightedMarkovGraph, l: usize, k: usize) -> Result<DMatrix<f64>> {
    let plk = edge_check(g, l, k)?;
    let n = a.n();
    let l_mat = mean_passage_lengths(a);
    Ok(DMatrix::from_fn(n, n, |i, j| plk * (a.z[(i, l)] - a.z[(j, l)] + a.pi[l] * l_mat[(i, j)])))
}

/// Derivative of the second-moment matrix with respect to `W(l,k)`.
///
/// `dm` must be [`d_m_dw`] at the same edge.
pub fn d_m2_dw(
    a: &ChainAnalysis,
    g: &WeightedMarkovGraph,
    m: &DMatrix<f64>,
    dm: &DMatrix<f64>,
    l: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    let plk = edge_check(g, l, k)?;
    let s = g.second_moment_slope(l, k)?;
    let n = a.n();
    let r = m - diag_part(m);
    let dr = dm - diag_part(dm);
    let pw = g.p().component_mul(g.w());

    let t1 = DMatrix::from_fn(n, n, |i, j| s * plk * (a.z[(i, l)] - a.z[(j, l)]));
    let t2 = DMatrix::from_fn(n, n, |i, j| 2.0 * plk * (a.z[(i, l)] - a.z[(j, l)]) * r[(k, j)]);
    let t3 = minus_ones_diag(&(&a.z * &pw * &dr)) * 2.0;
    let cross = (a.pi.transpose() * &pw * &dr).transpose();
    let dd2 = DVector::from_fn(n, |i, _| {
        (a.pi[l] * s * plk + 2.0 * a.pi[l] * plk * r[(k, i)] + 2.0 * cross[i]) / a.pi[i]
    });
    let t4 = scale_columns(&kemeny_snell_core(&a.z), &dd2);
    Ok(t1 + t2 + t3 + t4)
}

/// `∂V = ∂M2 - 2 M ∘ ∂M`.
pub fn d_v_dw(m: &DMatrix<f64>, dm: &DMatrix<f64>, dm2: &DMatrix<f64>) -> DMatrix<f64> {
    dm2 - m.component_mul(dm) * 2.0
}

/// `∂K / ∂W(l,k) = tr(Z) π(l) P(l,k)` for every entry; zero off the support.
pub fn d_k_dw(a: &ChainAnalysis, g: &WeightedMarkovGraph) -> DMatrix<f64> {
    let t = a.trace_z();
    let n = a.n();
    DMatrix::from_fn(n, n, |l, k| t * a.pi[l] * g.p()[(l, k)])
}

/// `∂K_W / ∂W(l,k)`: the two `π_W` shift terms plus `π_W ∂M π_Wᵀ`.
pub fn d_kw_dw(
    a: &ChainAnalysis,
    g: &WeightedMarkovGraph,
    m: &DMatrix<f64>,
    dm: &DMatrix<f64>,
    l: usize,
    k: usize,
) -> Result<f64> {
    let dpw = d_pi_w_dw(a, g, l, k)?;
    Ok(quad_form(&dpw, m, &a.pi_w) + quad_form(&a.pi_w, m, &dpw) + quad_form(&a.pi_w, dm, &a.pi_w))
}

/// `∂(π V πᵀ) / ∂W(l,k)`.
pub fn d_v_scalar_dw(a: &ChainAnalysis, dv: &DMatrix<f64>) -> f64 {
    quad_form(&a.pi, dv, &a.pi)
}

/// `∂(π_W V π_Wᵀ) / ∂W(l,k)` by the product rule.
pub fn d_vw_scalar_dw(a: &ChainAnalysis, v: &DMatrix<f64>, dv: &DMatrix<f64>, dpw: &DVector<f64>) -> f64 {
    quad_form(dpw, v, &a.pi_w) + quad_form(&a.pi_w, v, dpw) + quad_form(&a.pi_w, dv, &a.pi_w)
}

/// All `W(l,k)` partials of one edge.
#[derive(Debug, Clone)]
pub struct EdgePartials {
    pub edge: (usize, usize),
    pub pi_w: DVector<f64>,
    pub m: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub k: f64,
    pub k_w: f64,
    pub v_scalar: f64,
    pub v_w_scalar: f64,
}

impl EdgePartials {
    /// `∂S / ∂W(l,k)` for `S = √V_W / K_W`.
    pub fn surprise(&self, e: &Evaluation) -> f64 {
        let (kw, vw) = (e.summary.k_w, e.summary.v_w.max(0.0));
        if vw == 0.0 {
            return 0.0;
        }
        let sd = vw.sqrt();
        self.v_w_scalar / (2.0 * sd * kw) - sd * self.k_w / (kw * kw)
    }
}

pub fn edge_partials(e: &Evaluation, g: &WeightedMarkovGraph, l: usize, k: usize) -> Result<EdgePartials> {
    let a = &e.analysis;
    let m = &e.moments.m;
    let pi_w = d_pi_w_dw(a, g, l, k)?;
    let dm = d_m_dw(a, g, l, k)?;
    let dm2 = d_m2_dw(a, g, m, &dm, l, k)?;
    let dv = d_v_dw(m, &dm, &dm2);
    let k_w = d_kw_dw(a, g, m, &dm, l, k)?;
    let k_grad = a.trace_z() * a.pi[l] * g.p()[(l, k)];
    let v_scalar = d_v_scalar_dw(a, &dv);
    let v_w_scalar = d_vw_scalar_dw(a, &e.moments.v, &dv, &pi_w);
    Ok(EdgePartials { edge: (l, k), pi_w, m: dm, m2: dm2, v: dv, k: k_grad, k_w, v_scalar, v_w_scalar })
}

/// Gradients of the scalar summaries over the edge list, in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGradients {
    pub k: Vec<f64>,
    pub k_w: Vec<f64>,
    pub v: Vec<f64>,
    pub v_w: Vec<f64>,
    pub s: Vec<f64>,
}

pub fn scalar_gradients_w(e: &Evaluation, g: &WeightedMarkovGraph) -> Result<ScalarGradients> {
    let mut out = ScalarGradients { k: vec![], k_w: vec![], v: vec![], v_w: vec![], s: vec![] };
    for &(l, k) in g.edges() {
        let p = edge_partials(e, g, l, k)?;
        out.k.push(p.k);
        out.k_w.push(p.k_w);
        out.v.push(p.v_scalar);
        out.v_w.push(p.v_w_scalar);
        out.s.push(p.surprise(e));
    }
    Ok(out)
}

/// `∂(π V πᵀ) / ∂W` over the edge list without forming the matrix partials.
///
/// Uses `π Z = π` and `π (I - Z + 1 1ᵀ [Z]_dg) = [Z]_dgᵀ` to reduce every
/// quadratic form to `O(n²)` work per edge.
pub fn variance_scalar_gradient(e: &Evaluation, g: &WeightedMarkovGraph) -> Result<DVector<f64>> {
    let a = &e.analysis;
    let n = a.n();
    let m = &e.moments.m;
    let pi = &a.pi;
    let r = m - diag_part(m);
    let pw = g.p().component_mul(g.w());
    let q = &a.z * &pw;
    let l_mat = mean_passage_lengths(a);
    let r_pi = &r * pi;
    let mut out = DVector::zeros(g.edge_count());
    let mut dm = DMatrix::zeros(n, n);
    for (idx, &(l, k)) in g.edges().iter().enumerate() {
        let plk = g.p()[(l, k)];
        let s = g.second_moment_slope(l, k)?;
        for j in 0..n {
            for i in 0..n {
                dm[(i, j)] = plk * (a.z[(i, l)] - a.z[(j, l)] + pi[l] * l_mat[(i, j)]);
            }
        }
        let mut dr = dm.clone();
        dr.fill_diagonal(0.0);
        // π (M ∘ dM) πᵀ
        let mut m_dm = 0.0;
        for j in 0..n {
            for i in 0..n {
                m_dm += pi[i] * m[(i, j)] * dm[(i, j)] * pi[j];
            }
        }
        // π t2 πᵀ
        let zr: f64 = (0..n).map(|j| pi[j] * a.z[(j, l)] * r[(k, j)]).sum();
        let t2 = 2.0 * plk * (pi[l] * r_pi[k] - zr);
        // π t3 πᵀ
        let pwdr = pi.transpose() * &pw * &dr;
        let mut qdr_diag = 0.0;
        for j in 0..n {
            let mut acc = 0.0;
            for mm in 0..n {
                acc += q[(j, mm)] * dr[(mm, j)];
            }
            qdr_diag += pi[j] * acc;
        }
        let t3 = 2.0 * ((&pwdr * pi)[(0, 0)] - qdr_diag);
        // π t4 πᵀ
        let t4: f64 = (0..n)
            .map(|j| a.z[(j, j)] * (pi[l] * s * plk + 2.0 * pi[l] * plk * r[(k, j)] + 2.0 * pwdr[(0, j)]))
            .sum();
        out[idx] = t2 + t3 + t4 - 2.0 * m_dm;
    }
    Ok(out)
}

fn check_direction(g: &WeightedMarkovGraph, dp: &DMatrix<f64>) -> Result<()> {
    let n = g.n();
    if dp.shape() != (n, n) {
        return Err(WmgError::Dimension(format!("dP is {:?}, expected ({n}, {n})", dp.shape())));
    }
    for i in 0..n {
        let mut sum = 0.0;
        let mut scale = 0.0_f64;
        for j in 0..n {
            let v = dp[(i, j)];
            if v != 0.0 && !g.has_edge(i, j) {
                return Err(WmgError::InvalidArgument(format!("dP is nonzero off the support at ({i}, {j})")));
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if sum.abs() > 1e-12 * scale.max(1.0) {
            return Err(WmgError::InvalidArgument(format!("row {i} of dP sums to {sum}")));
        }
    }
    Ok(())
}

/// `e_l (e_k - P(l,·))`: raise `P(l,k)` and renormalise row `l`.
pub fn edge_direction(g: &WeightedMarkovGraph, l: usize, k: usize) -> Result<DMatrix<f64>> {
    edge_check(g, l, k)?;
    let n = g.n();
    let mut dp = DMatrix::zeros(n, n);
    for j in g.successors(l) {
        dp[(l, j)] = -g.p()[(l, j)];
    }
    dp[(l, k)] += 1.0;
    Ok(dp)
}

/// `dπ = π dP Z`.
pub fn d_pi_dp(a: &ChainAnalysis, dp: &DMatrix<f64>) -> DVector<f64> {
    (a.pi.transpose() * dp * &a.z).transpose()
}

/// `dZ = Z (dP - 1 dπ) Z`.
pub fn d_z_dp(a: &ChainAnalysis, dp: &DMatrix<f64>, dpi: &DVector<f64>) -> DMatrix<f64> {
    let n = a.n();
    let shift = DMatrix::from_fn(n, n, |_, j| dpi[j]);
    &a.z * (dp - shift) * &a.z
}

/// Directional derivative of `M` along a feasible `dP`, `W` held fixed.
///
/// Writes `M(i,j) = u(i) - u(j) + C L(i,j)` with `u = Z Ū`, `C = π Ū` and
/// applies the product rule, including `dΞ⁻¹ = -Ξ⁻¹ dg(dπ) Ξ⁻¹`.
pub fn d_m_dp(a: &ChainAnalysis, g: &WeightedMarkovGraph, dp: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_direction(g, dp)?;
    let n = a.n();
    let ones = DVector::from_element(n, 1.0);
    let dpi = d_pi_dp(a, dp);
    let dz = d_z_dp(a, dp, &dpi);
    let dubar = dp.component_mul(g.w()) * &ones;
    let du = &dz * &a.ubar + &a.z * &dubar;
    let dc = dpi.dot(&a.ubar) + a.pi.dot(&dubar);
    let b = kemeny_snell_core(&a.z);
    let inv_pi = a.pi.map(|v| 1.0 / v);
    let l_mat = scale_columns(&b, &inv_pi);
    let db = DMatrix::from_fn(n, n, |i, j| -dz[(i, j)] + dz[(j, j)]);
    let dl = scale_columns(&db, &inv_pi) - scale_columns(&b, &DVector::from_fn(n, |j, _| dpi[j] * inv_pi[j] * inv_pi[j]));
    Ok(DMatrix::from_fn(n, n, |i, j| du[i] - du[j] + dc * l_mat[(i, j)] + a.y * dl[(i, j)]))
}

/// Quantity checked by [`fd_verify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Quantity {
    #[serde(rename = "pi_w")]
    PiW,
    M,
    M2,
    V,
    K,
    #[serde(rename = "K_W")]
    KW,
    #[serde(rename = "V_scalar")]
    VScalar,
    #[serde(rename = "V_W_scalar")]
    VWScalar,
    #[serde(rename = "pi")]
    Pi,
    Z,
    #[serde(rename = "M_wrt_P")]
    MWrtP,
}

impl Quantity {
    pub const WEIGHT: [Quantity; 8] = [
        Quantity::PiW,
        Quantity::M,
        Quantity::M2,
        Quantity::V,
        Quantity::K,
        Quantity::KW,
        Quantity::VScalar,
        Quantity::VWScalar,
    ];
    pub const TRANSITION: [Quantity; 3] = [Quantity::Pi, Quantity::Z, Quantity::MWrtP];

    pub fn name(&self) -> &'static str {
        match self {
            Self::PiW => "pi_w",
            Self::M => "M",
            Self::M2 => "M2",
            Self::V => "V",
            Self::K => "K",
            Self::KW => "K_W",
            Self::VScalar => "V_scalar",
            Self::VWScalar => "V_W_scalar",
            Self::Pi => "pi",
            Self::Z => "Z",
            Self::MWrtP => "M_wrt_P",
        }
    }

    fn is_transition(&self) -> bool {
        Self::TRANSITION.contains(self)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameter being perturbed.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// Unit change in `W(l,k)`.
    Weight(usize, usize),
    /// Feasible change `dP`, labelled by the edge it was built from if any.
    Transition { dp: DMatrix<f64>, label: Option<(usize, usize)> },
}

impl Direction {
    pub fn edge(g: &WeightedMarkovGraph, l: usize, k: usize) -> Result<Self> {
        Ok(Self::Transition { dp: edge_direction(g, l, k)?, label: Some((l, k)) })
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Weight(l, k) => write!(f, "W({l},{k})"),
            Self::Transition { label: Some((l, k)), .. } => write!(f, "P({l},{k})"),
            Self::Transition { label: None, .. } => f.write_str("P(dir)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GradValue {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl GradValue {
    fn max_abs(&self) -> f64 {
        match self {
            Self::Scalar(v) => v.abs(),
            Self::Vector(v) => v.amax(),
            Self::Matrix(m) => max_abs(m),
        }
    }

    fn max_abs_diff(&self, other: &GradValue) -> f64 {
        match (self, other) {
            (Self::Scalar(a), Self::Scalar(b)) => (a - b).abs(),
            (Self::Vector(a), Self::Vector(b)) => (a - b).amax(),
            (Self::Matrix(a), Self::Matrix(b)) => max_abs(&(a - b)),
            _ => f64::INFINITY,
        }
    }

    fn scaled(&self, factor: f64) -> GradValue {
        match self {
            Self::Scalar(a) => Self::Scalar(a * factor),
            Self::Vector(a) => Self::Vector(a * factor),
            Self::Matrix(a) => Self::Matrix(a * factor),
        }
    }

    fn axpy(&self, other: &GradValue, scale: f64) -> GradValue {
        match (self, other) {
            (Self::Scalar(a), Self::Scalar(b)) => Self::Scalar((a - b) * scale),
            (Self::Vector(a), Self::Vector(b)) => Self::Vector((a - b) * scale),
            (Self::Matrix(a), Self::Matrix(b)) => Self::Matrix((a - b) * scale),
            _ => unreachable!("mismatched quantity shapes"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    pub quantity: Quantity,
    pub wrt: Direction,
    pub analytic: GradValue,
    pub fd: GradValue,
    /// `‖analytic - fd‖∞ / (1 + ‖fd‖∞)`.
    pub rel_err: f64,
    /// Effective step actually taken.
    pub h: f64,
}

impl GradientReport {
    /// The same comparison with the analytic value multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> GradientReport {
        let analytic = self.analytic.scaled(factor);
        let rel_err = analytic.max_abs_diff(&self.fd) / (1.0 + self.fd.max_abs());
        GradientReport { analytic, rel_err, ..self.clone() }
    }
}

fn value_of(q: Quantity, e: &Evaluation) -> GradValue {
    match q {
        Quantity::PiW => GradValue::Vector(e.analysis.pi_w.clone()),
        Quantity::M | Quantity::MWrtP => GradValue::Matrix(e.moments.m.clone()),
        Quantity::M2 => GradValue::Matrix(e.moments.m2.clone()),
        Quantity::V => GradValue::Matrix(e.moments.v.clone()),
        Quantity::K => GradValue::Scalar(e.summary.k),
        Quantity::KW => GradValue::Scalar(e.summary.k_w),
        Quantity::VScalar => GradValue::Scalar(e.summary.v),
        Quantity::VWScalar => GradValue::Scalar(e.summary.v_w),
        Quantity::Pi => GradValue::Vector(e.analysis.pi.clone()),
        Quantity::Z => GradValue::Matrix(e.analysis.z.clone()),
    }
}

fn analytic(q: Quantity, e: &Evaluation, g: &WeightedMarkovGraph, dir: &Direction) -> Result<GradValue> {
    let a = &e.analysis;
    match dir {
        Direction::Weight(l, k) => {
            let p = edge_partials(e, g, *l, *k)?;
            Ok(match q {
                Quantity::PiW => GradValue::Vector(p.pi_w),
                Quantity::M => GradValue::Matrix(p.m),
                Quantity::M2 => GradValue::Matrix(p.m2),
                Quantity::V => GradValue::Matrix(p.v),
                Quantity::K => GradValue::Scalar(p.k),
                Quantity::KW => GradValue::Scalar(p.k_w),
                Quantity::VScalar => GradValue::Scalar(p.v_scalar),
                Quantity::VWScalar => GradValue::Scalar(p.v_w_scalar),
                _ => unreachable!(),
            })
        }
        Direction::Transition { dp, .. } => {
            check_direction(g, dp)?;
            let dpi = d_pi_dp(a, dp);
            Ok(match q {
                Quantity::Pi => GradValue::Vector(dpi),
                Quantity::Z => GradValue::Matrix(d_z_dp(a, dp, &dpi)),
                Quantity::MWrtP => GradValue::Matrix(d_m_dp(a, g, dp)?),
                _ => unreachable!(),
            })
        }
    }
}

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `Σ π(i) P(i,j) W(i,j)` carried in double-double.
fn mean_step_weight_dd(pi: &DVector<f64>, g: &WeightedMarkovGraph) -> (f64, f64) {
    let (mut hi, mut lo) = (0.0, 0.0);
    for &(i, j) in g.edges() {
        let pp = pi[i] * g.p()[(i, j)];
        let pp_err = pi[i].mul_add(g.p()[(i, j)], -pp);
        let w = g.w()[(i, j)];
        let t = pp * w;
        let t_err = pp.mul_add(w, -t) + pp_err * w;
        let (s, e) = two_sum(hi, t);
        hi = s;
        lo += e + t_err;
    }
    two_sum(hi, lo)
}

/// Central finite difference of `q` along `dir` compared against the analytic
/// derivative.
///
/// Weight steps are scaled to `h (1 + |W(l,k)|)` and the divisor is the step
/// actually representable in floating point. `K` is linear in `W`, so its
/// difference is taken on `tr(Z) · π(P∘W)1` in double-double arithmetic.
pub fn fd_verify(q: Quantity, g: &WeightedMarkovGraph, dir: &Direction, h: f64) -> Result<GradientReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(WmgError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let is_p = matches!(dir, Direction::Transition { .. });
    if is_p != q.is_transition() {
        return Err(WmgError::InvalidArgument(format!("{q} is not checked along {dir}")));
    }
    let base = evaluate(g)?;
    let exact = analytic(q, &base, g, dir)?;
    let (fd, step) = match dir {
        Direction::Weight(l, k) => {
            let (l, k) = (*l, *k);
            edge_check(g, l, k)?;
            let x = g.w()[(l, k)];
            let step = h * (1.0 + x.abs());
            let (xp, xm) = (x + step, x - step);
            let width = xp - xm;
            let mut wp = g.w().clone();
            wp[(l, k)] = xp;
            let mut wm = g.w().clone();
            wm[(l, k)] = xm;
            let (gp, gm) = (g.with_weights(&wp), g.with_weights(&wm));
            let fd = if q == Quantity::K {
                let (php, plo) = mean_step_weight_dd(&base.analysis.pi, &gp);
                let (mhi, mlo) = mean_step_weight_dd(&base.analysis.pi, &gm);
                let diff = (php - mhi) + (plo - mlo);
                GradValue::Scalar(base.analysis.trace_z() * diff / width)
            } else {
                value_of(q, &evaluate(&gp)?).axpy(&value_of(q, &evaluate(&gm)?), 1.0 / width)
            };
            (fd, width / 2.0)
        }
        Direction::Transition { dp, .. } => {
            let pp = g.p() + dp * h;
            let pm = g.p() - dp * h;
            let at = |p: &DMatrix<f64>| -> Result<GradValue> {
                let gg = g.with_transition(p);
                Ok(match q {
                    Quantity::Pi => GradValue::Vector(analyze_chain(&gg)?.pi),
                    Quantity::Z => GradValue::Matrix(analyze_chain(&gg)?.z),
                    _ => value_of(q, &evaluate(&gg)?),
                })
            };
            (at(&pp)?.axpy(&at(&pm)?, 1.0 / (2.0 * h)), h)
        }
    };
    let rel_err = exact.max_abs_diff(&fd) / (1.0 + fd.max_abs());
    Ok(GradientReport { quantity: q, wrt: dir.clone(), analytic: exact, fd, rel_err, h: step })
}

/// Checks every weight quantity on every edge and every transition quantity
/// along every edge direction whose row has more than one edge.
pub fn fd_verify_all(g: &WeightedMarkovGraph, h: f64) -> Result<Vec<GradientReport>> {
    use rayon::prelude::*;
    let mut jobs = Vec::new();
    for &(l, k) in g.edges() {
        for q in Quantity::WEIGHT {
            jobs.push((q, Direction::Weight(l, k)));
        }
    }
    for &(l, k) in g.edges() {
        if g.out_degree(l) > 1 {
            for q in Quantity::TRANSITION {
                jobs.push((q, Direction::edge(g, l, k)?));
            }
        }
    }
    jobs.par_iter().map(|(q, d)| fd_verify(*q, g, d, h)).collect()
}
