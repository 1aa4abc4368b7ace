use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WmgError};
use crate::graph::WeightedMarkovGraph;

use super::OptimizerConfig;

/// Eigenvalues of `AᵀA` below this fraction of the largest span the null space.
const NULL_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibilityStatus {
    Feasible,
    /// Best residual reached by the phase-1 search.
    Infeasible { residual: f64 },
}

/// How the feasible point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Witness {
    /// Every entry `1/n`, valid for uniform `μ` on a complete support.
    Uniform,
    /// Every row equal to `μ`, valid on a complete support when `min μ ≥ η`.
    Product,
    /// Alternating projection from the uniform-over-support start.
    Phase1,
}

/// `{P : μᵀP = μᵀ, P1 = 1, P ≥ η on the support, P = 0 off it}`.
#[derive(Debug, Clone)]
pub struct PolicyFeasibleSet {
    pub n: usize,
    pub mu: DVector<f64>,
    pub eta: f64,
    /// Free entries, sorted; coordinate `e` of a vector is `P(support[e])`.
    pub support: Vec<(usize, usize)>,
    /// Orthonormal columns spanning the directions that keep both equality
    /// constraints.
    pub nullspace_basis: DMatrix<f64>,
    /// Minimum-norm solution of the equality constraints.
    pub particular: DVector<f64>,
    pub status: FeasibilityStatus,
    pub witness: Option<Witness>,
    /// A feasible policy when `status` is feasible.
    pub feasible_point: Option<DMatrix<f64>>,
    tol: f64,
    max_sweeps: usize,
}

/// Result of [`project_to_feasible`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub p: DMatrix<f64>,
    /// Largest violation of any constraint at the returned point.
    pub residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl PolicyFeasibleSet {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }

    pub fn dimension(&self) -> usize {
        self.nullspace_basis.ncols()
    }

    pub fn to_vector(&self, p: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&(i, j)| p[(i, j)]))
    }

    pub fn to_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        for (e, &(i, j)) in self.support.iter().enumerate() {
            p[(i, j)] = x[e];
        }
        p
    }

    fn affine(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.particular;
        &self.particular + &self.nullspace_basis * (self.nullspace_basis.transpose() * d)
    }

    fn box_violation(&self, x: &DVector<f64>) -> f64 {
        x.iter().fold(0.0_f64, |m, &v| m.max(self.eta - v).max(v - 1.0))
    }

    /// Largest violation of row sums, stationarity, bounds or support.
    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            worst = worst.max((p.row(i).sum() - 1.0).abs());
        }
        let flow = p.transpose() * &self.mu - &self.mu;
        worst = worst.max(flow.amax());
        let mut on = vec![false; n * n];
        for &(i, j) in &self.support {
            on[i * n + j] = true;
            worst = worst.max(self.eta - p[(i, j)]).max(p[(i, j)] - 1.0);
        }
        for i in 0..n {
            for j in 0..n {
                if !on[i * n + j] {
                    worst = worst.max(p[(i, j)].abs());
                }
            }
        }
        worst
    }

    /// Alternating projection between the affine constraints and the box,
    /// followed by one row renormalisation.
    fn project_vector(&self, start: &DVector<f64>, tol: f64) -> Projection {
        let mut x = start.clone();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < self.max_sweeps {
            sweeps += 1;
            x = self.affine(&x);
            if self.box_violation(&x) <= 0.1 * tol {
                converged = true;
                break;
            }
            x.iter_mut().for_each(|v| *v = v.clamp(self.eta, 1.0));
        }
        x.iter_mut().for_each(|v| *v = v.clamp(self.eta, 1.0));
        let mut p = self.to_matrix(&x);
        for i in 0..self.n {
            let s = p.row(i).sum();
            if s > 0.0 {
                p.row_mut(i).scale_mut(1.0 / s);
            }
        }
        let residual = self.residual(&p);
        Projection { p, residual, sweeps, converged: converged && residual <= tol }
    }
}

/// Feasible set on the support of `graph`.
pub fn build_feasible_set(
    graph: &WeightedMarkovGraph,
    mu: &DVector<f64>,
    eta: f64,
    config: &OptimizerConfig,
) -> Result<PolicyFeasibleSet> {
    build_feasible_set_on(graph.n(), graph.edges(), mu, eta, config)
}

/// Feasible set on an explicit support.
pub fn build_feasible_set_on(
    n: usize,
    support: &[(usize, usize)],
    mu: &DVector<f64>,
    eta: f64,
    config: &OptimizerConfig,
) -> Result<PolicyFeasibleSet> {
    if mu.len() != n {
        return Err(WmgError::Dimension(format!("μ has {} entries for {n} nodes", mu.len())));
    }
    if mu.iter().any(|&v| !(v > 0.0)) || (mu.sum() - 1.0).abs() > 1e-12 {
        return Err(WmgError::InvalidArgument("μ must be positive and sum to 1".into()));
    }
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    let mut degree = vec![0usize; n];
    for &(i, j) in &support {
        if i >= n || j >= n {
            return Err(WmgError::InvalidArgument(format!("edge ({i}, {j}) out of range")));
        }
        degree[i] += 1;
    }
    let d_max = degree.iter().copied().max().unwrap_or(0);
    if degree.contains(&0) {
        return Err(WmgError::InvalidArgument("every node needs an outgoing edge".into()));
    }
    if !(eta > 0.0 && eta <= 1.0 / d_max as f64) {
        return Err(WmgError::InvalidArgument(format!("η = {eta} outside (0, 1/{d_max}]")));
    }

    let m = support.len();
    let mut a = DMatrix::zeros(2 * n, m);
    let mut b = DVector::from_element(2 * n, 1.0);
    for (e, &(i, j)) in support.iter().enumerate() {
        a[(i, e)] = 1.0;
        a[(n + j, e)] = mu[i] / mu[j];
    }
    b.rows_mut(n, n).fill(1.0);

    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let thr = NULL_THRESHOLD * lmax.max(f64::MIN_POSITIVE);
    let null_cols: Vec<usize> = (0..m).filter(|&c| eig.eigenvalues[c] <= thr).collect();
    let range_cols: Vec<usize> = (0..m).filter(|&c| eig.eigenvalues[c] > thr).collect();
    let mut basis = DMatrix::zeros(m, null_cols.len());
    for (k, &c) in null_cols.iter().enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(c));
    }
    let pinv = |r: &DVector<f64>| -> DVector<f64> {
        let atr = a.transpose() * r;
        let mut x = DVector::zeros(m);
        for &c in &range_cols {
            let v = eig.eigenvectors.column(c);
            x += v * (v.dot(&atr) / eig.eigenvalues[c]);
        }
        x
    };
    let mut particular = pinv(&b);
    let r = &b - &a * &particular;
    particular += pinv(&r);
    let eq_residual = (&b - &a * &particular).amax();

    let mut set = PolicyFeasibleSet {
        n,
        mu: mu.clone(),
        eta,
        support,
        nullspace_basis: basis,
        particular,
        status: FeasibilityStatus::Infeasible { residual: eq_residual },
        witness: None,
        feasible_point: None,
        tol: config.projection_tol,
        max_sweeps: config.max_sweeps,
    };
    if eq_residual > config.phase1_tol {
        return Ok(set);
    }

    let complete = set.support.len() == n * n;
    let uniform_mu = mu.iter().all(|&v| (v - 1.0 / n as f64).abs() <= 1e-15);
    let candidate = if complete && uniform_mu && 1.0 / n as f64 >= eta {
        Some((Witness::Uniform, DMatrix::from_element(n, n, 1.0 / n as f64)))
    } else if complete && mu.min() >= eta {
        Some((Witness::Product, DMatrix::from_fn(n, n, |_, j| mu[j])))
    } else {
        None
    };
    if let Some((w, p)) = candidate {
        if set.residual(&p) <= config.projection_tol {
            set.status = FeasibilityStatus::Feasible;
            set.witness = Some(w);
            set.feasible_point = Some(p);
            return Ok(set);
        }
    }
    let start = set.to_vector(&uniform_over_support(n, &set.support));
    let proj = set.project_vector(&start, config.projection_tol);
    if proj.residual <= config.phase1_tol {
        set.status = FeasibilityStatus::Feasible;
        set.witness = Some(Witness::Phase1);
        set.feasible_point = Some(proj.p);
    } else {
        set.status = FeasibilityStatus::Infeasible { residual: proj.residual };
    }
    Ok(set)
}

pub(crate) fn uniform_over_support(n: usize, support: &[(usize, usize)]) -> DMatrix<f64> {
    let mut deg = vec![0usize; n];
    for &(i, _) in support {
        deg[i] += 1;
    }
    let mut p = DMatrix::zeros(n, n);
    for &(i, j) in support {
        p[(i, j)] = 1.0 / deg[i] as f64;
    }
    p
}

/// Moves `p_raw` into the feasible set by alternating projections.
///
/// Entries off the support are ignored. A point that already satisfies every
/// constraint to the projection tolerance is returned unchanged.
pub fn project_to_feasible(p_raw: &DMatrix<f64>, set: &PolicyFeasibleSet) -> Result<Projection> {
    if p_raw.shape() != (set.n, set.n) {
        return Err(WmgError::Dimension(format!("P is {:?}, expected ({n}, {n})", p_raw.shape(), n = set.n)));
    }
    let r0 = set.residual(p_raw);
    if r0 <= set.tol {
        return Ok(Projection { p: p_raw.clone(), residual: r0, sweeps: 0, converged: true });
    }
    Ok(set.project_vector(&set.to_vector(p_raw), set.tol))
}
