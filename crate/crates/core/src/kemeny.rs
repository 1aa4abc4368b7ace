//! Scalar summaries built from the passage moment matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::ChainAnalysis;
use crate::error::Result;
use crate::graph::WeightedMarkovGraph;
use crate::linalg::quad_form;
use crate::passage::{passage_moments, PassageMoments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KemenySummary {
    /// `π M πᵀ`.
    pub k: f64,
    /// `π_W M π_Wᵀ`.
    pub k_w: f64,
    /// `π V πᵀ`.
    pub v: f64,
    /// `π_W V π_Wᵀ`.
    pub v_w: f64,
    /// Surprise index `√V_W / K_W`.
    pub s: f64,
    /// Effective graph resistance from `L`.
    pub r: f64,
}

/// Quadratic forms over all ordered pairs, diagonal included.
pub fn kemeny_constants(a: &ChainAnalysis, g: &WeightedMarkovGraph, pm: &PassageMoments) -> KemenySummary {
    let k = quad_form(&a.pi, &pm.m, &a.pi);
    let k_w = quad_form(&a.pi_w, &pm.m, &a.pi_w);
    let v = quad_form(&a.pi, &pm.v, &a.pi);
    let v_w = quad_form(&a.pi_w, &pm.v, &a.pi_w);
    let trace_form = kemeny_trace_form(a);
    if (k - trace_form).abs() > 1e-9 * k.abs().max(1.0) {
        log::warn!("K = {k} disagrees with tr(Z)·Y = {trace_form}");
    }
    KemenySummary { k, k_w, v, v_w, s: surprise(k_w, v_w), r: graph_resistance(&pm.l, g.edge_count()) }
}

/// `tr(Z) · π (P∘W) 1`.
pub fn kemeny_trace_form(a: &ChainAnalysis) -> f64 {
    a.trace_z() * a.y
}

pub fn surprise_index(summary: &KemenySummary) -> f64 {
    surprise(summary.k_w, summary.v_w)
}

fn surprise(k_w: f64, v_w: f64) -> f64 {
    v_w.max(0.0).sqrt() / k_w
}

/// `(1 / 2|E|) Σ_{i<j} (L(i,j) + L(j,i))`.
pub fn graph_resistance(l: &DMatrix<f64>, edge_count: usize) -> f64 {
    let n = l.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += l[(i, j)] + l[(j, i)];
        }
    }
    total / (2.0 * edge_count as f64)
}

/// Everything derived from one graph in a single pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub analysis: ChainAnalysis,
    pub moments: PassageMoments,
    pub summary: KemenySummary,
}

pub fn evaluate(g: &WeightedMarkovGraph) -> Result<Evaluation> {
    let analysis = crate::chain::analyze_chain(g)?;
    let moments = passage_moments(&analysis, g)?;
    let summary = kemeny_constants(&analysis, g, &moments);
    Ok(Evaluation { analysis, moments, summary })
}
