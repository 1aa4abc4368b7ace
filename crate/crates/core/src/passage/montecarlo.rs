//! Monte Carlo estimates of weighted first-passage times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use rayon::prelude::*;

use crate::error::{Result, WmgError};
use crate::graph::{WeightModel, WeightedMarkovGraph};

/// Number of independent random streams an estimate is split across.
pub const STREAMS: u64 = 16;
/// Per-episode step cap.
pub const STEP_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    pub episodes: usize,
    pub mean: f64,
    /// Unbiased sample variance of τ(i, j).
    pub variance: f64,
    /// Sample mean of τ(i, j)².
    pub second_moment: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    pub second_moment_se: f64,
}

#[derive(Debug, Clone, Copy)]
enum Sampler {
    Fixed(f64),
    LogNormal(LogNormal<f64>),
    Gamma(Gamma<f64>),
}

impl Sampler {
    fn new(mean: f64, model: WeightModel) -> Self {
        match model {
            WeightModel::Deterministic => Self::Fixed(mean),
            WeightModel::LognormalCv { cv } => {
                let s2 = (1.0 + cv * cv).ln();
                let mu = mean.ln() - s2 / 2.0;
                Self::LogNormal(LogNormal::new(mu, s2.sqrt()).expect("finite lognormal parameters"))
            }
            WeightModel::GammaCv { cv } => {
                let shape = 1.0 / (cv * cv);
                Self::Gamma(Gamma::new(shape, mean / shape).expect("positive gamma parameters"))
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Fixed(w) => *w,
            Self::LogNormal(d) => d.sample(rng),
            Self::Gamma(d) => d.sample(rng),
        }
    }
}

struct Row {
    cumulative: Vec<f64>,
    targets: Vec<usize>,
    samplers: Vec<Sampler>,
}

impl Row {
    fn step<R: Rng>(&self, rng: &mut R) -> (usize, f64) {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.targets.len() - 1);
        (self.targets[k], self.samplers[k].draw(rng))
    }
}

fn rows(g: &WeightedMarkovGraph) -> Vec<Row> {
    let mut rows: Vec<Row> = (0..g.n())
        .map(|_| Row { cumulative: Vec::new(), targets: Vec::new(), samplers: Vec::new() })
        .collect();
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let p = g.p()[(i, j)];
        if p <= 0.0 {
            continue;
        }
        let row = &mut rows[i];
        let acc = row.cumulative.last().copied().unwrap_or(0.0);
        row.cumulative.push(acc + p);
        row.targets.push(j);
        row.samplers.push(Sampler::new(g.w()[(i, j)], g.models()[e]));
    }
    rows
}

/// Samples `episodes` walks from `from` until the first entry into `to`
/// (a return when they coincide) and summarises the accumulated weight.
///
/// Episodes are split over [`STREAMS`] ChaCha streams keyed by `seed`, so the
/// result does not depend on the thread count.
pub fn monte_carlo_passage(
    g: &WeightedMarkovGraph,
    from: usize,
    to: usize,
    episodes: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let n = g.n();
    if from >= n || to >= n {
        return Err(WmgError::InvalidArgument(format!("pair ({from}, {to}) out of range")));
    }
    if episodes == 0 {
        return Err(WmgError::InvalidArgument("episodes must be at least 1".into()));
    }
    let rows = rows(g);
    if let Some(i) = rows.iter().position(|r| r.targets.is_empty()) {
        return Err(WmgError::InvalidArgument(format!("node {i} has no outgoing transition")));
    }
    let per = episodes as u64 / STREAMS;
    let extra = episodes as u64 % STREAMS;
    let chunks: Vec<Result<Vec<f64>>> = (0..STREAMS)
        .into_par_iter()
        .map(|s| {
            let count = per + u64::from(s < extra);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let mut out = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let mut node = from;
                let mut total = 0.0;
                let mut steps = 0u64;
                loop {
                    let (next, w) = rows[node].step(&mut rng);
                    total += w;
                    steps += 1;
                    if next == to {
                        break;
                    }
                    if steps >= STEP_CAP {
                        return Err(WmgError::StepCap { from, to, cap: STEP_CAP });
                    }
                    node = next;
                }
                out.push(total);
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::with_capacity(episodes);
    for c in chunks {
        samples.extend(c?);
    }
    Ok(summarise(&samples))
}

fn summarise(x: &[f64]) -> MonteCarloEstimate {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut c2, mut c4) = (0.0, 0.0);
    for &v in x {
        let d = (v - mean) * (v - mean);
        c2 += d;
        c4 += d * d;
    }
    let m2c = c2 / n;
    let m4c = c4 / n;
    let variance = if x.len() > 1 { c2 / (n - 1.0) } else { 0.0 };
    let sq_mean = x.iter().map(|v| v * v).sum::<f64>() / n;
    let sq_var = x.iter().map(|v| (v * v - sq_mean).powi(2)).sum::<f64>() / n;
    MonteCarloEstimate {
        episodes: x.len(),
        mean,
        variance,
        second_moment: sq_mean,
        mean_se: (variance / n).sqrt(),
        variance_se: ((m4c - m2c * m2c).max(0.0) / n).sqrt(),
        second_moment_se: (sq_var / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{two_state_swap, EdgeSpec};

    #[test]
    fn deterministic_swap_is_exact() {
        let est = monte_carlo_passage(&two_state_swap(), 0, 1, 1000, 7).unwrap();
        assert_eq!(est.mean, 2.0);
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn exponential_edge() {
        let g = WeightedMarkovGraph::from_edges(
            2,
            &[
                EdgeSpec { from: 0, to: 1, p: 1.0, w_mean: 2.0, model: WeightModel::GammaCv { cv: 1.0 } },
                EdgeSpec::deterministic(1, 0, 1.0, 3.0),
            ],
        )
        .unwrap();
        let est = monte_carlo_passage(&g, 0, 1, 100_000, 11).unwrap();
        assert!((est.mean - 2.0).abs() < 3.0 * est.mean_se);
        assert!((est.variance - 4.0).abs() < 3.0 * est.variance_se);
    }

    #[test]
    fn reproducible() {
        let g = two_state_swap();
        let a = monte_carlo_passage(&g, 0, 0, 333, 5).unwrap();
        let b = monte_carlo_passage(&g, 0, 0, 333, 5).unwrap();
        assert_eq!(a, b);
    }
}
