//! Weighted Markovian graphs: first-passage moments, Kemeny constants,
//! their sensitivities, and policy design on top of them.

pub mod chain;
pub mod error;
pub mod gradients;
pub mod graph;
pub mod kemeny;
pub mod linalg;
pub mod optimizer;
pub mod passage;
pub mod surveillance;
pub mod traffic;

pub use chain::{analyze_chain, stationary_of, ChainAnalysis};
pub use error::{Result, WmgError};
pub use graph::{EdgeSpec, WeightModel, WeightedMarkovGraph};
pub use passage::{passage_moments, PassageMoments};
pub use kemeny::{evaluate, Evaluation, KemenySummary};
