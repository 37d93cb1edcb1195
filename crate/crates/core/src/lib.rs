//! Multigraph signal processing: shift operators, diffusion trees,
//! multigraph filters, multigraph Fourier analysis and multigraph neural
//! networks.

pub mod error;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod multigraph;
pub mod nn;
pub mod sampling;
pub mod spectral;
pub mod tree;

pub use error::{MspError, Result};
pub use linalg::{Matrix, Vector};
pub use multigraph::{MultiFeatureSignal, Multigraph, MultigraphSignal, OperatorKind, Permutation, ShiftOperator};
pub use tree::{DiffusionTree, PrunedPairSet, Word, WordSet};
