//! Tree-guided aggregation of rare count features.
//!
//! The estimator solves
//!
//! ```text
//! min_{beta, gamma}  1/(2n) ||y - X beta||^2 + lambda (alpha ||gamma_{-r}||_1 + (1 - alpha) ||beta||_1)
//! subject to beta = A gamma
//! ```
//!
//! where `A` encodes root-to-leaf paths of a tree over the features. Zeroing
//! `gamma` below a node forces equal coefficients on its leaves, which is the
//! same as summing those features into one.

pub mod error;
pub mod admm;
pub mod baselines;
pub mod experiments;
pub mod linop;
pub mod selection;
pub mod tree;

pub use error::{Error, Result};
pub use linop::{CountDesign, CscMatrix};
pub use tree::{AggregatingSet, AggregationMatrix, FeatureTree};
