//! Privacy-preserving network embedding toolkit.
//!
//! Perturbs an undirected graph (adding/removing links) so the closed-form
//! skip-gram embedding of the published graph leaks as little as possible
//! about a set of hidden private links, while keeping the embedding useful
//! for downstream classification and clustering.

pub mod attack;
pub mod baselines;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod netmf;
pub mod optimizer;
pub mod pipeline;
pub mod privacy;
pub mod report;
pub mod scalar;
pub mod sparse;
pub mod synth;
pub mod utility;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete f64 aliases for the common case.
pub type Embedding64 = netmf::Embedding<f64>;
pub type EigenBasis64 = utility::EigenBasis<f64>;
pub type Csr64 = sparse::CsrMatrix<f64>;
