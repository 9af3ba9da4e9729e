//! Conditioned Galton–Watson trees and additive functionals of their
//! fringe subtrees.
//!
//! Trees are stored as depth-first outdegree sequences ([`tree::Tree`]).
//! [`sampler`] draws conditioned trees exactly through the cycle lemma,
//! [`functionals`] evaluates sums of toll functions over fringe subtrees,
//! [`theory`] evaluates the asymptotic mean and variance constants, and
//! [`oracle`] and [`montecarlo`] check them by exhaustive enumeration and
//! simulation respectively.

pub mod battery;
pub mod error;
pub mod functionals;
pub mod montecarlo;
pub mod offspring;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod stats;
pub mod theory;
pub mod tree;

pub use error::{Error, Result};
pub use functionals::TollFunction;
pub use offspring::OffspringDistribution;
pub use tree::Tree;
