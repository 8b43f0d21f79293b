//! Block indexing for the PLS blockchain: NULL-aware Merkle trees with
//! compact proofs, analytic path-weight statistics, Tunstall bitmap
//! compression, a shuffle-shift ID pre-randomiser, the block root-of-trust
//! codec, and the end-to-end lookup / proof-of-absence flows against a
//! simulated content-addressable store.

mod bits;

pub mod blockstore;
pub mod error;
pub mod pathstats;
pub mod plschain;
pub mod rootoftrust;
pub mod shuffleshift;
pub mod smt;
pub mod tunstall;

pub use error::Error;
