//! Bridging MCMC for ancestral recombination graphs under the sequentially
//! Markov coalescent.

pub mod bridge;
pub mod chain;
pub mod colour;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod init;
pub mod newick;
pub mod oracles;
pub mod output;
pub mod smc;
pub mod state;
pub mod suites;
pub mod tree;

pub use error::{Error, Result};
