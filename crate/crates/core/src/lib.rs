//! Block subsampled randomized Hadamard transforms and the randomized
//! low-rank algorithms built on them.
//!
//! Start with [`sketch::make_operator`] to build an operator,
//! [`partition`] to apply it across simulated workers, and [`lowrank`] for
//! randomized SVD, Nyström and single-view approximations.

pub mod cli;
pub mod data;
pub mod error;
pub mod hadamard;
pub mod kernels;
pub mod lowrank;
pub mod ose;
pub mod partition;
pub mod plot;
pub mod rng;
pub mod sketch;

pub use error::{Error, Result};

// The guide's code listings run as doc-tests through these modules.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hadamard.md")]
    mod hadamard {}
    #[doc = include_str!("../../../book/src/sketching.md")]
    mod sketching {}
    #[doc = include_str!("../../../book/src/distributed.md")]
    mod distributed {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/lowrank.md")]
    mod lowrank {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
