//! Computable machinery for geodesic flows on hyperbolic cusps: the cusp
//! model and its flow, the indicial family of the model b-operator, contour
//! continuation of the model resolvent, Hadamard-regularized homogeneous
//! distributions and an escape-function constructor.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod poly;
pub mod quad;
pub mod series;
pub mod testfn;
pub mod indicial;
pub mod hadamard;
pub mod bcontinuation;
pub mod escape;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/indicial.md")]
    mod indicial {}
    #[doc = include_str!("../../../book/src/continuation.md")]
    mod continuation {}
    #[doc = include_str!("../../../book/src/hadamard.md")]
    mod hadamard {}
    #[doc = include_str!("../../../book/src/escape.md")]
    mod escape {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
