//! The book under `book/src` rendered as doc comments, one module per
//! chapter, so `cargo test --doc` runs every listing against the current
//! library. mdbook cannot resolve workspace dependencies on its own.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/probes.md")]
pub mod probes {}
#[doc = include_str!("../../../book/src/detectors.md")]
pub mod detectors {}
#[doc = include_str!("../../../book/src/gradient-descent.md")]
pub mod gradient_descent {}
#[doc = include_str!("../../../book/src/baseline.md")]
pub mod baseline {}
#[doc = include_str!("../../../book/src/fidelity.md")]
pub mod fidelity {}
#[doc = include_str!("../../../book/src/stiefel.md")]
pub mod stiefel {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
