//! The guide's chapters, one module each, so `cargo test` runs every listing
//! in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}
#[doc = include_str!("../../../book/src/classical.md")]
pub mod classical {}
#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}
#[doc = include_str!("../../../book/src/ridge_state.md")]
pub mod ridge_state {}
#[doc = include_str!("../../../book/src/cross_validation.md")]
pub mod cross_validation {}
#[doc = include_str!("../../../book/src/hamiltonian_simulation.md")]
pub mod hamiltonian_simulation {}
#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
