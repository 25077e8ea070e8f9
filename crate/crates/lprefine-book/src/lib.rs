//! The guide under `book/`, compiled so that its snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/problem.md")]
pub mod problem {}
#[doc = include_str!("../../../book/src/refinement.md")]
pub mod refinement {}
#[doc = include_str!("../../../book/src/mwu.md")]
pub mod mwu {}
#[doc = include_str!("../../../book/src/irls.md")]
pub mod irls {}
#[doc = include_str!("../../../book/src/maintenance.md")]
pub mod maintenance {}
#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
