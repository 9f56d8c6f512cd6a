//! The chapters of `book/src`, compiled so that `cargo test` runs every
//! snippet in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/contribution.md")]
pub mod contribution {}

#[doc = include_str!("../../../book/src/similarity.md")]
pub mod similarity {}

#[doc = include_str!("../../../book/src/slicing.md")]
pub mod slicing {}

#[doc = include_str!("../../../book/src/maintenance.md")]
pub mod maintenance {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
