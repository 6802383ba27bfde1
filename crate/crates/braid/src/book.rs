//! Keeps the guide honest: every fenced Rust block in `book/src/*.md` is
//! compiled and run by `cargo test --doc` as a doctest of this crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff_chapter {}
#[doc = include_str!("../../../book/src/towers.md")]
pub mod towers_chapter {}
#[doc = include_str!("../../../book/src/contrastive.md")]
pub mod contrastive_chapter {}
#[doc = include_str!("../../../book/src/weighting.md")]
pub mod weighting_chapter {}
#[doc = include_str!("../../../book/src/growth.md")]
pub mod growth_chapter {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data_chapter {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation_chapter {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli_chapter {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats_chapter {}
