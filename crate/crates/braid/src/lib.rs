//! Expandable multi-modal embedding alignment.
//!
//! `braid` aligns any number of modality towers into one shared embedding
//! space by running a sequence of *binary* contrastive phases: an initial
//! phase aligns two fresh modalities, and every later *growth* phase merges
//! one new branch modality into the trunk through a junction modality that
//! shares a paired dataset with it. A single prototype network, shared by
//! all towers, carries the cross-modality knowledge; EMA shadowing plus
//! output distillation protect it while it absorbs each new modality, and
//! the two directions of every contrastive loss are balanced by inverse
//! gradient-norm weights.
//!
//! The crate is desk-scale and fully deterministic: frozen encoders are
//! seeded stand-ins, data comes from a synthetic latent activity process,
//! and everything trains in seconds on a CPU. See the `book/` guide for a
//! chapter-by-chapter tour; every code block in the book compiles and runs
//! as a doctest of this crate.

pub mod autodiff;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod eval;
pub mod growth;
pub mod hash;
pub mod model;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book;
