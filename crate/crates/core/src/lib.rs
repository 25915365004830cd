//! Indexed cost labels for a small imperative language.
//!
//! The pipeline labels a program, optionally peels and unrolls its loops
//! while reindexing the labels, lowers it to a flat VM, computes a static
//! cost per indexed label, and folds those costs back into dependent cost
//! expressions that instrument the original source.

pub mod cost;
pub mod dependent;
pub mod error;
pub mod gen;
pub mod harness;
pub mod instrument;
pub mod label;
pub mod semantics;
pub mod syntax;
pub mod transform;
pub mod vm;

pub use error::{Error, Result};
