//! Construction and scoring of knowledge-graph grounded, multi-hop,
//! multiple-choice visual question answering benchmarks.
//!
//! The pipeline runs in stages:
//!
//! 1. [`linker`] maps image object annotations (WordNet synsets, Wikimedia
//!    Commons URLs) onto knowledge-graph entities held in a [`kg::KgStore`].
//! 2. [`generate`] walks property paths of up to three hops out of each
//!    linked entity and renders nested questions from the [`templates`] bank;
//!    [`choices`] adds false choices.
//! 3. [`balance`] smooths per-property answer distributions and [`split`]
//!    produces a category-stratified train/test partition.
//!
//! [`eval`] scores model predictions against a generated dataset.

pub mod balance;
pub mod choices;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod generate;
pub mod kg;
pub mod linker;
pub mod pipeline;
pub mod rng;
pub mod split;
pub mod stats;
pub mod templates;

pub use error::{Error, Result};
