//! Censoring-aware piecewise-constant risk stratification.
//!
//! The crate fits partition models (unions of axis-aligned boxes with one
//! predicted value per region) to right-censored survival data. Censoring is
//! handled through inverse probability of censoring weights, either inside an
//! L2 loss on log survival time or inside the censoring-adjusted Brier score.
//! Models are searched with deletion, substitution and addition moves
//! ([`dsa`]), compared against a greedy binary tree ([`cart`]), selected by
//! v-fold cross-validation ([`selection`]) and scored with the test-set
//! metrics in [`evaluation`]. [`simulation`] drives replicated simulation
//! studies end to end.

pub mod cart;
pub mod data;
pub mod dsa;
pub mod error;
pub mod evaluation;
pub mod loss;
pub mod partition;
pub mod selection;
pub mod simulation;
pub mod survival;

pub use error::{Error, Result};
