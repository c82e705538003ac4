//! Prototype-guided, causality-preserving counterfactual explanations for
//! binary tabular classifiers.

pub mod causal;
pub mod data;
pub mod engine;
pub mod eval;
mod error;
pub mod models;
pub mod moo;
pub mod nn;
pub mod objectives;

pub use error::{Error, Result};
