//! Causal graphs, linear structural equations fitted by least squares, and
//! the causal and combined distances.

mod graph;
mod scm;

pub use graph::{validate_dag, CausalGraph};
pub use scm::{
    fit_structural_model, fit_structural_model_with, FitOptions, StructuralEquation, StructuralModel, RIDGE_LAMBDA,
};
