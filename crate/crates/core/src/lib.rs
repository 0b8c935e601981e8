//! Computability over Baire space: lazy streams, names of continuous
//! functionals, recursion-theoretic transformers, and operators on problems.

pub mod cli;
pub mod machine;
pub mod operators;
pub mod problems;
pub mod reductions;
pub mod streams;
pub mod transform;
