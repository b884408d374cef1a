//! Empirical Rademacher and Gaussian complexities of vector-valued function
//! classes `f = (f_1, …, f_T)`, evaluated on a sample through an index map
//! that assigns each output component its own subset of examples.
//!
//! The linear classes (mixed `(2,p)` norms, trace norm) have exact per-draw
//! suprema; the composite class `V ∘ φ ∘ W` is estimated by projected ascent.
//! [`bounds`] evaluates the matching closed-form bounds and [`verifiers`]
//! checks the inequalities they rest on.

mod error;

pub mod bounds;
pub mod classes;
pub mod cli;
pub mod datagen;
pub mod estimators;
pub mod index_map;
pub mod numerics;
pub mod rng;
pub mod verifiers;

pub use error::{Error, Result};
