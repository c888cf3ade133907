//! Numerical laboratory for pinched mean curvature flow in higher codimension.
//!
//! The crate is organised bottom-up: [`tensor`] and [`jet`] hold the pointwise
//! algebra, [`inequality`] samples it, [`immersion`] and [`flow`] work on
//! periodic grids, and [`symmetric`] integrates the product-sphere ODE.

pub mod constants;
pub mod error;
pub mod flow;
pub mod format;
pub mod inequality;
pub mod immersion;
pub mod jet;
pub mod symmetric;
pub mod tensor;

pub use constants::{make_constants, PinchingConstants};
pub use error::{PinchError, Result};
pub use jet::{derive_gradient_quantities, CurvatureJet, GradientTerms};
pub use tensor::{decompose_curvature, pinching_f, reaction_terms, CurvaturePoint, DecomposedCurvature, ReactionTerms};
