//! Differentiable synthesis of machining programs.
//!
//! The crate models a workpiece as an implicit field, carves it with milling
//! and drilling operations, and fits the continuous parameters of a fixed
//! number of operations to a target shape by gradient descent.

pub mod error;
pub mod expr;
pub mod field;
pub mod fixtures;
pub mod mesh;
pub mod metrics;
pub mod objective;
pub mod ops;
pub mod program;
pub mod score;
pub mod spatial;
pub mod synth;
pub mod tape;
pub mod voxel;

pub use error::{Error, Result};
