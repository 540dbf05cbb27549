//! Benchmark problems with exact elementary flows, and the reference solver.

mod fpu;
mod reference;
mod rigid_body;

pub use fpu::{FpuEnergies, FpuParams, FpuProblem};
pub use reference::{reference_solve, ReferenceError, ReferenceOptions};
pub use rigid_body::{RigidBody, RigidBodyParams};
