//! Numerical laboratory for the constrained function classes of nonlinear ICA:
//! conformal and orthogonal-coordinate mixing maps, generators of spurious
//! solutions, PDE-residual checks for smooth deformations, and contrast
//! diagnostics.

pub mod contrast;
pub mod deformation;
pub mod error;
pub mod linalg;
pub mod maps;
pub mod numerics;
pub mod smooth;
pub mod spurious;

pub use error::{LabError, Result};
pub use linalg::{Matrix, Point};
pub use numerics::ToleranceProfile;
pub use smooth::{Domain, FieldRef, FnField, FnMap, MapRef, SmoothMap, Support, VectorField};
