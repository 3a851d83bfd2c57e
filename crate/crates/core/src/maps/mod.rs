//! Concrete members of the constrained function classes (conformal, OCT,
//! volume preserving, coordinate-wise) and tolerance-based classifiers for
//! the corresponding Jacobian constraints.

mod basic;
mod classify;
mod coordwise;
mod moebius;
mod polar;

pub use basic::{compose, Composed, ConcatConformal2D, IdentityMap, LinearMap};
pub use classify::{
    classify_conformal, classify_oct, classify_volume_preserving, default_test_points, interior_points,
    conformal_residual, oct_residual, ClassReport, MapClass, Offender,
};
pub use coordwise::{Affine1D, CoordwiseReparam, CubicShear1D, Monotone1D, SignedPermutation, Sinh1D};
pub use moebius::{MoebiusMap, DEFAULT_R_MIN};
pub use polar::{PolarMap, DEFAULT_ANGULAR_MARGIN};
