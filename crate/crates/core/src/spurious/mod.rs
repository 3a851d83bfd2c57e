mod density;
mod fields;
mod flow;
mod radial;
mod rotation;

pub use density::{DensityField, Gaussian, GaussianMixture, UniformCube};
pub use fields::{
    build_compact_divfree, build_xij, CompactBump, DensityScaledField, ScalarField, WeightedField, XijField,
};
pub use flow::{flow_map, verify_mpt, verify_pushforward, FlowMap, MptReport};
pub use radial::{
    angular_cdf, prop1_build, prop1_reparam, prop1_rotated_family, RadialDensity, RadialProfile, ScaledQuantile,
    TabulatedCdf, TABLE_SIZE, TAIL_MASS,
};
pub use rotation::{
    radius_rotation_map, smooth_bump, smooth_bump_derivative, RadiusRotationGenerator, RadiusRotationMap,
    RadiusRotationProfile,
};
