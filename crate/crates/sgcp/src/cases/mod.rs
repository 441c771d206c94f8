//! The benchmark scenarios: mesh construction, constraint programs,
//! recorders and their post-processing.

pub mod bicrystal_shear;
pub mod bicrystal_tension;
pub mod post;
pub mod shear_layer;
