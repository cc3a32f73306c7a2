//! Neural surrogates for 3D elliptic interface problems, trained on
//! Jacobi-scaled finite-volume residuals evaluated on implicit cells around
//! collocation points.

pub mod cli;
pub mod discretization;
pub mod geometry;
pub mod model;
pub mod problems;
pub mod trainer;
