//! Convection-diffusion finite elements with Shishkin mesh simulation (SMS)
//! stabilization, Galerkin and SUPG baselines, and the supporting mesh and
//! wind-geometry machinery.

pub mod fem;
pub mod fem1d;
pub mod layers;
pub mod mesh;
pub mod metrics;
pub mod one_dim_analysis;
pub mod problems;
pub mod solvers;
pub mod sparse_linalg;
pub mod wind_geometry;
