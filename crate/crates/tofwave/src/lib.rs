//! Numerical lab for traveling oscillating fronts of the quintic complex
//! Ginzburg-Landau equation: profile computation, spectral diagnostics,
//! time evolution with weighted-norm tracking, and convolution-kernel checks.

pub mod gridw;
pub mod report;
pub mod linalg;
pub mod cli;
pub mod config;
pub mod evolution;
pub mod model;
pub mod profile;
pub mod spectral;
pub mod verify;
