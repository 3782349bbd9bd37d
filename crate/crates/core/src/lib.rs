//! disclab: a numerical laboratory for stationary discs attached to quadric
//! and perturbed-quadric generic real submanifolds of C^{n+d}.
//!
//! The crate constructs lifted stationary discs as solutions of a nonlinear
//! Riemann-Hilbert problem over the unit circle, analyzes the linearized
//! problem (boundary matrix, partial indices, Maslov index, kernel bases),
//! runs a Gauss-Newton continuation solver for perturbed quadrics, and
//! exploits the resulting disc families geometrically: center maps, 1-jet
//! maps and their recovery, anisotropic dilations, push-forwards under
//! polynomial CR automorphisms, and the 2-jet determination experiment.
//!
//! Grid loops run data-parallel on rayon when the `parallel` feature
//! (default) is enabled; disable it for a fully sequential build.

pub mod analysis;
pub mod conormal;
pub mod discs;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod rh_linear;
pub mod solver;

pub use error::{Error, Result};
pub use num_complex::Complex64;
