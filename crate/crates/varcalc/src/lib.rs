//! Numerical workbench for variational calculus on simple Riemannian charts.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] — coordinate charts with diagonal metrics (unit spheres,
//!   flat boxes, a polar annulus), tensor-product Gauss–Legendre quadrature,
//!   finite-difference Christoffel symbols.
//! * [`fields`] — scalar and frame vector fields on a chart; intrinsic
//!   gradient, divergence and Laplace–Beltrami built from metric data.
//! * [`functionals`] — first-order energy functionals `∫ F(x, v, ∇v) dS`
//!   with optional boundary terms; Dirichlet and entropy-type built-ins.
//! * [`variations`] — Gateaux derivatives, Euler–Lagrange and Neumann
//!   residuals, second variations, and critical-point classification.
//! * [`reduced_odes`] — an adaptive Runge–Kutta integrator with dense
//!   output, the reduced entropy profile ODE on the 2-sphere, and radial
//!   harmonic profiles of the Laplace equation.
//! * [`geodesics`] — closed-form geodesics on the 2- and 3-sphere, a
//!   Christoffel-based shooting integrator, and curve diagnostics
//!   (length, planarity, tangential acceleration defect).
//! * [`battery`] — the self-check battery behind `varcalc verify-all`
//!   and the acceptance test suite.
//!
//! All numerics are deterministic: fixed quadrature orders, fixed summation
//! order, and seeded generators for every randomised check.

pub mod battery;
pub mod error;
pub mod fields;
pub mod functionals;
pub mod geodesics;
pub mod geometry;
pub mod reduced_odes;
pub mod variations;

pub use error::{Error, Result};
