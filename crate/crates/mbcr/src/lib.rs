//! Bayesian convex regression with max-affine models.
//!
//! A convex regression function is represented as the pointwise maximum of a
//! random number of hyperplanes. A reversible-jump MCMC sampler explores the
//! joint posterior over the number of pieces, their coefficients, and
//! per-piece noise variances; predictions average over the retained draws.
//! The crate also ships the classical least-squares convex regression
//! baseline (a quadratic program) and box-constrained minimization of fitted
//! surrogates (a linear program), plus a small CLI (`mbcr`) wrapping fit /
//! predict / bench / minimize.

pub mod bench;
pub mod cli;
pub mod conjugate;
pub mod core;
pub mod error;
pub mod predict;
pub mod proposals;
pub mod sampler;
pub mod solvers;

pub use error::{Error, Result};
