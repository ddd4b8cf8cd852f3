//! Finite-element laboratory for the coupled Stokes–Darcy problem with an interface
//! Lagrange multiplier: assembly, parameter-robust block preconditioning, fractional
//! interface operators, instrumented MINRES and deflation.

pub mod assembly;
pub mod element;
pub mod error;
pub mod experiments;
pub mod frac_interface;
pub mod mesh;
pub mod minres;
pub mod mms;
pub mod precond;
pub mod quadrature;
pub mod spaces;
pub mod spectrum;
pub mod sparse;

pub use error::{Error, Result};
