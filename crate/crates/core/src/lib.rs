//! Dual-engine toolkit for PDE-constrained optimal control on periodic and
//! rectangular domains.
//!
//! Two independent engines solve the same control problems:
//!
//! * a physics-informed neural network (PINN) engine that trains multilayer
//!   perceptrons against a composite residual/boundary/initial/cost loss,
//!   differentiated with a from-scratch Taylor-mode + reverse-mode autodiff;
//! * a classical engine built on spectral and finite-difference solvers with
//!   adjoint-based gradient descent (direct-adjoint looping, DAL).
//!
//! Both engines produce control fields that are cross-validated by re-solving
//! the governing equations at high fidelity and evaluating the cost objective.

pub mod adjoint;
pub mod autodiff;
pub mod error;
pub mod linesearch;
pub mod network;
pub mod pinn;
pub mod problems;
pub mod sampling;
pub mod solvers;

pub use error::{Error, Result};
