//! Simulation of mechanical systems with several unactuated cyclic variables
//! under viscous damping-like forces.
//!
//! A symmetric, integrable damping matrix `k(x)` on the cyclic variables is
//! the Hessian of a potential `U`. The quantities `∂L/∂ẋ + ∂U/∂x` are first
//! integrals of the motion (the damping-added momenta), which turns the cyclic
//! dynamics into a first-order gradient-like flow. When the system starts at
//! rest and the shape variables come to a stop, the cyclic variables return to
//! where they started; under bounded shape velocity they stay bounded.
//!
//! Modules:
//! - [`system`], [`models`], [`generic`]: system descriptions
//! - [`conditions`], [`potential`]: damping checks and the `h`/`U`/`U_μ`
//!   hierarchy
//! - [`dynamics`], [`integrate`]: equations of motion, momenta, RK4
//! - [`control`]: partial feedback linearisation and PD tracking
//! - [`scenario`], [`plot`]: configuration-driven runs, metrics, exports

pub mod conditions;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod generic;
pub mod integrate;
pub mod models;
pub mod numeric;
pub mod plot;
pub mod potential;
pub mod scenario;
pub mod system;

pub use error::{Error, Result};
pub use system::{DimensionSplit, GeneralizedState, MechanicalSystem};
