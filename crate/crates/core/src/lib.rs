//! Dirac constraint analysis of the two-dimensional time-dependent damped
//! harmonic oscillator in extended phase space.
//!
//! - [`expr`]: exact symbolic expressions, parser, charts and coefficient atoms.
//! - [`brackets`]: Poisson and Dirac brackets, Hamilton equations.
//! - [`constraints`]: Hessians, Legendre transform, constraint classification, gauge fixing.
//! - [`dynamics`]: integrators for the original and the gauge-fixed extended flows.
//! - [`invariants`]: Ermakov-Pinney auxiliary equation and the Lewis-Riesenfeld invariant.
//! - [`canonical`]: extended-phase-space canonical transformations and their symplectic check.

pub mod brackets;
pub mod canonical;
pub mod constraints;
pub mod dynamics;
pub mod expr;
pub mod invariants;
pub mod numeric;
