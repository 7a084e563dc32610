//! Coupling-pulse optimization for optomechanical entanglement.
//!
//! A laser-driven cavity mode and a mechanical resonator, linearly coupled at
//! a tunable rate `g(t)` with `|g| <= G`, evolve from the two-mode vacuum.
//! In normalized units the second-moment dynamics reduce to a three-variable
//! system `(q1, q2, q3)` living on the upper sheet of a hyperboloid once
//! lifted by `j0 = sqrt(1 + q1^2 + q2^2 + q3^2)`. Driving `(q2, q3)` back to
//! zero while making `q1 = -sinh(2r)` as negative as possible maximizes the
//! two-mode squeezing parameter `r`, and with it the entanglement generated
//! in a fixed interaction time `T`.
//!
//! The crate provides:
//!
//! - [`dynamics`]: the reduced and full moment systems with a segment-exact
//!   fixed-step fourth-order integrator.
//! - [`geometry`]: the hyperboloid lift, Minkowski product, geodesic
//!   distance and entanglement-entropy measures.
//! - [`pmp`]: costate dynamics, switching function, singular-arc conditions
//!   and a verifier that certifies candidate optimal controls.
//! - [`solver`]: a direct-transcription optimizer (discrete adjoint +
//!   augmented Lagrangian) and a structure-exploiting switch-time solver,
//!   plus candidate enumeration and parameter sweeps.
//! - [`fock`]: an independent truncated number-basis Schroedinger oracle
//!   used to cross-validate every moment-level result.
//! - [`io`]: the CSV/JSON artifacts emitted by the command-line front end.
//!
//! With the default `parallel` feature, multi-starts, seed grids and sweep
//! points run on rayon; disabling it yields a fully sequential build with
//! identical outputs.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod fock;
pub mod geometry;
pub mod io;
pub mod pmp;
pub mod solver;

pub use control::{ControlProfile, Segment};
pub use dynamics::{MomentVector, Trajectory};
pub use error::OptomechError;
pub use geometry::{HyperboloidPoint, ReducedState};
pub use pmp::{Costate, PmpReport};
pub use solver::{SolveOptions, SolveResult, Structure};
