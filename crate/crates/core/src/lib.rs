//! Numerics for a two-dimensional bistable diffusion whose two coordinates
//! share one scalar Brownian motion and whose noise amplitude is affine in `x`.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and parallel ensembles live in the `metastab` companion crate.
//!
//! Modules:
//! - [`model`]: parameters, drift, diffusion, generator, bracket determinant
//! - [`simulate`]: Euler–Maruyama, RK4 flow and control integration, occupation
//! - [`lyapunov`]: drift-condition certificates for `W = 1 + x⁴ + αy²`
//! - [`action`]: the scalar action functional and its closed-form extremals
//! - [`quasipotential`]: passage costs, cost matrix, W-graph costs, limit measure

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod action;
pub mod lyapunov;
pub mod model;
pub mod numerics;
pub mod quasipotential;
pub mod simulate;

pub use action::{ActionValue, Direction, ScalarPath};
pub use lyapunov::LyapunovCertificate;
pub use model::{Params, RawParams, State};
pub use quasipotential::{CostMatrix, LimitMeasure, WellCosts};
pub use simulate::{OccupationHistogram, Region, SimConfig, Trajectory};
