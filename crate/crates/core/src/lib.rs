//! Renormalization-group analysis of nonlinear heat-type flows with
//! time-dependent diffusion.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod fourier;
pub mod io;
pub mod interp;
pub mod kernel;
pub mod linear;
pub mod nonlinear;
pub mod par;
pub mod rg;
pub mod space;
pub mod timescale;

pub use error::{Result, RgError};
pub use kernel::KernelSpec;
pub use space::{Interp, SampledFunction, SpaceConfig};
pub use timescale::TimeScale;
