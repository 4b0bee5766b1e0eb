//! Forward and inverse spectral computations for
//! `-y'' + q y = lambda r y` on `(0, T)` with a piecewise-constant complex
//! weight `r`, Robin boundary conditions and a transmission condition at `b`.

pub mod error;
pub mod model;
pub mod forward;
pub mod ode;
pub mod recovery;
pub mod inverse;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
pub use model::{validate_problem, DerivedConstants, Potential, ProblemSpec, ValidationMode, C64};
