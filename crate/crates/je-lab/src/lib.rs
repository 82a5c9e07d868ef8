//! Numerical laboratory for non-decaying solutions of the Johnson equation
//! (JE-I, the cylindrical Kadomtsev-Petviashvili equation with alpha = i).
//!
//! Solutions are built by a dressing-type scheme: a kernel F(x, z, y, t) is
//! synthesized from a measure on a spectral strip, the Marchenko integral
//! equation K + F + integral K F = 0 is solved on a truncated half-line, and
//! the field is recovered as v = 2 d/dx K(x, x, y, t). Companion modules
//! evaluate the closed-form one-soliton, the asymptotic soliton train with
//! its Gram-determinant phase shifts, and a degenerate-kernel
//! log-determinant mid-fidelity path, so the four routes can be compared on
//! a common grid.

pub mod asymptotics;
pub mod cache;
pub mod error;
pub mod gauss;
pub mod kernel;
pub mod linalg;
pub mod marchenko;
pub mod measure;
pub mod scenario;
pub mod search;
pub mod solution;
pub mod spectral;
pub mod stencil;

pub use error::{Error, Result};
