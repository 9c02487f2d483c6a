//! Boundary blow-up asymptotics for `Δ_p u = a(x) f(u)`.

pub mod error;
pub mod config;
pub mod expansion;
pub mod expr;
pub mod geometry;
pub mod harness;
pub mod karamata;
pub mod limits;
pub mod quad;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
