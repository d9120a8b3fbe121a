//! Quasi-static evolution of ferroelectric materials with internal variables.

pub mod convex;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod material;
pub mod rothe;
pub mod scenario;
pub mod sim;
pub mod young;

pub use error::{Error, Result, Violation};
