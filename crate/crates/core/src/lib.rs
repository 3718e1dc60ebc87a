pub mod assembly;
pub mod discrete_operators;
pub mod error;
pub mod experiment;
pub mod field;
pub mod mesh;
pub mod noise;
mod polar;
pub mod postproc;
pub mod stepper;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
