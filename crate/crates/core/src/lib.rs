pub mod adjoint;
pub mod control;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod linearized;
pub mod state;
pub mod validation;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
