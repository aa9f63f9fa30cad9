//! p-adic computation of L-functions of toric exponential sums and of
//! unit-root L-functions attached to one-parameter Laurent families.

pub mod counting;
pub mod cone;
pub mod cyclo;
pub mod error;
pub mod family;
pub mod ffield;
pub mod fiber;
pub mod linalg;
pub mod sympow;
pub mod padic;
pub mod pipeline;

pub use error::{Error, Result};
