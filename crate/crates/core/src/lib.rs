#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dimension;
pub mod error;
pub mod fbl;
pub mod montecarlo;
pub mod quadrature;
pub mod rate;
pub mod specfun;

pub use error::{Error, Result};
