#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod capacity;
pub mod data;
pub mod envsim;
pub mod erm;
pub mod error;
pub mod family;
pub mod kernel;
pub mod learner;

pub use error::{Error, Result};
