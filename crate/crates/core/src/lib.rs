// Validation uses negated float comparisons so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bm_bcd;
pub mod engine;
pub mod error;
pub mod esdp_bcd;
pub mod model;
pub mod numerics;
pub mod recover;

pub use error::{Error, Result};
