//! Reduced-order coronary contrast simulator and deep-ensemble inference of
//! microvascular indices (IMR, CFR) from contrast intensity profiles.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod cip;
pub mod dataset;
pub mod design;
pub mod error;
pub mod export;
pub mod hemo;
pub mod indices;
pub mod lpm;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod transport;
pub mod units;
pub mod vessel;

pub use error::{Error, Result};
