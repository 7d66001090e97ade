// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod framing;
pub mod locgam;
pub mod model;
pub mod pitchdata;
pub mod runvalue;
pub mod sampler;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
