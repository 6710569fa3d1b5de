//! Trajectory prediction with graph-isomorphism aggregation over per-frame
//! subject graphs and an attentive convolutional predictor.

mod codec;
pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
