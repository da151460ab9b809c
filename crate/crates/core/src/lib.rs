//! Economic Complexity metrics and the dynamics of products on the ranked
//! Complexity–logPRODY plane.
//!
//! The crate is organized as a pipeline of independent stages:
//! [`ingest`] → [`metrics`] → [`plane`] → [`fields`] → [`market`], with [`synth`]
//! providing generators with known ground truth and [`pipeline`] tying the stages
//! together with file-based artifacts.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod fields;
pub mod ingest;
pub mod market;
pub mod metrics;
pub mod pipeline;
pub mod plane;
pub mod stats;
pub mod synth;
