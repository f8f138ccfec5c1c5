//! Trace-driven DASH adaptation simulator with crowd-sourced, location-aware
//! bandwidth prediction.
//!
//! A vehicle streams a segmented video while driving a route. Past users'
//! throughput measurements, binned along the route, predict the bandwidth
//! ahead of the vehicle; several adaptation rules use that prediction (or
//! classic throughput history) to pick the next segment's bitrate, and each
//! session is scored with an eMOS quality model.
//!
//! With the default `parallel` feature, experiment sweeps run on rayon;
//! without it they run sequentially with identical results.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod crowd;
pub mod error;
pub mod estimators;
pub mod field;
pub mod harness;
pub mod media;
pub mod qoe;
pub mod sim;
pub mod stats;

pub use adaptation::{AdaptationLogic, Algorithm, AlgorithmParams, Decision, DecisionContext};
pub use crowd::{CrowdMap, CrowdSample, RouteProfile, TimeBucket};
pub use error::{Error, Result};
pub use estimators::{BandwidthEstimate, EstimateSource};
pub use field::{ConstantField, FnField, GridField, NetworkField};
pub use harness::{run_matrix, ExperimentConfig, RouteSpec};
pub use media::{Manifest, Representation};
pub use qoe::{QoeParams, SessionReport};
pub use sim::{run_session, MobilityModel, SimConfig};
