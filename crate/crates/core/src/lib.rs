//! Video question answering and temporal grounding with a tool-using
//! multimodal model. Interval arithmetic, retrieval scores and metrics are
//! generic over [`scalar::Scalar`] (`f32` or `f64`); the aliases below fix
//! the precision.

pub mod agent;
pub mod backends;
pub mod config;
pub mod eval;
pub mod frame;
pub mod ingest;
pub mod interval;
pub mod memory;
pub mod render;
pub mod retrieve;
pub mod scalar;
pub mod synthetic;

pub use scalar::Scalar;

/// Seconds in single precision.
pub type Seconds32 = f32;
/// Seconds in double precision.
pub type Seconds64 = f64;

pub type Interval32 = interval::Interval<f32>;
pub type Interval64 = interval::Interval<f64>;
pub type IntervalSet32 = interval::IntervalSet<f32>;
pub type IntervalSet64 = interval::IntervalSet<f64>;
pub type Embedding32 = retrieve::Embedding<f32>;
pub type Embedding64 = retrieve::Embedding<f64>;
pub type ClipScore32 = retrieve::ClipScore<f32>;
pub type ClipScore64 = retrieve::ClipScore<f64>;
