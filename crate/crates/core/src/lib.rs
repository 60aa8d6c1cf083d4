//! Aperture-robust, event-by-event optical flow for event-camera streams.
//!
//! Every event is processed as it arrives:
//!
//! 1. [`edl`] fits a plane to the same-polarity time surface around the event
//!    and turns its gradient into a local (edge-normal) flow.
//! 2. [`arms`] pools the recent local flows at a set of spatial scales, picks
//!    the scale with the largest mean speed and replaces the flow with the
//!    mean flow vector at that scale.
//!
//! [`pipeline`] strings the stages together over a stream; [`predict`],
//! [`metrics`] and [`synth`] provide forward prediction, evaluation and a
//! synthetic scene generator with exact ground truth.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type for the common cases.

pub mod arms;
pub mod bench;
pub mod config;
pub mod edl;
pub mod event;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod predict;
pub mod render;
pub mod scalar;
pub mod synth;

pub use event::{Event, Micros, Polarity, PolarityMode, SensorGeometry, SurfacePoint, TimeSurface};
pub use scalar::Scalar;

pub type FlowVector = flow::FlowVector<f64>;
pub type FlowVectorF32 = flow::FlowVector<f32>;
pub type LocalFlow = flow::LocalFlow<f64>;
pub type LocalFlowF32 = flow::LocalFlow<f32>;
pub type FlowSurface = flow::FlowSurface<f64>;
pub type FlowSurfaceF32 = flow::FlowSurface<f32>;
pub type PlaneParams = edl::PlaneParams<f64>;
pub type ScaleReport = arms::ScaleReport<f64>;
pub type Pipeline = pipeline::Pipeline<f64>;
pub type PipelineF32 = pipeline::Pipeline<f32>;


