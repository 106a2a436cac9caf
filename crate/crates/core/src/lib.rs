//! Neuromorphic activity recognition from wearable sensor streams.
//!
//! The crate covers the whole path from raw IMU and body-capacitance
//! recordings to a classified activity:
//!
//! * [`ingest`] loads CSV recordings, resamples them and cuts windows;
//! * [`encoder`] turns each window into multi-threshold delta-modulated spikes;
//! * [`snn`] runs a quantized CUBA-LIF network with a dense reference backend
//!   and an event-driven backend;
//! * [`trainer`] fits weights and axonal delays with a surrogate gradient;
//! * [`profiler`] counts synaptic operations and derives energy, latency and
//!   energy-delay product;
//! * [`pipeline`] wires the stages together and generates synthetic data.

pub mod config;
pub mod encoder;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod profiler;
pub mod snn;
pub mod trainer;

pub use error::{Error, Result};
