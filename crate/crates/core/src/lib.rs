//! Task-driven scanpath simulation and evaluation.
//!
//! The crate covers the whole pipeline: foveated stimuli
//! ([`foveation`]), pluggable image/text encoders ([`embedding`]), the
//! gradient-driven scanpath generator ([`engine`]), reference generators
//! ([`baselines`]), scanpath plausibility metrics ([`metrics`]), dataset
//! ingestion and statistics ([`dataset`]) and the configuration-driven
//! experiment runner ([`experiment`]).

pub mod baselines;
pub mod dataset;
pub mod density;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod foveation;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
pub use model::{EngineParams, Fixation, Observation, Scanpath, ScanpathSource, Stimulus};
