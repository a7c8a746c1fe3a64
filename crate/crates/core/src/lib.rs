//! Analytic theory, simulation, and plasticity for spike-pattern detection
//! with leaky integrate-and-fire coincidence detectors.
//!
//! The crate answers three related questions about a neuron listening to N
//! Poisson afferents that occasionally replay fixed spike patterns:
//!
//! - **analytic**: closed forms for the expected peak response, the background
//!   potential statistics, and the resulting signal-to-noise ratio of an ideal
//!   subsection detector; [`optimizer`] maximizes that SNR over the membrane
//!   time constant and the detected subsection length, and extends it to
//!   graded per-window weights.
//! - **simulator**: event- and clock-driven leaky integration of generated
//!   spike streams, used to validate the closed forms empirically.
//! - **stdp**: spike-timing-dependent plasticity with an adaptive threshold,
//!   showing that unsupervised learning finds the same detectors.
//!
//! Determinism is explicit everywhere: all stochastic entry points take an
//! [`RngStream`], and derived streams are labelled by [`StreamKind`] so
//! parallel work never shares generator state.

pub mod analytic;
mod error;
pub mod optimizer;
mod params;
mod rng;
pub mod simulator;
mod spikes;
pub mod stdp;

pub use error::{Error, Result};
pub use optimizer::{GradedProfile, OptimalDetector, SweepCell, SweepGrid};
pub use params::{validate, DetectorConfig, ProblemParams};
pub use rng::{RngStream, StreamKind};
pub use simulator::{
    AveragingReport, AveragingSample, EmpiricalSnr, Engine, LifIntegration, TracePoint,
    TrialProtocol,
};
pub use spikes::{Pattern, SpikeEvent, SpikeStream};
pub use stdp::{
    GridCell, GridSearchReport, LearnOptions, LearningOutcome, PlasticState, StdpConfig,
};

pub use analytic::SnrBreakdown;
