//! Wasserstein quantum GAN for synthetic financial return series.
//!
//! The generator is an expectation-value sampler: a layered parameterized
//! quantum circuit fed with uniform noise, whose single-qubit `<X>` and `<Z>`
//! expectations form one window of a (pre-processed) return series. It is
//! simulated either exactly ([`statevector`]) or as a truncated matrix
//! product state ([`mps`]), and trained against a 1-D convolutional critic
//! ([`critic`]) with a gradient penalty ([`trainer`]).
//!
//! [`pipeline`] maps price data into the generator's `[-1, 1]` range and
//! back, and [`metrics`] scores generated series on heavy tails, linear
//! autocorrelation, volatility clustering and the leverage effect.

pub mod adam;
pub mod autodiff;
pub mod circuit;
pub mod critic;
pub mod gradient;
pub mod metrics;
pub mod mps;
pub mod pipeline;
pub mod rng;
pub mod statevector;
pub mod trainer;

pub use circuit::{CircuitSpec, Gate, GateProgram, NoiseVector, ParameterSet, Topology};
pub use critic::{CriticConfig, CriticParameters};
pub use metrics::MetricsReport;
pub use mps::MpsState;
pub use pipeline::{NormStats, PipelineConfig, PriceSeries, ReturnSeries, WindowBatch};
pub use statevector::{ExpectationVector, Statevector};
pub use trainer::{Backend, TrainConfig, TrainLog, Trainer};

/// Complex amplitude type shared by both simulators.
pub type C64 = num_complex::Complex<f64>;
