//! Simulation engine for convolutional spiking neural networks in which each
//! neuron fires at most once per stimulus.
//!
//! Spikes travel between layers as accumulative spike-wave tensors
//! ([`SpikeWave`]), layers produce accumulative [`Potentials`], and learning
//! uses STDP or reward-modulated STDP restricted to winners-take-all picks.
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the element type for the common cases.

pub mod encoding;
pub mod error;
pub mod idx;
pub mod layers;
pub mod pipeline;
pub mod plasticity;
pub mod scalar;
pub mod tensor;
pub mod textfmt;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{
    latencies_to_spikewave, spikewave_to_latencies, validate, LatencyGrid, Potentials, SpikeTime,
    SpikeWave, TimeConfig, TimeTensor,
};

pub type SpikeWaveF32 = SpikeWave<f32>;
pub type SpikeWaveF64 = SpikeWave<f64>;
pub type PotentialsF32 = Potentials<f32>;
pub type PotentialsF64 = Potentials<f64>;
pub type ConvLayerF32 = layers::ConvLayer<f32>;
pub type ConvLayerF64 = layers::ConvLayer<f64>;
pub type NetworkF32 = pipeline::Network<f32>;
pub type NetworkF64 = pipeline::Network<f64>;
