//! Spiking convolution, firing, pooling and competition.

mod competition;
mod conv;
mod fire;
mod pool;

pub use competition::{feature_inhibition, get_k_winners, pointwise_inhibition, Winner};
pub use conv::{conv_forward, conv_output_size, pad_spikewave, ConvLayer, WeightInit};
pub use fire::{fire, fire_infinite, threshold_cut};
pub use pool::{pool, PoolSpec};
