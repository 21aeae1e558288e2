//! Image to spike-wave front end: filter banks, local normalization,
//! intensity lateral inhibition and rank-order latency coding.

mod kernels;
mod latency;
mod lateral;

pub use kernels::{
    apply_filter_bank, dog_value, gabor_value, make_dog_kernel, make_gabor_kernel, FilterBank,
    FilterKernel, KernelSpec,
};
pub use latency::{intensity_to_latency, intensity_to_latency_grid};
pub use lateral::{
    generate_inhibition_kernel, intensity_lateral_inhibition, local_normalization,
    InhibitionKernel, DEFAULT_NORM_EPSILON,
};
