//! The three-stage digit network: configuration, forward passes, layer-wise
//! STDP, R-STDP, evaluation and dataset caching.

pub mod config;
pub mod dataset;
pub mod network;
pub mod seed;
pub mod sparse;
pub mod train;

pub use config::{EncodingConfig, NetworkConfig, StageConfig, StageGeometry, STAGES};
pub use dataset::{data_fingerprint, CacheMode, CachedDataset, InputTransform, MemorySource, SampleSource};
pub use network::{weight_file, Decision, Network};
pub use seed::{derive_seed, epoch_seed, splitmix64};
pub use sparse::SparseSpikes;
pub use train::{
    decisions, evaluate, train_rl, train_rl_epochs, train_rl_traced, train_unsupervised,
    BestCheckpoint, EvalTally, LrSchedule, RlAction, RlEvent, RlOptions, TrainState,
    UnsupervisedOptions,
};
