use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ndarray::{Array3, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::{
    apply_filter_bank, generate_inhibition_kernel, intensity_lateral_inhibition,
    intensity_to_latency_grid, local_normalization, FilterBank, InhibitionKernel,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{LatencyGrid, TimeConfig};
use crate::textfmt::{load_tensor, save_tensor, write_atomic};

use super::config::EncodingConfig;
use super::network::Network;
use super::sparse::SparseSpikes;

/// Image → latency chain: filter bank, local normalization, optional
/// intensity lateral inhibition, rank-order latencies.
#[derive(Debug, Clone)]
pub struct InputTransform<T> {
    config: EncodingConfig,
    t_max: TimeConfig,
    bank: FilterBank<T>,
    inhibition: Option<InhibitionKernel<T>>,
}

impl<T: Scalar> InputTransform<T> {
    pub fn new(config: &EncodingConfig, t_max: TimeConfig) -> Result<Self> {
        let bank = FilterBank::from_specs(
            &config.kernels,
            config.padding,
            T::from_f64_lossy(config.threshold),
        )?;
        let inhibition = config
            .lateral_inhibition
            .as_deref()
            .map(generate_inhibition_kernel)
            .transpose()?;
        Ok(Self {
            config: config.clone(),
            t_max,
            bank,
            inhibition,
        })
    }

    pub fn t_max(&self) -> TimeConfig {
        self.t_max
    }

    pub fn intensities(&self, image: ArrayView2<u8>) -> Result<Array3<T>> {
        let img = image.mapv(|v| T::from_f64_lossy(f64::from(v)));
        let filtered = apply_filter_bank(img.view(), &self.bank)?;
        let normed = local_normalization(
            filtered.view(),
            self.config.norm_radius,
            self.config.norm_epsilon,
        )?;
        Ok(match &self.inhibition {
            Some(k) => intensity_lateral_inhibition(normed.view(), k),
            None => normed,
        })
    }

    pub fn encode(&self, image: ArrayView2<u8>) -> Result<LatencyGrid> {
        Ok(intensity_to_latency_grid(
            self.intensities(image)?.view(),
            self.t_max,
        ))
    }

    /// Hex SHA-256 of every parameter that influences the output, including
    /// the scalar width.
    pub fn fingerprint(&self) -> String {
        let params = serde_json::json!({
            "encoding": self.config,
            "t_max": self.t_max,
            "scalar_bits": std::mem::size_of::<T>() * 8,
        });
        hex::encode(Sha256::digest(params.to_string().as_bytes()))
    }
}

/// A stream of labelled stimuli entering the network at `entry_stage`
/// (1 = encoded images; 3 = decision-layer input).
pub trait SampleSource<T: Scalar>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn entry_stage(&self) -> usize;

    fn spikes(&self, index: usize) -> Result<SparseSpikes>;

    fn label(&self, index: usize) -> usize;

    /// Errors when the samples were derived from weights the network no
    /// longer has.
    fn check_network(&self, _net: &Network<T>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheMode {
    Memory,
    Disk(PathBuf),
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Manifest {
    transform: String,
    data: String,
    count: usize,
}

#[derive(Debug)]
enum Store {
    Memory(Vec<OnceLock<SparseSpikes>>),
    Disk(PathBuf),
}

/// Images plus their encoded form, computed on first access and kept in
/// memory or in a directory of text tensors.
///
/// The disk layout is `manifest.json` plus one `sample_NNNNNN.txt` per
/// image holding its latency grid (`-1` for neurons that stay silent). A
/// manifest whose fingerprints disagree with the current transform or images
/// causes every cached sample to be discarded.
#[derive(Debug)]
pub struct CachedDataset<T> {
    transform: InputTransform<T>,
    images: Array3<u8>,
    labels: Vec<usize>,
    store: Store,
}

pub fn data_fingerprint(images: &Array3<u8>, labels: &[usize]) -> String {
    let mut h = Sha256::new();
    for d in images.shape() {
        h.update((*d as u64).to_le_bytes());
    }
    h.update(images.as_standard_layout().as_slice().expect("standard layout"));
    for l in labels {
        h.update((*l as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl<T: Scalar> CachedDataset<T> {
    pub fn new(
        transform: InputTransform<T>,
        images: Array3<u8>,
        labels: Vec<usize>,
        mode: CacheMode,
    ) -> Result<Self> {
        if images.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} images",
                labels.len(),
                images.shape()[0]
            )));
        }
        let store = match mode {
            CacheMode::Memory => Store::Memory((0..labels.len()).map(|_| OnceLock::new()).collect()),
            CacheMode::Disk(dir) => {
                let manifest = Manifest {
                    transform: transform.fingerprint(),
                    data: data_fingerprint(&images, &labels),
                    count: labels.len(),
                };
                prepare_dir(&dir, &manifest)?;
                Store::Disk(dir)
            }
        };
        Ok(Self {
            transform,
            images,
            labels,
            store,
        })
    }

    pub fn transform(&self) -> &InputTransform<T> {
        &self.transform
    }

    fn encode(&self, i: usize) -> Result<SparseSpikes> {
        let grid = self
            .transform
            .encode(self.images.index_axis(ndarray::Axis(0), i))?;
        Ok(SparseSpikes::from_grid(&grid))
    }

    /// Encodes every sample not cached yet, in parallel.
    pub fn prefetch(&self) -> Result<()> {
        (0..self.len())
            .into_par_iter()
            .try_for_each(|i| self.spikes(i).map(|_| ()))
    }
}

fn sample_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("sample_{i:06}.txt"))
}

fn prepare_dir(dir: &Path, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    let current = fs::read(&path)
        .ok()
        .and_then(|b| serde_json::from_slice::<Manifest>(&b).ok());
    if current.as_ref() == Some(manifest) {
        return Ok(());
    }
    if current.is_some() {
        log::info!("cache fingerprint changed, clearing {}", dir.display());
    }
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("sample_") && name.ends_with(".txt") {
            fs::remove_file(&p)?;
        }
    }
    write_atomic(&path, serde_json::to_string_pretty(manifest)?.as_bytes())
}

impl<T: Scalar> SampleSource<T> for CachedDataset<T> {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn entry_stage(&self) -> usize {
        1
    }

    fn spikes(&self, i: usize) -> Result<SparseSpikes> {
        if i >= self.len() {
            return Err(Error::invalid(format!("sample {i} out of range (< {})", self.len())));
        }
        match &self.store {
            Store::Memory(slots) => {
                if let Some(s) = slots[i].get() {
                    return Ok(s.clone());
                }
                let s = self.encode(i)?;
                // a concurrent writer computed the same value
                let _ = slots[i].set(s.clone());
                Ok(s)
            }
            Store::Disk(dir) => {
                let path = sample_path(dir, i);
                if path.exists() {
                    return SparseSpikes::from_tensor(&load_tensor::<f64>(&path)?);
                }
                let s = self.encode(i)?;
                save_tensor(s.to_tensor().view(), &path)?;
                Ok(s)
            }
        }
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

/// Samples held in memory, typically the output of a frozen network prefix.
#[derive(Debug, Clone)]
pub struct MemorySource {
    entry_stage: usize,
    samples: Vec<SparseSpikes>,
    labels: Vec<usize>,
    /// Checksum of the stages before `entry_stage` these samples came from.
    prefix_checksum: Option<String>,
}

impl MemorySource {
    pub fn new(entry_stage: usize, samples: Vec<SparseSpikes>, labels: Vec<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.len()
            )));
        }
        if !(1..=super::config::STAGES).contains(&entry_stage) {
            return Err(Error::invalid(format!("no stage {entry_stage}")));
        }
        Ok(Self {
            entry_stage,
            samples,
            labels,
            prefix_checksum: None,
        })
    }

    /// Runs `source` through the network up to (not including)
    /// `entry_stage` and keeps the result. Valid only while those stages
    /// keep their weights, which [`SampleSource::check_network`] enforces.
    pub fn from_prefix<T: Scalar, S: SampleSource<T> + ?Sized>(
        net: &Network<T>,
        source: &S,
        entry_stage: usize,
    ) -> Result<Self> {
        source.check_network(net)?;
        let from = source.entry_stage();
        if entry_stage < from {
            return Err(Error::invalid(format!(
                "cannot cache stage {entry_stage} input from stage {from} samples"
            )));
        }
        let t_max = net.config().t_max;
        let samples = (0..source.len())
            .into_par_iter()
            .map(|i| {
                let s = source.spikes(i)?.to_spikewave::<T>(t_max)?;
                let out = net.propagate(from, entry_stage, &s)?;
                Ok(SparseSpikes::from_spikewave(&out))
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..source.len()).map(|i| source.label(i)).collect();
        let mut me = Self::new(entry_stage, samples, labels)?;
        me.prefix_checksum = Some(net.checksum(1..entry_stage));
        Ok(me)
    }

    pub fn samples(&self) -> &[SparseSpikes] {
        &self.samples
    }
}

impl<T: Scalar> SampleSource<T> for MemorySource {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn entry_stage(&self) -> usize {
        self.entry_stage
    }

    fn spikes(&self, i: usize) -> Result<SparseSpikes> {
        self.samples
            .get(i)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("sample {i} out of range (< {})", self.samples.len())))
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn check_network(&self, net: &Network<T>) -> Result<()> {
        match &self.prefix_checksum {
            Some(sum) if *sum != net.checksum(1..self.entry_stage) => Err(Error::invalid(format!(
                "cached stage {} inputs are stale: earlier stages changed since caching",
                self.entry_stage
            ))),
            _ => Ok(()),
        }
    }
}
