use ndarray::{Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{LatencyGrid, SpikeTime, SpikeWave, TimeConfig};

/// First-spike times of the neurons that fire, in row-major order.
///
/// A stimulus is a few kilobytes this way instead of a dense
/// `t_max × F × H × W` tensor, which is what makes caching whole datasets
/// affordable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseSpikes {
    shape: [usize; 3],
    index: Vec<u32>,
    time: Vec<u16>,
}

impl SparseSpikes {
    pub fn from_grid(grid: &LatencyGrid) -> Self {
        let shape = grid.shape();
        let mut index = Vec::new();
        let mut time = Vec::new();
        for (i, t) in grid.times().iter().enumerate() {
            if let Some(t) = t.get() {
                index.push(i as u32);
                time.push(t as u16);
            }
        }
        Self { shape, index, time }
    }

    pub fn from_spikewave<T: Scalar>(s: &SpikeWave<T>) -> Self {
        Self::from_grid(&s.latencies())
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spike_count(&self) -> usize {
        self.index.len()
    }

    /// `(flat index, time)` pairs, ascending by index.
    pub fn events(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.index
            .iter()
            .zip(&self.time)
            .map(|(&i, &t)| (i as usize, usize::from(t)))
    }

    pub fn to_grid(&self) -> LatencyGrid {
        let mut times = Array3::from_elem(self.shape, SpikeTime::NO_SPIKE);
        let flat = times.as_slice_mut().expect("standard layout");
        for (i, t) in self.events() {
            flat[i] = SpikeTime::at(t);
        }
        LatencyGrid::new(times)
    }

    pub fn to_spikewave<T: Scalar>(&self, cfg: TimeConfig) -> Result<SpikeWave<T>> {
        SpikeWave::from_latencies(&self.to_grid(), cfg)
    }

    /// Latencies as a real tensor with `-1` for silent neurons (the on-disk
    /// form).
    pub fn to_tensor(&self) -> ArrayD<f64> {
        let mut out = ArrayD::from_elem(IxDyn(&self.shape), -1.0);
        let flat = out.as_slice_mut().expect("standard layout");
        for (i, t) in self.events() {
            flat[i] = t as f64;
        }
        out
    }

    pub fn from_tensor(t: &ArrayD<f64>) -> Result<Self> {
        let shape: [usize; 3] = t
            .shape()
            .try_into()
            .map_err(|_| Error::invalid(format!("latency tensor must be rank 3, got {:?}", t.shape())))?;
        let mut index = Vec::new();
        let mut time = Vec::new();
        for (i, &v) in t.iter().enumerate() {
            if v == -1.0 {
                continue;
            }
            if !(v >= 0.0 && v <= f64::from(u16::MAX) && v.fract() == 0.0) {
                return Err(Error::invalid(format!("bad latency {v} at flat index {i}")));
            }
            index.push(i as u32);
            time.push(v as u16);
        }
        Ok(Self { shape, index, time })
    }
}
